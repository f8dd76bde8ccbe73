"""Polar discretisation of the unit disk.

Layout
------
Radial nodes sit at ``r_i = (i + 1/2) dr`` for ``i = 0 .. n_r - 1`` with
``dr = 1 / (n_r + 1/2)``, so the boundary circle ``r = 1`` is the extra row
``i = n_r``.  A field is an array of shape ``(n_r + 1, n_theta)`` (scalar) or
``(n_r + 1, n_theta, N)`` (ambient); its last radial row is the boundary trace.
Arrays with only ``n_r`` rows are rejected with :class:`MissingTrace`.

Radial derivatives are second-order finite volumes on the faces ``r = k dr``;
angular derivatives are Fourier pseudo-spectral.  The discrete energy is the
face-based Dirichlet form and :meth:`DiskGrid.laplacian` is exactly minus its
gradient in the quadrature inner product, so summation by parts holds to
round-off for fields vanishing on the boundary.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import LinearSolveDiverged, MissingTrace, TraceMismatch, ZeroField


def _bc(a, ndim):
    """Reshape a radial vector so it broadcasts against a field with ``ndim`` axes."""
    return a.reshape(a.shape + (1,) * (ndim - 1))


@dataclass(frozen=True)
class DiskGrid:
    n_r: int
    n_theta: int

    def __post_init__(self):
        if self.n_r < 8:
            raise ValueError("n_r must be >= 8")
        if self.n_theta < 16 or self.n_theta % 2:
            raise ValueError("n_theta must be an even integer >= 16")

    # -- geometry -----------------------------------------------------------
    @cached_property
    def dr(self) -> float:
        return 1.0 / (self.n_r + 0.5)

    @cached_property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @cached_property
    def r(self) -> np.ndarray:
        """Interior node radii, all in (0, 1)."""
        return (np.arange(self.n_r) + 0.5) * self.dr

    @cached_property
    def r_all(self) -> np.ndarray:
        return np.append(self.r, 1.0)

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    @cached_property
    def r_face(self) -> np.ndarray:
        """Face radii ``k dr`` for ``k = 0 .. n_r``; face ``k`` separates rows ``k-1`` and ``k``."""
        return np.arange(self.n_r + 1) * self.dr

    @cached_property
    def strip_area(self) -> float:
        """Area factor of the boundary strip ``[1 - dr/2, 1]`` per unit angle."""
        return 0.5 * (1.0 - (self.n_r * self.dr) ** 2)

    @cached_property
    def strip_log(self) -> float:
        """``int r^{-1} dr`` over the boundary strip (weights the angular energy there)."""
        return -math.log(self.n_r * self.dr)

    @cached_property
    def radial_weights(self) -> np.ndarray:
        return np.append(self.r * self.dr, self.strip_area) * self.dtheta

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights, shape ``(n_r + 1, n_theta)``; they sum to pi."""
        return np.repeat(self.radial_weights[:, None], self.n_theta, axis=1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r + 1, self.n_theta)

    @cached_property
    def h_min(self) -> float:
        return min(self.dr, self.r[0] * self.dtheta)

    @cached_property
    def mu(self) -> np.ndarray:
        """Angular stiffness ``k^2`` per rfft mode, the Nyquist mode included."""
        return np.arange(self.n_theta // 2 + 1, dtype=float) ** 2

    # -- field helpers ------------------------------------------------------
    def check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.ndim < 2 or f.shape[1] != self.n_theta:
            raise ValueError(f"field of shape {f.shape} does not live on {self}")
        if f.shape[0] == self.n_r:
            raise MissingTrace("field has no boundary row; supply the trace at r = 1")
        if f.shape[0] != self.n_r + 1:
            raise ValueError(f"field of shape {f.shape} does not live on {self}")
        return f

    def with_trace(self, interior, trace) -> np.ndarray:
        interior = np.asarray(interior, dtype=float)
        trace = np.broadcast_to(np.asarray(trace, dtype=float), interior.shape[1:])
        return np.concatenate([interior, trace[None]], axis=0)

    def vanishing(self, interior) -> np.ndarray:
        """Append a zero boundary row to an interior-only field."""
        interior = np.asarray(interior, dtype=float)
        return self.with_trace(interior, np.zeros(interior.shape[1:]))

    def evaluate(self, func) -> np.ndarray:
        """Sample ``func(r, theta)`` on every node, the boundary row included."""
        R, T = np.meshgrid(self.r_all, self.theta, indexing="ij")
        return np.asarray(func(R, T), dtype=float)

    def polar_mesh(self):
        return np.meshgrid(self.r_all, self.theta, indexing="ij")

    def rotate(self, f, steps: int = 1) -> np.ndarray:
        """Rotate a field by ``steps`` angular grid increments."""
        return np.roll(f, steps, axis=1)

    # -- angular spectral calculus -------------------------------------------
    def d_theta(self, f) -> np.ndarray:
        """Spectral ``f_theta`` (the Nyquist mode has zero derivative)."""
        fh = np.fft.rfft(f, axis=1)
        k = np.arange(fh.shape[1])
        k[-1] = 0
        fh *= _bc(1j * k, fh.ndim - 1)[None]
        return np.fft.irfft(fh, n=self.n_theta, axis=1)

    def d_theta2(self, f) -> np.ndarray:
        fh = np.fft.rfft(f, axis=1)
        fh *= _bc(-self.mu, fh.ndim - 1)[None]
        return np.fft.irfft(fh, n=self.n_theta, axis=1)

    def _nyquist_sq(self, f) -> np.ndarray:
        """Per-row ``(n/2)^2 a_N^2`` summed over components, ``a_N`` the Nyquist amplitude."""
        sign = (-1.0) ** np.arange(self.n_theta)
        aN = np.tensordot(f, sign, axes=([1], [0])) / self.n_theta
        out = (self.n_theta / 2) ** 2 * aN**2
        return out.reshape(out.shape[0], -1).sum(axis=1)

    def _angular_sq(self, f) -> np.ndarray:
        """Node-wise ``|f_theta|^2`` consistent with the spectral angular stiffness."""
        ft = self.d_theta(f)
        s = ft * ft
        if s.ndim == 3:
            s = s.sum(axis=2)
        return s + self._nyquist_sq(f)[:, None]

    # -- operators ------------------------------------------------------------
    def _radial_diff(self, f) -> np.ndarray:
        """Face differences ``(f_k - f_{k-1}) / dr`` for faces ``k = 1 .. n_r``."""
        return np.diff(f, axis=0) / self.dr

    def gradient_sq(self, f) -> np.ndarray:
        """Node-wise ``|grad f|^2`` whose quadrature is exactly twice :meth:`energy`."""
        f = self.check(f)
        d = self._radial_diff(f)
        d2 = d * d
        if d2.ndim == 3:
            d2 = d2.sum(axis=2)
        ang = self._angular_sq(f)
        rf = self.r_face
        g = np.empty(self.shape)
        inner = np.zeros((self.n_r, self.n_theta))
        inner[1:] = rf[1 : self.n_r, None] * d2[: self.n_r - 1]
        outer = rf[1 : self.n_r + 1, None] * d2
        g[: self.n_r] = (inner + outer) / (2 * self.r[:, None]) + ang[: self.n_r] / self.r[:, None] ** 2
        g[self.n_r] = (
            0.5 * rf[self.n_r] * self.dr * d2[-1] + self.strip_log * ang[self.n_r]
        ) / self.strip_area
        return g

    def laplacian(self, f) -> np.ndarray:
        """Discrete Laplacian on interior rows; the boundary row of the result is 0."""
        f = self.check(f)
        d = self._radial_diff(f)
        rf = _bc(self.r_face[1:], f.ndim)
        flux = rf * d
        out = np.zeros_like(f)
        div = flux.copy()
        div[1:] -= flux[:-1]
        out[: self.n_r] = div / (_bc(self.r, f.ndim) * self.dr)
        out[: self.n_r] += self.d_theta2(f[: self.n_r]) / _bc(self.r, f.ndim) ** 2
        return out

    def integrate(self, s) -> float:
        s = np.asarray(s, dtype=float)
        if s.shape != self.shape:
            raise ValueError(f"scalar field must have shape {self.shape}, got {s.shape}")
        return float(np.sum(self.weights * s))

    def dirichlet_form(self, f, g) -> float:
        """Bilinear form ``int <grad f, grad g>`` polarising :meth:`energy`."""
        f = self.check(f)
        g = self.check(g)
        df = self._radial_diff(f)
        dg = self._radial_diff(g)
        prod = df * dg
        if prod.ndim == 3:
            prod = prod.sum(axis=2)
        radial = self.dr * self.dtheta * np.sum(self.r_face[1:, None] * prod)
        fh = np.fft.rfft(f, axis=1)
        gh = np.fft.rfft(g, axis=1)
        pw = (fh * gh.conj()).real
        if pw.ndim == 3:
            pw = pw.sum(axis=2)
        c = np.full(pw.shape[1], 2.0)
        c[0] = 1.0
        c[-1] = 1.0
        # Parseval: sum_j f_th g_th dtheta = 2 pi / n^2 sum_k c_k mu_k Re(fh gh*)
        per_row = (2 * math.pi / self.n_theta**2) * (pw * c * self.mu).sum(axis=1)
        ang_w = np.append(self.dr / self.r, self.strip_log)
        return float(radial + np.sum(ang_w * per_row))

    def energy(self, u) -> float:
        return 0.5 * self.integrate(self.gradient_sq(u))

    def l2_norm(self, f) -> float:
        f = self.check(f)
        s = f * f
        if s.ndim == 3:
            s = s.sum(axis=2)
        return math.sqrt(max(self.integrate(s), 0.0))

    def hardy_ratio(self, h) -> float:
        """``int h^2 / (1 - r)^2  /  int |grad h|^2`` for boundary-vanishing ``h``."""
        h = np.asarray(h, dtype=float)
        if h.shape[0] == self.n_r:
            h = self.vanishing(h)
        h = self.check(h)
        if np.any(h[self.n_r] != 0):
            raise ValueError("hardy_ratio needs a field whose boundary trace is identically 0")
        den = 2.0 * self.energy(h)
        if den <= 0.0:
            raise ZeroField("hardy_ratio of an identically zero field")
        h2 = h[: self.n_r] ** 2
        if h2.ndim == 3:
            h2 = h2.sum(axis=2)
        num = np.sum(self.weights[: self.n_r] * h2 / (1.0 - self.r[:, None]) ** 2)
        return float(num / den)

    def h1_distance(self, u, v) -> float:
        u = self.check(u)
        v = self.check(v)
        if not np.allclose(u[self.n_r], v[self.n_r], rtol=0.0, atol=1e-12):
            raise TraceMismatch("h1_distance needs equal boundary traces")
        w = u - v
        w[self.n_r] = 0.0
        return math.sqrt(self.l2_norm(w) ** 2 + 2.0 * self.energy(w))

    # -- pointwise stencils (reflection across the origin) --------------------
    def _ghost_inner(self, f):
        """Value at radius ``-r_0``: the first ring rotated by pi."""
        return np.roll(f[0], self.n_theta // 2, axis=0)

    def d_r(self, f) -> np.ndarray:
        """Centred ``f_r`` on interior rows, shape ``(n_r, n_theta, ...)``."""
        f = self.check(f)
        ext = np.concatenate([self._ghost_inner(f)[None], f], axis=0)
        return (ext[2:] - ext[:-2]) / (2 * self.dr)

    def d_rr(self, f) -> np.ndarray:
        f = self.check(f)
        ext = np.concatenate([self._ghost_inner(f)[None], f], axis=0)
        return (ext[2:] - 2 * ext[1:-1] + ext[:-2]) / self.dr**2

    def cartesian_gradient(self, f):
        """``(f_x1, f_x2)`` on interior rows."""
        f = self.check(f)
        fr = self.d_r(f)
        ft = self.d_theta(f[: self.n_r]) / _bc(self.r, f.ndim)
        c = np.cos(self.theta)[None, :]
        s = np.sin(self.theta)[None, :]
        if f.ndim == 3:
            c = c[..., None]
            s = s[..., None]
        return c * fr - s * ft, s * fr + c * ft

    def hessian_sq(self, f) -> np.ndarray:
        """Node-wise Frobenius ``|grad^2 f|^2`` on interior rows (summed over components)."""
        f = self.check(f)
        r = _bc(self.r, f.ndim)
        frr = self.d_rr(f)
        fr = self.d_r(f)
        ft = self.d_theta(f)
        ftt = self.d_theta2(f[: self.n_r])
        frt = self.d_r(ft)
        h_rr = frr
        h_rt = frt / r - ft[: self.n_r] / r**2
        h_tt = ftt / r**2 + fr / r
        s = h_rr**2 + 2 * h_rt**2 + h_tt**2
        if s.ndim == 3:
            s = s.sum(axis=2)
        return s

    # -- implicit heat step -----------------------------------------------------
    def heat_solver(self, dt: float) -> "ImplicitHeatSolver":
        return ImplicitHeatSolver(self, dt)


class ImplicitHeatSolver:
    """Direct solver for ``(I - dt Lap) x = b`` with Dirichlet data on ``r = 1``.

    The operator is diagonal in the angular Fourier modes, leaving one
    tridiagonal radial system per mode; the LU factors are computed once.
    """

    def __init__(self, grid: DiskGrid, dt: float, residual_tol: float = 1e-10):
        self.grid = grid
        self.dt = dt
        self.residual_tol = residual_tol
        g = grid
        rf = g.r_face
        scale = dt / (g.r * g.dr**2)
        lower = -scale * rf[: g.n_r]  # coefficient of x_{i-1}; zero on row 0
        upper = -scale * rf[1:]  # coefficient of x_{i+1}; row n_r-1 couples to the trace
        diag = 1.0 + scale * (rf[: g.n_r] + rf[1:])
        diag = diag[:, None] + dt * g.mu[None, :] / g.r[:, None] ** 2
        self.lower, self.upper, self.diag = lower, upper, diag
        self.boundary_coupling = -upper[-1]
        n = g.n_r
        denom = np.empty_like(diag)
        cp = np.empty_like(diag)
        denom[0] = diag[0]
        cp[0] = upper[0] / denom[0]
        for i in range(1, n):
            denom[i] = diag[i] - lower[i] * cp[i - 1]
            cp[i] = upper[i] / denom[i] if i < n - 1 else 0.0
        self._denom = denom
        self._cp = cp

    def _apply(self, xh):
        nd = xh.ndim
        out = _bc_mode(self.diag, nd) * xh
        out[1:] += _bc(self.lower[1:], nd) * xh[:-1]
        out[:-1] += _bc(self.upper[:-1], nd) * xh[1:]
        return out

    def solve(self, b, trace) -> np.ndarray:
        """Solve for interior rows given right-hand side ``b`` (interior rows) and the trace."""
        g = self.grid
        b = np.asarray(b, dtype=float).copy()
        b[-1] += self.boundary_coupling * np.asarray(trace, dtype=float)
        bh = np.fft.rfft(b, axis=1)
        nd = bh.ndim
        den = _bc_mode(self._denom, nd)
        cp = _bc_mode(self._cp, nd)
        lo = _bc(self.lower, nd)
        y = np.empty_like(bh)
        y[0] = bh[0] / den[0]
        for i in range(1, g.n_r):
            y[i] = (bh[i] - lo[i] * y[i - 1]) / den[i]
        x = y
        for i in range(g.n_r - 2, -1, -1):
            x[i] = y[i] - cp[i] * x[i + 1]
        res = np.linalg.norm(self._apply(x) - bh) / max(np.linalg.norm(bh), 1e-300)
        if not np.isfinite(res) or res > self.residual_tol:
            raise LinearSolveDiverged(f"heat solve relative residual {res:.3e}")
        self.last_residual = float(res)
        return np.fft.irfft(x, n=g.n_theta, axis=1)


def _bc_mode(a, ndim):
    """Broadcast a ``(n_r, modes)`` coefficient array against ``ndim``-axis mode data."""
    return a.reshape(a.shape + (1,) * (ndim - 2))


# -- serialisation --------------------------------------------------------------


def save_field(path, grid: DiskGrid, f) -> None:
    """CSV with columns ``i, j, r, theta, c0, c1, ...``; first line is a JSON grid header.

    Row ``i = n_r`` is the boundary trace (``r = 1``).
    """
    f = grid.check(f)
    comps = 1 if f.ndim == 2 else f.shape[2]
    flat = f.reshape(grid.n_r + 1, grid.n_theta, comps)
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps({"n_r": grid.n_r, "n_theta": grid.n_theta, "components": comps, "scalar": f.ndim == 2}) + "\n")
        w = csv.writer(fh)
        w.writerow(["i", "j", "r", "theta"] + [f"c{k}" for k in range(comps)])
        for i in range(grid.n_r + 1):
            ri = repr(float(grid.r_all[i]))
            for j in range(grid.n_theta):
                w.writerow([i, j, ri, repr(float(grid.theta[j]))] + [repr(float(v)) for v in flat[i, j]])


def load_field(path):
    """Inverse of :func:`save_field`; returns ``(grid, field)``."""
    path = Path(path)
    with path.open() as fh:
        header = json.loads(fh.readline()[1:])
        grid = DiskGrid(header["n_r"], header["n_theta"])
        rows = list(csv.reader(fh))[1:]
    comps = header["components"]
    f = np.empty((grid.n_r + 1, grid.n_theta, comps))
    for row in rows:
        f[int(row[0]), int(row[1])] = [float(v) for v in row[4:]]
    if header.get("scalar"):
        f = f[..., 0]
    return grid, f


def grid_header(grid: DiskGrid) -> dict:
    return {"n_r": grid.n_r, "n_theta": grid.n_theta}
