"""Embedded target manifolds M in R^N.

Every target exposes the same vectorised surface: nearest-point projection,
tangent/normal splitting, the second fundamental form ``A``, a bound on
``sup_M |A|`` and a constraint residual.  Points and tangent vectors are plain
ambient arrays whose last axis has length ``ambient_dim``.

The closed-form kinds (unit sphere, Clifford torus, torus of revolution) give
exact oracles; :class:`LevelSet` handles an arbitrary hypersurface
``{phi = 0}`` by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DegeneratePair, NotTangent, OutOfReach, Unsupported

TANGENCY_TOL = 1e-8


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _norm(a):
    return np.sqrt(np.sum(a * a, axis=-1))


class TargetManifold:
    """Common interface; subclasses implement the ``_``-prefixed primitives."""

    kind: str = "abstract"
    ambient_dim: int
    reach_estimate: float

    # -- primitives -----------------------------------------------------------
    def _project(self, p):
        """Return ``(q, ok)``; ``ok`` is False where projection is undefined."""
        raise NotImplementedError

    def normal_basis(self, u):
        """Orthonormal normal frame at ``u``, shape ``(..., codim, N)``."""
        raise NotImplementedError

    def _sff(self, u, X, Y):
        raise NotImplementedError

    def constraint_residual(self, p):
        raise NotImplementedError

    # -- public API ------------------------------------------------------------
    def project(self, p):
        p = np.asarray(p, dtype=float)
        q, ok = self._project(p)
        dist = _norm(p - q)
        bad = ~ok | (dist > self.reach_estimate * (1 + 1e-12))
        if np.any(bad):
            worst = float(np.max(np.where(ok, dist, np.inf)))
            raise OutOfReach(
                f"{np.count_nonzero(bad)} point(s) outside the projection reach "
                f"{self.reach_estimate:g} (max distance {worst:g})"
            )
        return q

    def normal_part(self, u, v):
        nb = self.normal_basis(u)
        coeff = np.einsum("...kn,...n->...k", nb, v)
        return np.einsum("...k,...kn->...n", coeff, nb)

    def tangent_project(self, u, v):
        v = np.asarray(v, dtype=float)
        return v - self.normal_part(u, v)

    def second_fundamental_form(self, u, X, Y):
        """``A_u(X, Y)``, a normal vector at ``u``; raises :class:`NotTangent`."""
        u = np.asarray(u, dtype=float)
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        for name, V in (("X", X), ("Y", Y)):
            res = _norm(self.normal_part(u, V))
            if np.any(res > TANGENCY_TOL * np.maximum(1.0, _norm(V))):
                raise NotTangent(f"{name} is not tangent at u (residual {np.max(res):.3e})")
        return self._sff(u, X, Y)

    def perp_ratio(self, x, y):
        """``|(x - y)^perp| / |x - y|^2`` with the normal part taken at ``y``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = x - y
        dn = _norm(d)
        if np.any(dn < 1e-14):
            raise DegeneratePair("perp_ratio needs |x - y| >= 1e-14")
        return _norm(self.normal_part(y, d)) / dn**2

    def intrinsic_distance(self, x, y):
        raise Unsupported(f"intrinsic distance is not available for {self.kind}")

    @property
    def sup_A(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int):
        """``n`` points on M (not necessarily uniformly distributed)."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class UnitSphere(TargetManifold):
    """Unit sphere S^{N-1} in R^N."""

    ambient_dim: int = 3
    kind = "unit_sphere"

    def __post_init__(self):
        if self.ambient_dim < 2:
            raise ValueError("ambient_dim must be >= 2")

    @property
    def reach_estimate(self) -> float:
        return 1.0

    def _project(self, p):
        n = _norm(p)
        ok = n > 1e-300
        safe = np.where(ok, n, 1.0)
        return p / safe[..., None], ok

    def normal_basis(self, u):
        return (np.asarray(u) / _norm(u)[..., None])[..., None, :]

    def tangent_project(self, u, v):
        v = np.asarray(v, dtype=float)
        return v - _dot(u, v)[..., None] * u

    def normal_part(self, u, v):
        return _dot(u, v)[..., None] * np.asarray(u)

    def _sff(self, u, X, Y):
        return -_dot(X, Y)[..., None] * u

    def constraint_residual(self, p):
        return np.abs(_norm(p) - 1.0)

    def intrinsic_distance(self, x, y):
        # 2 asin(chord/2) keeps full precision for nearby points
        c = _norm(np.asarray(x, float) - np.asarray(y, float))
        return 2.0 * np.arcsin(np.clip(c / 2.0, 0.0, 1.0))

    @property
    def sup_A(self) -> float:
        return 1.0

    def sample(self, rng, n):
        g = rng.standard_normal((n, self.ambient_dim))
        return g / _norm(g)[:, None]

    def to_config(self):
        return {"kind": self.kind, "dim": self.ambient_dim}


@dataclass(frozen=True)
class CliffordTorus(TargetManifold):
    """S^1(1/sqrt 2) x S^1(1/sqrt 2), a flat torus inside S^3 in R^4."""

    kind = "clifford_torus"
    radius: float = field(default=1 / math.sqrt(2.0), init=False)

    @property
    def ambient_dim(self) -> int:
        return 4

    @property
    def reach_estimate(self) -> float:
        return self.radius

    def _pairs(self, p):
        p = np.asarray(p, dtype=float)
        return p[..., 0:2], p[..., 2:4]

    def _project(self, p):
        a, b = self._pairs(p)
        na, nb = _norm(a), _norm(b)
        ok = (na > 1e-300) & (nb > 1e-300)
        na = np.where(ok, na, 1.0)
        nb = np.where(ok, nb, 1.0)
        q = np.concatenate([a / na[..., None], b / nb[..., None]], axis=-1) * self.radius
        return q, ok

    def normal_basis(self, u):
        a, b = self._pairs(u)
        z = np.zeros_like(a)
        na = a / _norm(a)[..., None]
        nb = b / _norm(b)[..., None]
        return np.stack(
            [np.concatenate([na, z], axis=-1), np.concatenate([z, nb], axis=-1)], axis=-2
        )

    def _sff(self, u, X, Y):
        ua, ub = self._pairs(u)
        Xa, Xb = self._pairs(X)
        Ya, Yb = self._pairs(Y)
        s = 1.0 / self.radius**2
        return -s * np.concatenate(
            [_dot(Xa, Ya)[..., None] * ua, _dot(Xb, Yb)[..., None] * ub], axis=-1
        )

    def constraint_residual(self, p):
        a, b = self._pairs(p)
        return np.maximum(np.abs(_norm(a) - self.radius), np.abs(_norm(b) - self.radius))

    def angles(self, p):
        a, b = self._pairs(p)
        return np.arctan2(a[..., 1], a[..., 0]), np.arctan2(b[..., 1], b[..., 0])

    def intrinsic_distance(self, x, y):
        ax, bx = self.angles(x)
        ay, by = self.angles(y)
        da = np.abs(np.angle(np.exp(1j * (ax - ay))))
        db = np.abs(np.angle(np.exp(1j * (bx - by))))
        return self.radius * np.hypot(da, db)

    @property
    def sup_A(self) -> float:
        return 1.0 / self.radius

    def point(self, alpha, beta):
        alpha = np.asarray(alpha, float)
        beta = np.asarray(beta, float)
        return self.radius * np.stack(
            [np.cos(alpha), np.sin(alpha), np.cos(beta), np.sin(beta)], axis=-1
        )

    def sample(self, rng, n):
        return self.point(rng.uniform(-np.pi, np.pi, n), rng.uniform(-np.pi, np.pi, n))

    def to_config(self):
        return {"kind": self.kind}


# Gauss-Legendre nodes on [0, 1] for segment lengths of parameter-space polylines
_GL_S = 0.5 + 0.5 * np.array([-math.sqrt(3 / 5), 0.0, math.sqrt(3 / 5)])
_GL_W = 0.5 * np.array([5 / 9, 8 / 9, 5 / 9])


@dataclass(frozen=True)
class TorusOfRevolution(TargetManifold):
    """Torus swept by a circle of radius ``r`` whose centre runs on a circle of radius ``R``."""

    R: float = 2.0
    r: float = 0.5
    kind = "torus_of_revolution"
    geodesic_segments: int = 24

    def __post_init__(self):
        if not (self.R > 0 and self.r > 0 and self.r < self.R):
            raise ValueError("torus of revolution needs 0 < r < R")

    @property
    def ambient_dim(self) -> int:
        return 3

    @property
    def reach_estimate(self) -> float:
        return min(self.r, self.R - self.r)

    def _core(self, p):
        rho = np.hypot(p[..., 0], p[..., 1])
        ok = rho > 1e-300
        rho_s = np.where(ok, rho, 1.0)
        c = np.stack(
            [self.R * p[..., 0] / rho_s, self.R * p[..., 1] / rho_s, np.zeros_like(rho)], axis=-1
        )
        return c, rho_s, ok

    def _project(self, p):
        c, _, ok = self._core(p)
        d = p - c
        dn = _norm(d)
        ok = ok & (dn > 1e-300)
        dn = np.where(ok, dn, 1.0)
        return c + self.r * d / dn[..., None], ok

    def _nu(self, u):
        c, _, _ = self._core(np.asarray(u, float))
        d = u - c
        return d / _norm(d)[..., None]

    def normal_basis(self, u):
        return self._nu(u)[..., None, :]

    def _sff(self, u, X, Y):
        c, rho, _ = self._core(u)
        nu = (u - c) / _norm(u - c)[..., None]
        e_rho = np.stack([u[..., 0] / rho, u[..., 1] / rho, np.zeros_like(rho)], axis=-1)
        Xh = X.copy()
        Xh[..., 2] = 0.0
        Yh = Y.copy()
        Yh[..., 2] = 0.0
        horiz = _dot(Xh, Yh) - _dot(X, e_rho) * _dot(Y, e_rho)
        coeff = -(_dot(X, Y) - (self.R / rho) * horiz) / self.r
        return coeff[..., None] * nu

    def constraint_residual(self, p):
        p = np.asarray(p, float)
        rho = np.hypot(p[..., 0], p[..., 1])
        return np.abs(np.hypot(rho - self.R, p[..., 2]) - self.r)

    @property
    def sup_A(self) -> float:
        return max(1.0 / self.r, 1.0 / (self.R - self.r))

    def point(self, psi, phi):
        psi = np.asarray(psi, float)
        phi = np.asarray(phi, float)
        a = self.R + self.r * np.cos(phi)
        return np.stack([a * np.cos(psi), a * np.sin(psi), self.r * np.sin(phi)], axis=-1)

    def angles(self, p):
        p = np.asarray(p, float)
        rho = np.hypot(p[..., 0], p[..., 1])
        return np.arctan2(p[..., 1], p[..., 0]), np.arctan2(p[..., 2], rho - self.R)

    def sample(self, rng, n):
        return self.point(rng.uniform(-np.pi, np.pi, n), rng.uniform(-np.pi, np.pi, n))

    def _energy_parts(self, psi, phi):
        """Discrete path energy ``sum a(phi_mid)^2 dpsi^2 + r^2 dphi^2`` with gradient and Hessian.

        Gradient and Hessian are taken with respect to the interior polyline nodes,
        ordered ``(psi_1, phi_1, psi_2, phi_2, ...)``.
        """
        P, n1 = psi.shape
        m = n1 - 1
        dpsi = np.diff(psi, axis=1)
        dphi = np.diff(phi, axis=1)
        mid = 0.5 * (phi[:, :-1] + phi[:, 1:])
        a = self.R + self.r * np.cos(mid)
        da = -self.r * np.sin(mid)
        dda = -self.r * np.cos(mid)
        E = np.sum(a**2 * dpsi**2 + self.r**2 * dphi**2, axis=1)
        # derivatives in the local variables (dpsi, dphi, mid) of each segment
        gq = np.stack([2 * a**2 * dpsi, 2 * self.r**2 * dphi, 2 * a * da * dpsi**2], axis=-1)
        Hq = np.zeros((P, m, 3, 3))
        Hq[..., 0, 0] = 2 * a**2
        Hq[..., 0, 2] = Hq[..., 2, 0] = 4 * a * da * dpsi
        Hq[..., 1, 1] = 2 * self.r**2
        Hq[..., 2, 2] = 2 * (da**2 + a * dda) * dpsi**2
        J = np.array([[-1.0, 0.0, 1.0, 0.0], [0.0, -1.0, 0.0, 1.0], [0.0, 0.5, 0.0, 0.5]])
        g_loc = gq @ J
        H_loc = J.T @ Hq @ J
        n = 2 * n1
        g = np.zeros((P, n))
        H = np.zeros((P, n, n))
        for k in range(m):
            sl = slice(2 * k, 2 * k + 4)
            g[:, sl] += g_loc[:, k]
            H[:, sl, sl] += H_loc[:, k]
        return E, g[:, 2:-2], H[:, 2:-2, 2:-2]

    def _branch_lengths(self, psi0, phi0, psi1, phi1):
        """Minimise the discrete path energy by damped Newton steps, batched over pairs."""
        m = self.geodesic_segments
        t = np.linspace(0.0, 1.0, m + 1)
        psi = psi0[:, None] + t * (psi1 - psi0)[:, None]
        phi = phi0[:, None] + t * (phi1 - phi0)[:, None]
        mu = np.full(len(psi0), 1e-3)
        E, g, H = self._energy_parts(psi, phi)
        eye = np.eye(g.shape[1])
        active = np.ones(len(psi0), dtype=bool)
        for _ in range(200):
            idx = np.nonzero(active)[0]
            if len(idx) == 0:
                break
            Ha, ga = H[idx], g[idx]
            scale = np.maximum(np.abs(np.diagonal(Ha, axis1=1, axis2=2)).max(axis=1), 1e-300)
            step = -np.linalg.solve(Ha + (mu[idx] * scale)[:, None, None] * eye, ga[..., None])[..., 0]
            psi_n = psi[idx].copy()
            phi_n = phi[idx].copy()
            psi_n[:, 1:-1] += step[:, 0::2]
            phi_n[:, 1:-1] += step[:, 1::2]
            E_n, g_n, H_n = self._energy_parts(psi_n, phi_n)
            better = E_n <= E[idx]
            tiny = better & (E[idx] - E_n <= 1e-15 * E[idx])
            acc = idx[better]
            psi[acc], phi[acc], E[acc], g[acc], H[acc] = psi_n[better], phi_n[better], E_n[better], g_n[better], H_n[better]
            mu[idx] = np.where(better, np.maximum(mu[idx] / 10, 1e-12), mu[idx] * 10)
            grad_ok = np.abs(g[idx]).max(axis=1) <= 1e-12 * np.maximum(E[idx], 1e-300)
            active[idx[tiny | grad_ok | (mu[idx] > 1e6)]] = False
        # exact length of the polyline mapped onto the torus (Gauss-Legendre per segment)
        dpsi = np.diff(psi, axis=1)[..., None]
        dphi = np.diff(phi, axis=1)[..., None]
        aq = self.R + self.r * np.cos(phi[:, :-1, None] + _GL_S * dphi)
        return np.sum(_GL_W * np.sqrt(aq**2 * dpsi**2 + self.r**2 * dphi**2), axis=(1, 2))

    def intrinsic_distance(self, x, y):
        """Length of a shortest curve found by polyline shortening in (psi, phi).

        The returned value is the exact length of a curve lying on the torus,
        hence an upper bound on the geodesic distance that converges to it as
        ``geodesic_segments`` grows.  All four lifts of the endpoint angles are
        tried and the shortest kept.
        """
        x = np.atleast_2d(np.asarray(x, float))
        y = np.atleast_2d(np.asarray(y, float))
        x, y = np.broadcast_arrays(x, y)
        shape = x.shape[:-1]
        x = x.reshape(-1, 3)
        y = y.reshape(-1, 3)
        psi0, phi0 = self.angles(x)
        psi1, phi1 = self.angles(y)
        dpsi = np.angle(np.exp(1j * (psi1 - psi0)))
        dphi = np.angle(np.exp(1j * (phi1 - phi0)))
        best = np.full(psi0.shape, np.inf)
        for spsi in (0.0, -2 * np.pi * np.sign(dpsi)):
            for sphi in (0.0, -2 * np.pi * np.sign(dphi)):
                L = self._branch_lengths(psi0, phi0, psi0 + dpsi + spsi, phi0 + dphi + sphi)
                best = np.minimum(best, L)
        return best.reshape(shape) if shape != (1,) else float(best[0])

    def to_config(self):
        return {"kind": self.kind, "R": self.R, "r": self.r}


@dataclass(frozen=True)
class LevelSet(TargetManifold):
    """Hypersurface ``{phi = 0}`` with finite-difference geometry.

    ``phi`` must be vectorised: it maps an array ``(..., N)`` to ``(...)`` and
    have non-vanishing gradient on M.  ``box`` bounds the region used for the
    Monte-Carlo estimate of ``sup_M |A|``.
    """

    phi: Callable[[np.ndarray], np.ndarray] = field(default=None, compare=False)
    ambient_dim: int = 3
    reach_estimate: float = 0.5
    fd_step: float = 1e-4
    box: float = 2.0
    max_iter: int = 50
    tol: float = 1e-13
    label: str = "level_set"
    kind = "level_set"

    def grad(self, p):
        p = np.asarray(p, float)
        h = self.fd_step
        g = np.empty_like(p)
        for i in range(self.ambient_dim):
            e = np.zeros(self.ambient_dim)
            e[i] = h
            g[..., i] = (self.phi(p + e) - self.phi(p - e)) / (2 * h)
        return g

    def _hess_bilinear(self, u, X, Y):
        """Central-difference ``<Hess phi X, Y>`` (exact for quadratic phi)."""
        h = self.fd_step
        sx = _norm(X)
        sy = _norm(Y)
        xs = X / np.where(sx > 0, sx, 1.0)[..., None] * h
        ys = Y / np.where(sy > 0, sy, 1.0)[..., None] * h
        f = self.phi
        b = (f(u + xs + ys) - f(u + xs - ys) - f(u - xs + ys) + f(u - xs - ys)) / (4 * h * h)
        return b * sx * sy

    def _project(self, p):
        q = p.copy()
        scale = self.reach_estimate / 4.0
        conv = np.zeros(p.shape[:-1], dtype=bool)
        for _ in range(self.max_iter):
            g = self.grad(q)
            gn = _norm(g)
            n = g / np.where(gn > 0, gn, 1.0)[..., None]
            d = p - q
            step = d - _dot(d, n)[..., None] * n - (self.phi(q) / np.where(gn > 0, gn, 1.0))[..., None] * n
            sn = _norm(step)
            fac = np.where(sn > scale, scale / np.where(sn > 0, sn, 1.0), 1.0)
            q = q + fac[..., None] * step
            conv = sn <= self.tol * max(1.0, self.reach_estimate)
            if np.all(conv):
                break
        res = self.constraint_residual(q)
        ok = conv | (res <= 1e-10)
        # tangential stationarity as well as the constraint
        g = self.grad(q)
        n = g / _norm(g)[..., None]
        d = p - q
        tang = _norm(d - _dot(d, n)[..., None] * n)
        ok &= tang <= 1e-8
        return q, ok

    def normal_basis(self, u):
        g = self.grad(u)
        return (g / _norm(g)[..., None])[..., None, :]

    def _sff(self, u, X, Y):
        g = self.grad(u)
        gn = _norm(g)
        nu = g / gn[..., None]
        return (-self._hess_bilinear(u, X, Y) / gn)[..., None] * nu

    def constraint_residual(self, p):
        p = np.asarray(p, float)
        return np.abs(self.phi(p)) / _norm(self.grad(p))

    def hessian(self, p):
        p = np.asarray(p, float)
        N = self.ambient_dim
        H = np.empty(p.shape + (N,))
        eye = np.eye(N)
        for i in range(N):
            for j in range(i, N):
                X = np.broadcast_to(eye[i], p.shape)
                Y = np.broadcast_to(eye[j], p.shape)
                H[..., i, j] = H[..., j, i] = self._hess_bilinear(p, X, Y)
        return H

    def sample(self, rng, n):
        out = []
        while sum(len(o) for o in out) < n:
            p = rng.uniform(-self.box, self.box, (max(4 * n, 64), self.ambient_dim))
            # cheap first-order distance filter before the projection iteration
            p = p[self.constraint_residual(p) < 0.5 * self.reach_estimate]
            q, ok = self._project(p)
            ok &= _norm(p - q) <= self.reach_estimate
            out.append(q[ok])
        return np.concatenate(out)[:n]

    @cached_property
    def sup_A(self) -> float:
        """Monte-Carlo maximum of the principal curvatures over 1e5 samples."""
        rng = np.random.default_rng(0)
        u = self.sample(rng, 100_000)
        g = self.grad(u)
        gn = _norm(g)
        nu = g / gn[:, None]
        P = np.eye(self.ambient_dim) - nu[:, :, None] * nu[:, None, :]
        S = P @ self.hessian(u) @ P / gn[:, None, None]
        return float(np.max(np.abs(np.linalg.eigvalsh(S))))

    def to_config(self):
        return {"kind": self.label}


@dataclass(frozen=True)
class Ellipsoid(LevelSet):
    """Ellipsoid ``sum (x_i / a_i)^2 = 1`` handled through the level-set machinery."""

    axes: tuple = (1.0, 1.0, 1.0)
    label: str = "ellipsoid"

    def __post_init__(self):
        a = np.asarray(self.axes, dtype=float)
        if np.any(a <= 0):
            raise ValueError("ellipsoid axes must be positive")
        object.__setattr__(self, "axes", tuple(float(v) for v in a))
        object.__setattr__(self, "ambient_dim", len(a))
        object.__setattr__(self, "phi", lambda p: np.sum((p / a) ** 2, axis=-1) - 1.0)

    def to_config(self):
        return {"kind": "ellipsoid", "axes": list(self.axes), "reach": self.reach_estimate}


# -- module-level functional surface -------------------------------------------


def project(m: TargetManifold, p):
    return m.project(p)


def tangent_project(m: TargetManifold, u, v):
    return m.tangent_project(u, v)


def normal_part(m: TargetManifold, u, v):
    return m.normal_part(u, v)


def second_fundamental_form(m: TargetManifold, u, X, Y):
    return m.second_fundamental_form(u, X, Y)


def perp_ratio(m: TargetManifold, x, y):
    return m.perp_ratio(x, y)


def intrinsic_distance(m: TargetManifold, x, y):
    return m.intrinsic_distance(x, y)


def make_target(cfg: dict) -> TargetManifold:
    """Build a target from its configuration table (``kind`` plus parameters)."""
    kind = cfg.get("kind")
    if kind == "unit_sphere":
        return UnitSphere(int(cfg.get("dim", 3)))
    if kind == "clifford_torus":
        return CliffordTorus()
    if kind == "torus_of_revolution":
        return TorusOfRevolution(float(cfg.get("R", 2.0)), float(cfg.get("r", 0.5)))
    if kind == "ellipsoid":
        axes = tuple(cfg.get("axes", (1.0, 1.0, 1.0)))
        reach = cfg.get("reach", 0.5 * min(axes) ** 2 / max(axes))
        return Ellipsoid(reach_estimate=float(reach), axes=axes)
    raise ValueError(f"unknown target kind {kind!r}")


# -- closed-form harmonic maps -------------------------------------------------


@dataclass(frozen=True)
class ReferenceMap:
    """Inverse stereographic projection of ``z -> lam z``, a harmonic map B_1 -> S^2.

    ``w = lam z`` is sent to ``(2 Re w, 2 Im w, |w|^2 - 1) / (1 + |w|^2)``, so the
    origin goes to the south pole and the map covers a spherical cap of area
    ``4 pi lam^2 / (1 + lam^2)``, which is also its Dirichlet energy.
    """

    lam: float

    @property
    def exact_energy(self) -> float:
        return 4.0 * math.pi * self.lam**2 / (1.0 + self.lam**2)

    def __call__(self, r, theta):
        r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
        rho = self.lam * r
        den = 1.0 + rho**2
        return np.stack(
            [2 * rho * np.cos(theta) / den, 2 * rho * np.sin(theta) / den, (rho**2 - 1) / den],
            axis=-1,
        )

    def boundary(self, theta):
        return self(np.ones_like(np.asarray(theta, float)), theta)

    def grad_sq(self, r):
        """Exact ``|grad u|^2 = 8 lam^2 / (1 + lam^2 r^2)^2``."""
        return 8 * self.lam**2 / (1 + (self.lam * np.asarray(r, float)) ** 2) ** 2

    def hessian_sq(self, r):
        """Exact ``|grad^2 u|^2`` (sum over components and Cartesian index pairs)."""
        r = np.asarray(r, float)
        L = self.lam
        return 32 * L**4 * (2 * L**2 * r**2 + 1) / (1 + L**2 * r**2) ** 4

    def constraint_residual(self, r, theta):
        return np.abs(_norm(self(r, theta)) - 1.0)


def stereographic_reference(lam: float) -> ReferenceMap:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return ReferenceMap(float(lam))
