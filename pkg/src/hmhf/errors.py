"""Exception hierarchy shared by all modules.

Each class carries a distinct ``exit_code`` used by the command-line front end.
"""


class HMHFError(Exception):
    exit_code = 1


# geometry
class OutOfReach(HMHFError):
    exit_code = 10


class NotTangent(HMHFError):
    exit_code = 11


class DegeneratePair(HMHFError):
    exit_code = 12


class Unsupported(HMHFError):
    exit_code = 13


# disk
class MissingTrace(HMHFError):
    exit_code = 20


class ZeroField(HMHFError):
    exit_code = 21


class TraceMismatch(HMHFError):
    exit_code = 22


# flow
class StabilityViolation(HMHFError):
    exit_code = 30


class LinearSolveDiverged(HMHFError):
    exit_code = 31


class NonmonotoneEnergy(HMHFError):
    exit_code = 32


class NotConverged(HMHFError):
    exit_code = 33


class UnsampledTime(HMHFError):
    exit_code = 34


class EnergyAboveThreshold(HMHFError):
    exit_code = 35


# analysis
class EmptyTrajectory(HMHFError):
    exit_code = 40


class NonPositiveValue(HMHFError):
    exit_code = 41


class TooFewSamples(HMHFError):
    exit_code = 42


class TooFewSnapshots(HMHFError):
    exit_code = 43


# cli
class ConfigInvalid(HMHFError):
    exit_code = 50

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class MissingManifest(HMHFError):
    exit_code = 51


class RunDirectoryExists(HMHFError):
    exit_code = 52
