"""Exception types shared across the toolkit."""


class FracvolError(Exception):
    """Base class for all toolkit errors."""


class DomainError(FracvolError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class LongRangeDependenceError(DomainError):
    """A Hurst exponent <= 1/2 was given to an operation that requires
    long-range dependence (H > 1/2)."""


class QuadratureError(FracvolError, RuntimeError):
    """A numerical integration did not converge to the requested tolerance.

    Carries the tolerance actually achieved so callers can decide whether
    the value is still usable.
    """

    def __init__(self, message: str, achieved_tol: float):
        super().__init__(f"{message} (achieved tolerance {achieved_tol:.3e})")
        self.achieved_tol = achieved_tol


class SamplerError(FracvolError, RuntimeError):
    """Exact path sampling failed.  ``stage`` records which construction
    failed ('circulant_embedding' or 'cholesky_fallback')."""

    def __init__(self, message: str, stage: str):
        super().__init__(f"{message} [stage: {stage}]")
        self.stage = stage


class SimulationError(FracvolError, RuntimeError):
    """A Monte Carlo path produced a nonfinite value."""

    def __init__(self, message: str, step: int, path: int):
        super().__init__(f"{message} (step {step}, path {path})")
        self.step = step
        self.path = path


class PdeSolverError(FracvolError, RuntimeError):
    """The tridiagonal linear solve broke down while marching backward."""

    def __init__(self, message: str, time_index: int):
        super().__init__(f"{message} (time level {time_index})")
        self.time_index = time_index


class UnknownPresetError(FracvolError, KeyError):
    """An unrecognised model preset name."""

    def __init__(self, name: str, valid: tuple):
        super().__init__(f"unknown preset {name!r}; valid names: {', '.join(valid)}")
        self.name = name
        self.valid = valid


class ConfigError(FracvolError, ValueError):
    """A malformed experiment configuration (unknown key, bad value)."""
