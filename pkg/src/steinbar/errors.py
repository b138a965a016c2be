class SteinbarError(Exception):
    """Base class for every error raised by steinbar."""


class UnstableModelError(SteinbarError, ValueError):
    def __init__(self, rho: float, model_id: str = ""):
        self.rho = rho
        self.model_id = model_id
        super().__init__(f"Model {model_id} is unstable: rho={rho:.6g} (must be < 1)")

    def __reduce__(self):
        return type(self), (self.rho, self.model_id)


class UnsupportedMomentError(SteinbarError, ValueError):
    def __init__(self, m: int):
        self.m = m
        super().__init__(f"Moment order {m} is not supported (expected 1, 2 or 3)")

    def __reduce__(self):
        return type(self), (self.m,)


class DegenerateDiffusionError(SteinbarError, ValueError):
    """sigma^2 = 0: the diffusion approximation degenerates."""


class ModelMismatchError(SteinbarError, ValueError):
    """A check was called with a model variant it does not handle."""


class TieRiskError(SteinbarError, ValueError):
    """Clock ties are possible, so the run cannot take part in acceptance checks."""


class InsufficientDataError(SteinbarError, ValueError):
    """An estimator had no usable batches."""


class NonFiniteProbeError(SteinbarError, ArithmeticError):
    def __init__(self, key: str, value: float):
        self.key = key
        self.value = value
        super().__init__(f"Probe {key} returned a non-finite value {value}")

    def __reduce__(self):
        return type(self), (self.key, self.value)


class MetricInvariantError(SteinbarError, AssertionError):
    """A metric violated a bound that holds exactly."""
