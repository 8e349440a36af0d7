"""Exception types shared across the package."""


class HJBLabError(Exception):
    """Base class for all package errors."""


class ModelConstructionError(HJBLabError):
    """A problem definition violates an invariant; names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvalidControlError(HJBLabError):
    """A control value lies outside the admissible control set."""


class EllipticityError(HJBLabError):
    """The diffusion dropped below the declared ellipticity floor."""

    def __init__(self, x: float, u: float, value: float, floor: float):
        super().__init__(
            f"diffusion {value!r} < floor {floor!r} at (x={x!r}, u={u!r})"
        )
        self.x = x
        self.u = u
        self.value = value
        self.floor = floor


class GrowthBoundError(HJBLabError):
    """The running cost violated its declared polynomial growth bound."""


class ConfigurationError(HJBLabError):
    """A run configuration is inconsistent with the problem or grid."""


class SimulationError(HJBLabError):
    """A path became non-finite; carries the offending step index."""

    def __init__(self, step: int, path_index: int):
        super().__init__(f"non-finite state at step {step} of path {path_index}")
        self.step = step
        self.path_index = path_index
