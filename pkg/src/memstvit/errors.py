"""Exception types raised across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input data (files, frames, landmarks)."""


class GeometryError(ValueError):
    """Landmark geometry that cannot yield a valid RoI partition."""

    def __init__(self, message, frame=None, region=None):
        super().__init__(message)
        self.frame = frame
        self.region = region


class ConfigMismatchError(ValueError):
    """Weights, maps or configs that disagree on a dimension."""


class NumericalError(FloatingPointError):
    """A non-finite value appeared during a forward or backward pass."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer
