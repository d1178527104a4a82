"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """An input violates a documented precondition: bad dimensions,
    out-of-range parameters, or a malformed run configuration."""


class DivergenceError(RuntimeError):
    """A training run produced a non-finite loss or gradient."""

    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index
