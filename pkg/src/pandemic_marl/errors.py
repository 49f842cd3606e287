"""Exception types shared across the package."""


class PandemicMarlError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PandemicMarlError, ValueError):
    """Invalid scenario, config, or argument shape.

    ``path`` names the offending field (``"regions[2].lockdown_tolerance"``)
    when the error comes from a structured config.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class InfeasibleMobilityError(PandemicMarlError):
    """Allowed outflow exceeds the movable population of a region."""

    def __init__(self, region, step, outflow, movable):
        self.region = region
        self.step = step
        where = f"region {region}" + (f" at step {step}" if step is not None else "")
        super().__init__(
            f"{where}: outflow {outflow:.6g} exceeds movable population {movable:.6g}"
        )


class ContractViolation(PandemicMarlError, RuntimeError):
    """A caller broke a documented precondition."""
