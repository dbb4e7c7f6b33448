"""Exception types shared across the toolkit."""


class TangentCTError(Exception):
    """Base class for toolkit errors."""


class GeometryError(TangentCTError, ValueError):
    """Scan geometry or ray parameter outside its valid domain."""


class ConfigError(TangentCTError, ValueError):
    """Invalid or inconsistent configuration."""


class StageError(TangentCTError, RuntimeError):
    """A pipeline stage failed; the message names the stage."""


class InfeasibleError(TangentCTError, RuntimeError):
    """Sampling quantification found no feasible candidate."""
