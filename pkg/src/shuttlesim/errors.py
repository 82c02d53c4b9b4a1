"""Exception types shared across the package.

The CLI maps these onto process exit codes, so modules should raise the
most specific one that applies rather than bare ValueError where a user
can hit the condition through a config file or artifact on disk.
"""


class ConfigError(ValueError):
    """Invalid, inconsistent, or missing configuration input."""


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""


class ArtifactFormatError(ValueError):
    """An on-disk artifact is missing, truncated, or malformed."""


class PhaseUnwrapError(RuntimeError):
    """Adjacent phase samples differ by exactly pi, so the winding is
    ambiguous and no continuous phase can be reconstructed."""


class WellDistortionWarning(UserWarning):
    """The instantaneous potential does not form a single clean well."""
