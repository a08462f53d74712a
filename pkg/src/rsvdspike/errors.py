"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class NoBracketError(RuntimeError):
    """A root search could not bracket its target."""


class ConfigError(ValueError):
    """An experiment or denoising configuration failed validation."""


class RankDeficiencyWarning(RuntimeWarning):
    """The sketched matrix has numerical rank below the sketch dimension."""
