"""Exception types shared across the package."""


class CateBenchError(Exception):
    """Base class for all package-specific errors."""


class DegeneratePropensityError(CateBenchError):
    """Treatment-assignment index has zero spread; scores cannot be standardized."""


class DegenerateFoldError(CateBenchError):
    """A fold lacks treated or control rows required to fit a group-specific mean."""


class DegenerateGroupError(CateBenchError):
    """Treated or control group is empty where both are required."""


class ConfigError(CateBenchError):
    """Run configuration failed validation.

    Carries one message per offending field so callers can report them all.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
