"""Exception types shared across the package."""


class RegularizationRequiredError(RuntimeError):
    """The penalized system is numerically singular; a positive ridge weight is needed."""


class DataFormatError(ValueError):
    """An input file does not match the documented on-disk format."""


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a usable result."""
