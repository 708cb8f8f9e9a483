"""Exception hierarchy shared across the engine."""


class MiniConvNetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(MiniConvNetError, ValueError):
    pass


class SizeError(MiniConvNetError, ValueError):
    pass


class ContractError(MiniConvNetError, RuntimeError):
    """A backward pass was called with a context it cannot use."""


class LayerNotFoundError(MiniConvNetError, KeyError):
    pass


class FormatError(MiniConvNetError, ValueError):
    pass


class InputError(MiniConvNetError, ValueError):
    pass


class DatasetError(MiniConvNetError, ValueError):
    pass


class CropError(MiniConvNetError, ValueError):
    pass


class SplitError(MiniConvNetError, ValueError):
    pass


class ConfigError(MiniConvNetError, ValueError):
    pass


class NumericError(MiniConvNetError, ArithmeticError):
    """Training produced a non-finite loss."""

