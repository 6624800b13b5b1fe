"""Exception types shared by all lipcert modules."""


class LipcertError(Exception):
    """Base class for all lipcert errors."""


class ShapeMismatch(LipcertError):
    """Operand shapes are inconsistent with the requested operation."""


class NonFinite(LipcertError):
    """A matrix contains NaN or infinite entries."""


class NoConvergence(LipcertError):
    """An iterative routine exceeded its iteration budget."""


class ParseError(LipcertError):
    """An interchange document is malformed."""


class UnknownLayerKind(ParseError):
    """An interchange document names a layer kind we do not support."""


class UnsupportedLayer(LipcertError):
    """A network contains a layer the requested operation cannot handle."""


class UnsupportedNorm(LipcertError):
    """The requested norm is outside the operation's validity range."""


class DepthTooLarge(LipcertError):
    """Subset enumeration depth exceeds the configured cap."""


class WidthTooLarge(LipcertError):
    """A hidden layer is too wide for exact corner enumeration."""


class TooManyNeurons(LipcertError):
    """Brute-force enumeration would exceed the selector-bit cap."""


class DegenerateSeries(LipcertError):
    """A growth-rate series has a zero increment."""
