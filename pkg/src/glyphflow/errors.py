"""Exception types shared across the library."""


class GlyphflowError(Exception):
    """Base class for all library errors."""


# --- font / canvas ---------------------------------------------------------

class ParseError(GlyphflowError):
    """Malformed font or container file."""


class DuplicateCodepoint(ParseError):
    pass


class EmptyFont(ParseError):
    pass


class MissingGlyph(GlyphflowError, KeyError):
    pass


class EmptyText(GlyphflowError, ValueError):
    pass


class BoxOverflow(GlyphflowError):
    """Rasterized text cannot fit its target box at integer scale >= 1."""


class OutOfBounds(GlyphflowError):
    """A box reaches outside the canvas."""


# --- tensors / numerics ----------------------------------------------------

class ShapeMismatch(GlyphflowError, ValueError):
    pass


class IndivisibleSize(GlyphflowError, ValueError):
    """Spatial size not divisible by the codec patch."""


class BadThresholds(GlyphflowError, ValueError):
    pass


class BadTime(GlyphflowError, ValueError):
    """Timestep outside [0, 1] or a non-decreasing step pair."""


class BadSteps(GlyphflowError, ValueError):
    pass


# --- data / training -------------------------------------------------------

class PlacementFailure(GlyphflowError):
    """Scene generator could not place all requested lines."""


class InvariantViolation(GlyphflowError):
    pass


class CorruptDataset(GlyphflowError):
    pass


class ConfigMismatch(GlyphflowError):
    """Stored weight file does not match the requested configuration."""


class NonFiniteLoss(GlyphflowError):
    """Training aborted on a NaN/Inf loss."""


class ConvergenceFailure(GlyphflowError):
    """Accuracy gate not reached within the training budget."""
