"""Exception hierarchy shared by all modules."""


class GMRFError(Exception):
    """Base class for errors raised by gmrfsel."""


class InvalidParameterError(GMRFError, ValueError):
    """A parameter lies outside its admissible set (symmetry, positivity, ...)."""

    def __init__(self, message, min_gap=None):
        super().__init__(message)
        self.min_gap = min_gap


class EmptySublatticeError(GMRFError, ValueError):
    """The edge-effect sublattice of a model is empty for the given window."""


class RankError(GMRFError, ValueError):
    """Normal equations are singular (degenerate or too little data)."""


class NoJumpError(GMRFError):
    """The selection path is constant, so no dimension jump can be located."""


class KrigingError(GMRFError):
    """The kriging system is numerically singular."""


class EmbeddingError(GMRFError):
    """Circulant embedding produced a non positive semi-definite spectrum."""
