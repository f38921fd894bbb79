"""Exception hierarchy shared by all qedlab modules."""


class QedlabError(Exception):
    """Base class for every error raised by qedlab."""


class ParameterError(QedlabError, ValueError):
    """A physical parameter is outside its allowed domain."""


class DegenerateSystemError(QedlabError):
    """The Bloch generator is singular (all rates zero)."""


class GridError(QedlabError, ValueError):
    """A time or frequency grid is empty, non-monotone or badly anchored."""


class SequenceError(QedlabError, ValueError):
    """Pulses overlap, are unordered, or collide with the readout window."""


class CalibrationError(QedlabError):
    """Pulse lengths cannot be read off the Rabi trace (overdamped drive)."""


class TruncationError(QedlabError):
    """A correlation trace stops before it has decayed."""

    def __init__(self, message, required_t_max=None):
        super().__init__(message)
        self.required_t_max = required_t_max
