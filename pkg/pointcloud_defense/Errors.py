"""
This module exposes the exception classes raised by the toolkit.

Every error the library raises on purpose derives from ToolkitError so the
command line can tell contract violations apart from genuine crashes.

Example:
        try:
            cloud = load_cloud('broken.xyz')
        except CloudParseError as e:
            print(e.line)
"""


class ToolkitError(Exception):
    """Base class of every error raised on purpose by the toolkit"""


class ParameterError(ToolkitError, ValueError):
    """
    A parameter is outside of its documented range, e.g. a negative
    jitter or an epsilon outside of (0, 1)
    """


class ContractError(ToolkitError, ValueError):
    """
    A precondition of an operation does not hold, e.g. two clouds that
    must be paired have different sizes or a set is empty
    """


class CloudParseError(ToolkitError):
    """
    A point-cloud text file could not be parsed

    Args:
        message (str): what went wrong
        path (str): file being read
        line (int): 1-based line number of the offending line

    Attributes:
        path (str): file being read
        line (int): 1-based line number of the offending line
    """
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ''
        if path is not None:
            where += str(path)
        if line is not None:
            where += ':' + str(line)
        super().__init__((where + ': ' if where else '') + message)


class AttackAborted(ToolkitError, RuntimeError):
    """
    An attack hit a non-finite objective and stopped

    Args:
        message (str): what went wrong
        diagnostic (dict): iteration, c, loss terms at the time of failure
    """
    def __init__(self, message, diagnostic=None):
        self.diagnostic = diagnostic or {}
        super().__init__(message + ' ' + str(self.diagnostic))
