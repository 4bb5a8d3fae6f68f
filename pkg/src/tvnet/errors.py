"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so the command line
front end can print ``error[CODE]: message`` and exit nonzero.
"""


class TvnetError(Exception):
    code = "E_TVNET"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class InvalidNetworkError(TvnetError, ValueError):
    code = "E_NETWORK"


class ParameterError(TvnetError, ValueError):
    code = "E_PARAMS"


class NumericalError(TvnetError, FloatingPointError):
    """Raised when an update produces non-finite values."""

    code = "E_NONFINITE"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EnumerationLimitError(TvnetError, ValueError):
    code = "E_ENUM_CAP"


class CorpusError(TvnetError, ValueError):
    code = "E_CORPUS"
