class DomainError(ValueError):
    """argument outside the domain of an operation"""


class ConfigError(ValueError):
    """invalid experiment configuration"""


class NumericalError(ArithmeticError):
    """a loss or an iterate became non-finite

    Parameters
    ----------
    msg : str
        Error message.
    step : int, optional
        Iteration at which the non-finite value was encountered.
    """

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class TrainingDivergedError(NumericalError):
    pass


class SamplerDivergedError(NumericalError):
    pass


class FormatError(OSError):
    """malformed binary file (IDX data or checkpoint)"""

    def __init__(self, msg, offset=None):
        super().__init__(msg)
        self.offset = offset
