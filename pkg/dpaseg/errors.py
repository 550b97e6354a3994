"""
Exception hierarchy shared by the library and the command line
"""


class DpaError(Exception):
    """Base class for all dpaseg errors"""


class DimensionError(DpaError, ValueError):
    """Tensor extents do not fit the operation"""


class ArgumentError(DpaError, ValueError):
    """A scalar argument is out of its valid range"""


class ContractError(DpaError, RuntimeError):
    """An API was used outside its contract"""


class DatasetValidationError(DpaError, ValueError):
    """On-disk content disagrees with its manifest or with the model"""


class DatasetIOError(DpaError, OSError):
    """A file is missing or cannot be decoded"""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{reason}: {self.path}")
