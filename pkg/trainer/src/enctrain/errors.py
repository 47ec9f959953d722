class EnctrainError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EnctrainError):
    pass


class DataError(EnctrainError):
    pass


class TrainingError(EnctrainError):
    pass
