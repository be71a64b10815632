class ConfigError(Exception):
    pass


class MissingInputError(Exception):
    def __init__(self, path, what=None):
        self.path = path
        message = f"missing input: {path}" if what is None else f"missing {what}: {path}"
        super().__init__(message)


class InputDomainError(ValueError):
    pass


class IncompatibleParametersError(ValueError):
    pass


class StaleTapeError(Exception):
    pass


class TrainingError(Exception):
    pass


class FormatError(Exception):
    pass


class WorkdirLockedError(Exception):
    pass
