"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PetconsError(Exception):
    exit_code = 1


class ConfigError(PetconsError, ValueError):
    exit_code = 2


class DimensionError(ConfigError):
    pass


class UncontrollableError(ConfigError):
    pass


class DisconnectedGraphError(ConfigError):
    pass


class InfeasibleDesignError(PetconsError):
    exit_code = 3

    def __init__(self, message, max_feasible_d=None, diagnostics=None):
        super().__init__(message)
        self.max_feasible_d = max_feasible_d
        self.diagnostics = diagnostics or {}


class ConvergenceError(InfeasibleDesignError):
    pass


class GuaranteeViolation(PetconsError):
    exit_code = 4


class DivergenceError(PetconsError):
    exit_code = 5

    def __init__(self, message, logs=None):
        super().__init__(message)
        self.logs = logs
