"""Exception hierarchy shared by every workbench module.

Each exception carries a CLI category; `exit_code` maps it to the process exit
status (1 validation, 2 runtime, 3 I/O).
"""

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


class WorkbenchError(Exception):
    category = 'runtime'


class DomainError(WorkbenchError, ValueError):
    """An operation received an input outside its domain."""
    category = 'validation'


class ConfigError(WorkbenchError, ValueError):
    """A configuration value violates a BenchmarkSpec/Hyperparams/RunConfig invariant."""
    category = 'validation'


class CapacityError(WorkbenchError):
    category = 'validation'


class StateError(WorkbenchError, RuntimeError):
    category = 'runtime'


class InsufficientDataError(WorkbenchError):
    category = 'runtime'


class NumericalError(WorkbenchError, ArithmeticError):
    category = 'runtime'


class TrainingError(WorkbenchError):
    category = 'runtime'

    def __init__(self, message, seed=None):
        super().__init__(message)
        self.seed = seed

    def __reduce__(self):
        return type(self), (self.args[0], self.seed)


class InstanceFileError(WorkbenchError):
    """Malformed instance file. `line` is 1-based, the header being line 1."""
    category = 'io'

    def __init__(self, message, path=None, line=None):
        location = ''
        if path is not None:
            location = f'{path}'
            if line is not None:
                location += f':{line}'
            location += ': '
        super().__init__(location + message)
        self.path = path
        self.line = line


def exit_code(exc):
    if isinstance(exc, WorkbenchError):
        return {'validation': EXIT_VALIDATION, 'io': EXIT_IO}.get(exc.category, EXIT_RUNTIME)
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_RUNTIME


def category_of(exc):
    if isinstance(exc, WorkbenchError):
        return exc.category
    if isinstance(exc, OSError):
        return 'io'
    return 'runtime'
