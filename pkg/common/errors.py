"""
Exception taxonomy. Every error carries the CLI exit code for its class:
0 ok / 2 config / 3 I/O / 4 verification.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VERIFICATION = 4


class MotionForgeError(Exception):
    exit_code = EXIT_CONFIG


class ConfigError(MotionForgeError):
    exit_code = EXIT_CONFIG


class ShapeError(ConfigError):
    def __init__(self, what: str, expected, actual):
        super().__init__(f"{what}: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class SizeError(ConfigError):
    pass


class RangeError(ConfigError):
    pass


class ArityError(ConfigError):
    pass


class PlanError(ConfigError):
    pass


class InputError(MotionForgeError):
    exit_code = EXIT_IO

    def __init__(self, message: str, path=None):
        super().__init__(f"{message}: {path}" if path is not None else message)
        self.path = str(path) if path is not None else None


class FormatError(InputError):
    pass


class VerificationError(MotionForgeError):
    exit_code = EXIT_VERIFICATION


class NumericError(MotionForgeError):
    exit_code = EXIT_VERIFICATION


class TrainingError(MotionForgeError):
    exit_code = EXIT_VERIFICATION

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step
