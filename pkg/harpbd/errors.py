class HarPbdError(Exception):
    pass


class ContractViolation(HarPbdError, ValueError):
    pass


class NumericalFailure(HarPbdError, ArithmeticError):
    pass


class ConfigurationError(HarPbdError):
    pass


class TrialParseError(HarPbdError):
    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class MissingFoldError(HarPbdError):
    def __init__(self, fold: str, missing: str):
        super().__init__(f"fold {fold} is incomplete: missing {missing}")
        self.fold = fold
        self.missing = missing


class UsageError(HarPbdError):
    pass
