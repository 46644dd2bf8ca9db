class PercolationError(Exception):
    """Base class of every domain error; `exit_code` is what `percolate` exits with."""
    exit_code = 1


class InvalidParameters(PercolationError, ValueError):
    exit_code = 2


class PreconditionError(PercolationError):
    exit_code = 2


class CandidateInvalid(PercolationError):
    """A Condition-B candidate breaks the structural requirements (not a 'fails' verdict)."""
    exit_code = 2


class EmptySlice(PercolationError):
    exit_code = 2


class DegenerateSample(PercolationError):
    exit_code = 2


class ExtinctionDominated(PercolationError):
    exit_code = 3

    def __init__(self, attempts, extinction_probability):
        self.attempts = attempts
        self.extinction_probability = extinction_probability
        super().__init__(
            f'extinction-dominated: {attempts} empty draws '
            f'(analytic extinction probability {extinction_probability:.6f})'
        )


class LevelTooDeep(PercolationError):
    exit_code = 4

    def __init__(self, level, cap, detail='cell count'):
        self.level = level
        self.cap = cap
        super().__init__(f'level too deep: {detail} at level {level} exceeds cap {cap}')


class NumericalBlowUp(PercolationError):
    exit_code = 4
