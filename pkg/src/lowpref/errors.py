"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: validation failures exit 2,
inconsistent instances exit 3, numerical failures exit 4.
"""


class ValidationError(ValueError):
    """Malformed input: bad shapes, violated invariants, out-of-range parameters."""

    exit_code = 2


class InconsistencyError(ValidationError):
    """A pairwise feature difference falls outside the span of observed differences.

    Carries the first offending (state, action, action) triple as ``witness``.
    """

    exit_code = 3

    def __init__(self, message: str, witness: tuple[int, int, int] | None = None):
        super().__init__(message)
        self.witness = witness


class NumericalError(RuntimeError):
    """Numerical failure: singular design matrix, non-convergence, broken identity."""

    exit_code = 4
