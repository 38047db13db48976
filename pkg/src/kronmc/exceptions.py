"""Exception hierarchy.

Every error raised by the package derives from :class:`KronMCError`, and the
class names double as the machine-readable error names reported by the CLI.
"""


class KronMCError(ValueError):
    """Base class for all package errors."""


class DimensionMismatch(KronMCError):
    pass


class InvalidBound(KronMCError):
    pass


class EmptyCandidateSet(KronMCError):
    pass


class RankTooLarge(KronMCError):
    pass


class Irrecoverable(KronMCError):
    """Rearranged mask has fully unobserved rows or columns."""

    def __init__(self, rows, cols):
        self.rows = tuple(int(i) for i in rows)
        self.cols = tuple(int(j) for j in cols)
        super().__init__(
            f"rearranged mask has {len(self.rows)} empty row(s) {self.rows[:10]} "
            f"and {len(self.cols)} empty column(s) {self.cols[:10]}"
        )


class UnderdeterminedRow(KronMCError):
    def __init__(self, row, observed, side="left"):
        self.row = int(row)
        self.observed = int(observed)
        self.side = side
        super().__init__(
            f"{side} factor row {self.row} is underdetermined "
            f"({self.observed} observed entries)"
        )


class Diverged(KronMCError):
    pass


class EmptyMask(KronMCError):
    pass


class ShrinkNotAllowed(KronMCError):
    pass


class InvalidGap(KronMCError):
    pass


class ConfigOutOfRange(KronMCError):
    pass


class FoldFailed(KronMCError):
    def __init__(self, fold, cause):
        self.fold = int(fold)
        self.cause = cause
        super().__init__(f"refit on fold {self.fold} failed: {cause!r}")


class ParseError(KronMCError):
    def __init__(self, message, line=None, position=None):
        self.line = line
        self.position = position
        where = []
        if line is not None:
            where.append(f"line {line}")
        if position is not None:
            where.append(f"byte {position}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class UnsupportedMaxval(KronMCError):
    pass


class DuplicateIndex(KronMCError):
    pass


class OutOfBounds(KronMCError):
    pass
