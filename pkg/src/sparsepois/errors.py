"""Exception types and the portable +infinity sentinel."""


class SparsePoisError(Exception):
    """Base class for all package errors."""


class DegenerateCounts(SparsePoisError, ValueError):
    """All counts are zero, so the intercept is unbounded below."""


class OverflowExponent(SparsePoisError, FloatingPointError):
    """A linear predictor exceeded the exponent cap."""


class InfeasibleFixing(SparsePoisError, ValueError):
    """More variables fixed to one than the cardinality budget allows."""


class NoFractional(SparsePoisError):
    """No free relaxed indicator is fractional."""


class TooLarge(SparsePoisError, ValueError):
    """Exhaustive enumeration would exceed the size guard."""


class DatasetParseError(SparsePoisError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ConicParseError(SparsePoisError, ValueError):
    def __init__(self, message, lineno=None, col=None):
        self.lineno = lineno
        self.col = col
        where = ""
        if lineno is not None:
            where = f"line {lineno}"
            if col is not None:
                where += f", column {col}"
            where += ": "
        super().__init__(where + message)


class _PosInf:
    """Tagged +infinity.

    Compares greater than every real number and serializes to the string
    ``"+inf"`` so that results never carry a floating-point special.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "POS_INF"

    def __str__(self):
        return "+inf"

    def __float__(self):
        return float("inf")

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("sparsepois.POS_INF")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def to_json(self):
        return "+inf"


POS_INF = _PosInf()
