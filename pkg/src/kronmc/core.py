"""Kronecker products, the rearrangement operator and configuration sets.

Conventions
-----------
``vec`` stacks columns (column-major).  For a ``P x Q`` matrix split into
``p x q`` blocks of size ``p* x q*`` (``P = p p*``, ``Q = q q*``), the
rearranged matrix is ``pq x p*q*``; block ``(i, j)`` becomes row ``i + j p``
(0-based, column-major over blocks) holding ``vec`` of that block.  With
these conventions ``rearrange(kron(A, B), c) == vec(A) @ vec(B).T`` exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_mask, check_matrix, check_positive_int
from .exceptions import DimensionMismatch, InvalidBound

__all__ = [
    "Configuration",
    "ConfigurationSet",
    "ObservationMask",
    "kronecker_product",
    "vec",
    "unvec",
    "rearrange",
    "inverse_rearrange",
    "rearrange_mask",
    "project",
    "divisors",
    "candidate_set",
    "parse_configuration",
    "parse_candidates",
]


@dataclass(frozen=True, order=True)
class Configuration:
    """Kronecker configuration ``(p, q)`` of a ``P x Q`` matrix.

    The left factor is ``p x q`` and the right factor ``p* x q*`` with
    ``p* = P / p`` and ``q* = Q / q``.
    """

    p: int
    q: int
    P: int = field(compare=False)
    Q: int = field(compare=False)

    def __post_init__(self):
        for name in ("p", "q", "P", "Q"):
            object.__setattr__(self, name, check_positive_int(getattr(self, name), name))
        if self.P % self.p or self.Q % self.q:
            raise DimensionMismatch(
                f"configuration ({self.p}, {self.q}) does not divide ({self.P}, {self.Q})"
            )

    @property
    def p_star(self):
        return self.P // self.p

    @property
    def q_star(self):
        return self.Q // self.q

    @property
    def shape(self):
        """Shape of the rearranged matrix, ``(pq, p*q*)``."""
        return (self.p * self.q, self.p_star * self.q_star)

    @property
    def left_shape(self):
        return (self.p, self.q)

    @property
    def right_shape(self):
        return (self.p_star, self.q_star)

    @property
    def log2(self):
        """``(log2 p, log2 q)`` when both are powers of two, else ``None``."""
        if _is_pow2(self.p) and _is_pow2(self.q):
            return (self.p.bit_length() - 1, self.q.bit_length() - 1)
        return None

    @classmethod
    def from_log2(cls, m, n, M, N):
        return cls(2**m, 2**n, 2**M, 2**N)

    def __str__(self):
        return f"{self.p}x{self.q}"

    def to_dict(self):
        return {"p": self.p, "q": self.q, "P": self.P, "Q": self.Q}


def _is_pow2(n):
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class ConfigurationSet:
    """Ordered, duplicate-free collection of configurations with ``pq`` bounds."""

    members: tuple
    bounds: tuple = (1, float("inf"))

    def __post_init__(self):
        members = tuple(self.members)
        object.__setattr__(self, "members", members)
        if len(set(members)) != len(members):
            raise ValueError("configuration set contains duplicates")
        lo, hi = self.bounds
        for c in members:
            if not _within(c.p * c.q, lo, hi):
                raise InvalidBound(f"configuration {c} violates bounds {self.bounds}")

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __getitem__(self, idx):
        return self.members[idx]

    def __contains__(self, c):
        return c in self.members


class ObservationMask:
    """Immutable set of observed entries of a ``rows x cols`` matrix.

    Stored as a read-only boolean array; :meth:`indices` gives the 1-based
    ``(i, j)`` pairs of the external data model.
    """

    __slots__ = ("_array",)

    def __init__(self, observed):
        arr = check_mask(observed).copy()
        arr.flags.writeable = False
        self._array = arr

    @classmethod
    def from_indices(cls, indices, shape):
        """Build a mask from 1-based ``(i, j)`` pairs."""
        from .exceptions import DuplicateIndex, OutOfBounds

        rows, cols = shape
        arr = np.zeros((rows, cols), dtype=bool)
        for i, j in indices:
            if not (1 <= i <= rows and 1 <= j <= cols):
                raise OutOfBounds(f"index ({i}, {j}) outside a {rows}x{cols} matrix")
            if arr[i - 1, j - 1]:
                raise DuplicateIndex(f"index ({i}, {j}) listed twice")
            arr[i - 1, j - 1] = True
        return cls(arr)

    @classmethod
    def full(cls, shape):
        return cls(np.ones(shape, dtype=bool))

    @property
    def array(self):
        return self._array

    @property
    def shape(self):
        return self._array.shape

    @property
    def rows(self):
        return self._array.shape[0]

    @property
    def cols(self):
        return self._array.shape[1]

    def indices(self):
        """Sorted list of 1-based ``(i, j)`` pairs (row-major order)."""
        ii, jj = np.nonzero(self._array)
        return [(int(i) + 1, int(j) + 1) for i, j in zip(ii, jj)]

    def __len__(self):
        return int(self._array.sum())

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._array
        return self._array.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, ObservationMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._array, other._array))

    def __hash__(self):
        return hash((self.shape, self._array.tobytes()))

    def __repr__(self):
        return f"ObservationMask(shape={self.shape}, observed={len(self)})"


def kronecker_product(A, B):
    """Kronecker product ``A (x) B``; block ``(i, j)`` equals ``A[i, j] * B``."""
    A = check_matrix(A, "A")
    B = check_matrix(B, "B")
    out = A[:, None, :, None] * B[None, :, None, :]
    return out.reshape(A.shape[0] * B.shape[0], A.shape[1] * B.shape[1])


def vec(M):
    """Column-major vectorization, returned as an ``(mn, 1)`` column."""
    M = check_matrix(M, "M")
    return M.reshape(-1, 1, order="F")


def unvec(v, shape):
    """Inverse of :func:`vec` for a target ``shape``."""
    return np.asarray(v, dtype=np.float64).reshape(shape, order="F")


def _resolve(shape, c):
    if (c.P, c.Q) != tuple(shape):
        raise DimensionMismatch(
            f"configuration {c} is for a {c.P}x{c.Q} matrix, got shape {tuple(shape)}"
        )


def _rearrange_array(M, c):
    # M[i p* + k, j q* + l] -> R[i + j p, k + l p*]
    T = M.reshape(c.p, c.p_star, c.q, c.q_star)
    return T.transpose(2, 0, 3, 1).reshape(c.shape)


def _inverse_rearrange_array(N, c):
    T = N.reshape(c.q, c.p, c.q_star, c.p_star)
    return T.transpose(1, 3, 0, 2).reshape(c.P, c.Q)


def rearrange(M, c):
    """Rearrange a ``P x Q`` matrix into its ``pq x p*q*`` form under ``c``."""
    M = check_matrix(M, "M")
    _resolve(M.shape, c)
    return np.ascontiguousarray(_rearrange_array(M, c))


def inverse_rearrange(N, c):
    """Inverse of :func:`rearrange`."""
    N = check_matrix(N, "N")
    if N.shape != c.shape:
        raise DimensionMismatch(f"expected a {c.shape} matrix for {c}, got {N.shape}")
    return np.ascontiguousarray(_inverse_rearrange_array(N, c))


def rearrange_mask(mask, c):
    """Apply the rearrangement permutation to an observation mask."""
    arr = check_mask(mask)
    _resolve(arr.shape, c)
    return ObservationMask(_rearrange_array(arr, c))


def project(M, mask):
    """Zero every entry of ``M`` outside ``mask``."""
    M = check_matrix(M, "M")
    arr = check_mask(mask, M.shape)
    return np.where(arr, M, 0.0)


def divisors(n):
    """Ascending list of the positive divisors of ``n``."""
    n = check_positive_int(n, "n")
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d * d != n:
                large.append(n // d)
        d += 1
    return small + large[::-1]


def _within(x, lo, hi, rtol=1e-12):
    return lo * (1 - rtol) <= x <= hi * (1 + rtol)


def candidate_set(P, Q, *, delta=None, s=None):
    """Enumerate the admissible configurations of a ``P x Q`` matrix.

    Exactly one of ``delta`` or ``s`` selects the bounds on ``pq``:

    * ``delta`` in (0, 1/4): ``(PQ)^(1/4 + delta) <= pq <= (PQ)^(3/4 - delta)``
    * integer ``s``: ``2^s <= pq <= PQ / 2^s``

    Members are in lexicographic ``(p, q)`` order.

    Raises
    ------
    InvalidBound
        If the parameters are out of range or no divisor pair qualifies.
    """
    P = check_positive_int(P, "P")
    Q = check_positive_int(Q, "Q")
    if (delta is None) == (s is None):
        raise ValueError("give exactly one of delta or s")
    if delta is not None:
        if not 0 < delta < 0.25:
            raise InvalidBound(f"delta must lie in (0, 1/4), got {delta}")
        lo = float(P * Q) ** (0.25 + delta)
        hi = float(P * Q) ** (0.75 - delta)
    else:
        if int(s) != s or s < 0:
            raise InvalidBound(f"s must be a non-negative integer, got {s}")
        lo = float(2**s)
        hi = P * Q / 2**s
    members = [
        Configuration(p, q, P, Q)
        for p in divisors(P)
        for q in divisors(Q)
        if _within(p * q, lo, hi)
    ]
    if not members:
        raise InvalidBound(f"no configuration of a {P}x{Q} matrix has {lo:g} <= pq <= {hi:g}")
    return ConfigurationSet(tuple(members), (lo, hi))


def parse_configuration(text, P, Q):
    """Configuration from ``"pxq"`` (or ``"p,q"``) text for a ``P x Q`` matrix."""
    parts = str(text).lower().replace(",", "x").split("x")
    try:
        p, q = (int(v) for v in parts)
    except ValueError:
        raise ValueError(f"configuration must look like 'PxQ', got {text!r}") from None
    return Configuration(p, q, P, Q)


def parse_candidates(text, P, Q):
    """Candidate set from ``"s=<int>"`` or ``"delta=<float>"`` text."""
    key, _, value = str(text).partition("=")
    key = key.strip().lower()
    try:
        if key == "s":
            return candidate_set(P, Q, s=int(value))
        if key == "delta":
            return candidate_set(P, Q, delta=float(value))
    except ValueError as err:
        if isinstance(err, InvalidBound):
            raise
        raise ValueError(f"cannot parse candidate bound {text!r}") from None
    raise ValueError(f"candidate bound must be 's=<int>' or 'delta=<float>', got {text!r}")
