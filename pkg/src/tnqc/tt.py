"""Tensor-train vectors (MPS) and matrices (MPO).

Core layout is ``(left bond, physical, right bond)`` for vectors and
``(left bond, row physical, column physical, right bond)`` for matrices.
Site 0 is the most significant bit of a dense index.

Everything here is a pure function of immutable core chains. Matrix
algorithms that only need the chain structure (rounding, sums, inner
products) run on the "flattened" view where each matrix core
``(a, s, l, b)`` is treated as a vector core ``(a, s*l, b)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TypeVar, Union

import numpy as np

__all__ = [
    "DENSE_VECTOR_MAX_QUBITS",
    "DENSE_MATRIX_MAX_QUBITS",
    "DenseGuardError",
    "RankProfile",
    "TTVector",
    "TTMatrix",
    "tt_svd_vector",
    "tt_svd_matrix",
    "to_dense_vector",
    "to_dense_matrix",
    "matvec",
    "matmat",
    "dot",
    "norm",
    "frobenius_norm",
    "trace_adjoint_product",
    "tt_round",
    "orthogonalize",
    "add",
    "scalar_mul",
]

DENSE_VECTOR_MAX_QUBITS = 14
DENSE_MATRIX_MAX_QUBITS = 10

_RANK_RTOL = 1e-14


class DenseGuardError(ValueError):
    """Raised when a dense conversion would exceed the configured size guard."""


@dataclass(frozen=True)
class RankProfile:
    bonds: tuple[int, ...]

    @property
    def max_rank(self) -> int:
        return max(self.bonds)

    def __iter__(self):
        return iter(self.bonds)

    def __len__(self) -> int:
        return len(self.bonds)

    def __getitem__(self, k):
        return self.bonds[k]


def _freeze(core: np.ndarray) -> np.ndarray:
    arr = np.array(core, dtype=np.complex128, copy=True)
    arr.setflags(write=False)
    return arr


class _TensorTrain:
    _ndim: int = 0

    __slots__ = ("_cores",)

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = tuple(_freeze(c) for c in cores)
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != self._ndim:
                raise ValueError(f"core {k} has {c.ndim} axes, expected {self._ndim}")
        if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[-1] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"bond mismatch between cores {k} and {k + 1}: "
                    f"{cores[k].shape[-1]} != {cores[k + 1].shape[0]}"
                )
        self._cores = cores

    @property
    def cores(self) -> tuple[np.ndarray, ...]:
        return self._cores

    @property
    def n(self) -> int:
        return len(self._cores)

    @property
    def rank_profile(self) -> RankProfile:
        return RankProfile(tuple([1] + [c.shape[-1] for c in self._cores]))

    @property
    def max_rank(self) -> int:
        return self.rank_profile.max_rank

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, ranks={list(self.rank_profile)})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scalar_mul(-1.0, other))

    def __mul__(self, c):
        return scalar_mul(c, self)

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(-1.0, self)


class TTVector(_TensorTrain):
    """Matrix product state: a chain of ``(r_{k-1}, d_k, r_k)`` cores."""

    _ndim = 3
    __slots__ = ()

    @property
    def phys_dims(self) -> list[int]:
        return [c.shape[1] for c in self._cores]


class TTMatrix(_TensorTrain):
    """Matrix product operator: a chain of ``(r_{k-1}, d_k, d_k', r_k)`` cores."""

    _ndim = 4
    __slots__ = ()

    @property
    def phys_dims(self) -> list[int]:
        return [c.shape[1] for c in self._cores]

    @property
    def col_dims(self) -> list[int]:
        return [c.shape[2] for c in self._cores]

    def __matmul__(self, other):
        if isinstance(other, TTMatrix):
            return matmat(self, other)
        if isinstance(other, TTVector):
            return matvec(self, other)
        return NotImplemented


TT = TypeVar("TT", TTVector, TTMatrix)
TTLike = Union[TTVector, TTMatrix]


# ---------------------------------------------------------------------------
# flatten / unflatten between matrix cores and vector-like cores


def _flat(t: TTLike) -> list[np.ndarray]:
    if isinstance(t, TTMatrix):
        return [c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in t.cores]
    return list(t.cores)


def _unflat(cores: list[np.ndarray], like: TTLike):
    if isinstance(like, TTMatrix):
        out = []
        for c, ref in zip(cores, like.cores):
            out.append(c.reshape(c.shape[0], ref.shape[1], ref.shape[2], c.shape[2]))
        return TTMatrix(out)
    return TTVector(cores)


def _check_same_structure(x: TTLike, y: TTLike) -> None:
    if type(x) is not type(y):
        raise TypeError(f"cannot combine {type(x).__name__} with {type(y).__name__}")
    if x.n != y.n:
        raise ValueError(f"site count mismatch: {x.n} != {y.n}")
    for k, (a, b) in enumerate(zip(x.cores, y.cores)):
        if a.shape[1:-1] != b.shape[1:-1]:
            raise ValueError(f"physical dimension mismatch at site {k}")


# ---------------------------------------------------------------------------
# construction


def _num_qubits(size: int) -> int:
    if size <= 0:
        raise ValueError("input is empty")
    n = size.bit_length() - 1
    if 1 << n != size or n == 0:
        raise ValueError(f"length {size} is not a power of two (>= 2)")
    return n


def _truncation_rank(s: np.ndarray, abs_tol: float, max_rank: int | None) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 1
    # drop numerically zero directions even at tol=0
    r = int(np.count_nonzero(s > _RANK_RTOL * s[0]))
    if abs_tol > 0:
        tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]  # tail[j] = ||s[j:]||
        ok = np.nonzero(tail <= abs_tol)[0]
        if ok.size:
            r = min(r, int(ok[0]))
    if max_rank is not None:
        r = min(r, max_rank)
    return max(r, 1)


def _tt_svd(tensor: np.ndarray, dims: list[int], tol: float, max_rank: int | None = None):
    if not np.isfinite(tol) or tol < 0:
        raise ValueError("tol must be finite and >= 0")
    n = len(dims)
    total = np.linalg.norm(tensor)
    delta = tol * total / np.sqrt(n - 1) if n > 1 else 0.0
    cores = []
    rest = np.asarray(tensor, dtype=np.complex128).reshape(-1)
    r_prev = 1
    for k in range(n - 1):
        mat = rest.reshape(r_prev * dims[k], -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        r = _truncation_rank(s, delta, max_rank)
        cores.append(u[:, :r].reshape(r_prev, dims[k], r))
        rest = s[:r, None] * vh[:r]
        r_prev = r
    cores.append(rest.reshape(r_prev, dims[-1], 1))
    return cores


def tt_svd_vector(dense, tol: float = 0.0, max_rank: int | None = None) -> TTVector:
    """Decompose a length-``2**n`` vector by sequential truncated SVD.

    ``tol`` is relative to ``||dense||``; the budget is split evenly as
    ``tol / sqrt(n - 1)`` per bond, so the reconstruction error is at most
    ``tol * ||dense||``.
    """
    v = np.asarray(dense, dtype=np.complex128).reshape(-1)
    n = _num_qubits(v.size)
    return TTVector(_tt_svd(v, [2] * n, tol, max_rank))


def tt_svd_matrix(dense, tol: float = 0.0, max_rank: int | None = None) -> TTMatrix:
    """TT-SVD of a ``2**n x 2**n`` matrix with paired ``(s_k, l_k)`` site indices."""
    m = np.asarray(dense, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    n = _num_qubits(m.shape[0])
    # (s_1..s_n, l_1..l_n) -> (s_1 l_1, s_2 l_2, ...)
    t = m.reshape([2] * (2 * n))
    order = [ax for k in range(n) for ax in (k, n + k)]
    t = t.transpose(order)
    cores = _tt_svd(t, [4] * n, tol, max_rank)
    return TTMatrix([c.reshape(c.shape[0], 2, 2, c.shape[2]) for c in cores])


# ---------------------------------------------------------------------------
# densification


def to_dense_vector(x: TTVector, max_qubits: int | None = None) -> np.ndarray:
    limit = DENSE_VECTOR_MAX_QUBITS if max_qubits is None else max_qubits
    if x.n > limit:
        raise DenseGuardError(f"refusing to densify {x.n}-site vector (limit {limit})")
    out = np.ones((1, 1), dtype=np.complex128)
    for c in x.cores:
        out = np.tensordot(out, c, axes=([1], [0])).reshape(-1, c.shape[2])
    return out.reshape(-1)


def to_dense_matrix(a: TTMatrix, max_qubits: int | None = None) -> np.ndarray:
    limit = DENSE_MATRIX_MAX_QUBITS if max_qubits is None else max_qubits
    if a.n > limit:
        raise DenseGuardError(f"refusing to densify {a.n}-site matrix (limit {limit})")
    rows = cols = 1
    out = np.ones((1, 1, 1), dtype=np.complex128)  # (row, col, bond)
    for c in a.cores:
        t = np.tensordot(out, c, axes=([2], [0]))  # row, col, s, l, b
        t = t.transpose(0, 2, 1, 3, 4)
        rows *= c.shape[1]
        cols *= c.shape[2]
        out = t.reshape(rows, cols, c.shape[3])
    return out[:, :, 0]


# ---------------------------------------------------------------------------
# products


def matvec(a: TTMatrix, x: TTVector) -> TTVector:
    """Exact MPO-MPS product; bond dimensions multiply, no rounding."""
    if a.n != x.n:
        raise ValueError(f"site count mismatch: {a.n} != {x.n}")
    cores = []
    for k, (ca, cx) in enumerate(zip(a.cores, x.cores)):
        if ca.shape[2] != cx.shape[1]:
            raise ValueError(f"physical dimension mismatch at site {k}")
        c = np.einsum("asld,ble->absde", ca, cx)
        cores.append(c.reshape(ca.shape[0] * cx.shape[0], ca.shape[1], ca.shape[3] * cx.shape[2]))
    return TTVector(cores)


def matmat(a: TTMatrix, b: TTMatrix) -> TTMatrix:
    if a.n != b.n:
        raise ValueError(f"site count mismatch: {a.n} != {b.n}")
    cores = []
    for k, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        if ca.shape[2] != cb.shape[1]:
            raise ValueError(f"physical dimension mismatch at site {k}")
        c = np.einsum("asmd,bmle->abslde", ca, cb)
        cores.append(
            c.reshape(
                ca.shape[0] * cb.shape[0], ca.shape[1], cb.shape[2], ca.shape[3] * cb.shape[3]
            )
        )
    return TTMatrix(cores)


def _transfer(xs: list[np.ndarray], ys: list[np.ndarray]) -> complex:
    env = np.ones((1, 1), dtype=np.complex128)
    for cx, cy in zip(xs, ys):
        env = np.einsum("ab,asc,bsd->cd", env, cx.conj(), cy, optimize=True)
    return complex(env[0, 0])


def dot(x: TTLike, y: TTLike) -> complex:
    """Inner product ``<x, y>``, conjugate-linear in ``x``."""
    _check_same_structure(x, y)
    return _transfer(_flat(x), _flat(y))


def norm(x: TTLike) -> float:
    return float(np.sqrt(max(dot(x, x).real, 0.0)))


def frobenius_norm(a: TTMatrix) -> float:
    return norm(a)


def trace_adjoint_product(a: TTMatrix, m: TTMatrix) -> complex:
    """``Tr[A^dagger M]`` by a left-to-right transfer contraction."""
    return dot(a, m)


# ---------------------------------------------------------------------------
# canonical forms and rounding


def _left_qr(core: np.ndarray):
    r0, d, r1 = core.shape
    q, r = np.linalg.qr(core.reshape(r0 * d, r1))
    return q.reshape(r0, d, q.shape[1]), r


def _right_qr(core: np.ndarray):
    r0, d, r1 = core.shape
    q, r = np.linalg.qr(core.reshape(r0, d * r1).T)
    # core = r.T @ q.T with q.T having orthonormal rows
    return q.T.reshape(q.shape[1], d, r1), r.T


def _orthogonalize_flat(cores: list[np.ndarray], center: int) -> list[np.ndarray]:
    cores = list(cores)
    for k in range(center):
        q, r = _left_qr(cores[k])
        cores[k] = q
        cores[k + 1] = np.tensordot(r, cores[k + 1], axes=([1], [0]))
    for k in range(len(cores) - 1, center, -1):
        q, l = _right_qr(cores[k])
        cores[k] = q
        cores[k - 1] = np.tensordot(cores[k - 1], l, axes=([2], [0]))
    return cores


def orthogonalize(t: TT, center: int) -> TT:
    """Mixed-canonical form: cores left of ``center`` (0-based) are
    left-isometric, cores right of it right-isometric."""
    if not 0 <= center < t.n:
        raise ValueError(f"center {center} out of range for {t.n} sites")
    return _unflat(_orthogonalize_flat(_flat(t), center), t)


def tt_round(t: TT, tol: float = 0.0, max_rank: int | None = None) -> TT:
    """Recompress bond dimensions.

    Right-to-left QR sweep, then a left-to-right truncated SVD sweep with a
    per-bond budget of ``tol * ||t|| / sqrt(n - 1)``. The result is
    left-canonical except for the final core.
    """
    if not np.isfinite(tol) or tol < 0:
        raise ValueError("tol must be finite and >= 0")
    if max_rank is not None and max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    cores = _orthogonalize_flat(_flat(t), 0)
    n = len(cores)
    total = np.linalg.norm(cores[0])
    delta = tol * total / np.sqrt(n - 1) if n > 1 else 0.0
    for k in range(n - 1):
        r0, d, r1 = cores[k].shape
        u, s, vh = np.linalg.svd(cores[k].reshape(r0 * d, r1), full_matrices=False)
        r = _truncation_rank(s, delta, max_rank)
        cores[k] = u[:, :r].reshape(r0, d, r)
        cores[k + 1] = np.tensordot(s[:r, None] * vh[:r], cores[k + 1], axes=([1], [0]))
    return _unflat(cores, t)


# ---------------------------------------------------------------------------
# linear combinations


def scalar_mul(c: complex, x: TT) -> TT:
    cores = list(x.cores)
    cores[0] = cores[0] * c
    return type(x)(cores)


def add(x: TT, y: TT) -> TT:
    """Exact sum with block-diagonal cores; rank profiles add."""
    _check_same_structure(x, y)
    xs, ys = _flat(x), _flat(y)
    n = len(xs)
    if n == 1:
        return _unflat([xs[0] + ys[0]], x)
    cores = []
    for k, (a, b) in enumerate(zip(xs, ys)):
        d = a.shape[1]
        if k == 0:
            cores.append(np.concatenate([a, b], axis=2))
        elif k == n - 1:
            cores.append(np.concatenate([a, b], axis=0))
        else:
            c = np.zeros((a.shape[0] + b.shape[0], d, a.shape[2] + b.shape[2]), dtype=np.complex128)
            c[: a.shape[0], :, : a.shape[2]] = a
            c[a.shape[0]:, :, a.shape[2]:] = b
            cores.append(c)
    return _unflat(cores, x)
