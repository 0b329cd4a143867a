"""Closed-form MPO constructors for the benchmark matrices.

All operators use the site-0-is-MSB convention of :mod:`tnqc.tt`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .tt import (
    DENSE_MATRIX_MAX_QUBITS,
    DenseGuardError,
    TTMatrix,
    TTVector,
    matmat,
    tt_round,
    tt_svd_matrix,
)

__all__ = [
    "IsingParams",
    "identity_mpo",
    "diag_linear_mpo",
    "laplace_mpo",
    "mct_mpo",
    "ising_mpo",
    "ising_dense",
    "evolution_dense",
    "evolution_mpo",
    "trotter_mpo",
    "diag_mpo_from_mps",
    "MATRIX_NAMES",
    "build_matrix",
]

I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
P1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)


@dataclass(frozen=True)
class IsingParams:
    """Open transverse/longitudinal-field Ising chain
    ``H = J sum Z_k Z_{k+1} + g sum X_k + h sum Z_k``."""

    n: int
    J: float = 2.0
    g: float = 1.0
    h: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("Ising chain needs n >= 2")


def _from_operator_grid(grids: list[np.ndarray]) -> TTMatrix:
    """Build an MPO from per-site grids ``W[a, b]`` of 2x2 operators, shape (ra, rb, 2, 2)."""
    return TTMatrix([g.transpose(0, 2, 3, 1) for g in grids])


def _check_n(n: int, minimum: int = 1) -> None:
    if int(n) != n or n < minimum:
        raise ValueError(f"n must be an integer >= {minimum}, got {n}")


def identity_mpo(n: int) -> TTMatrix:
    _check_n(n)
    return TTMatrix([I2.reshape(1, 2, 2, 1)] * n)


def diag_linear_mpo(n: int) -> TTMatrix:
    """``diag(0, 1, ..., 2**n - 1)``; bond state 0 = nothing added yet, 1 = done."""
    _check_n(n)
    if n == 1:
        return TTMatrix([P1.reshape(1, 2, 2, 1)])
    grids = []
    for k in range(n):
        w = float(2 ** (n - 1 - k))
        g = np.zeros((2, 2, 2, 2), dtype=np.complex128)
        g[0, 0] = I2
        g[0, 1] = w * P1
        g[1, 1] = I2
        if k == 0:
            g = g[:1]
        if k == n - 1:
            g = g[:, 1:]
        grids.append(g)
    return _from_operator_grid(grids)


def laplace_mpo(n: int) -> TTMatrix:
    """``tridiag(-1, 2, -1)`` with Dirichlet ends, exact rank 3.

    The bond carries a binary carry flowing from the least significant
    site: state 0 = bits agree so far, 1 = pending ``+1`` on the column
    index (superdiagonal), 2 = pending ``+1`` on the row index (subdiagonal).
    """
    _check_n(n)
    g = np.zeros((3, 3, 2, 2), dtype=np.complex128)
    g[0, 0] = I2
    # superdiagonal: s + carry = l + 2*carry_out
    g[0, 1][0, 1] = 1.0
    g[1, 1][1, 0] = 1.0
    # subdiagonal: l + carry = s + 2*carry_out
    g[0, 2][1, 0] = 1.0
    g[2, 2][0, 1] = 1.0
    right = np.array([2.0, -1.0, -1.0])
    if n == 1:
        return _from_operator_grid([np.einsum("abij,b->aij", g[:1], right)[:, None]])
    grids = [g[:1]] + [g] * (n - 2) + [np.einsum("abij,b->aij", g, right)[:, None]]
    return _from_operator_grid(grids)


def mct_mpo(n: int) -> TTMatrix:
    """Multi-controlled X on the last qubit, controlled by all others; rank 2."""
    _check_n(n, 2)
    first = np.stack([I2, P1])[None]  # (1, 2, 2, 2)
    inner = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    inner[0, 0] = I2
    inner[1, 1] = P1
    last = np.stack([I2, X - I2])[:, None]  # (2, 1, 2, 2)
    return _from_operator_grid([first] + [inner] * (n - 2) + [last])


def ising_mpo(p: IsingParams) -> TTMatrix:
    """Rank-3 finite-state-machine MPO of the open Ising chain."""
    onsite = p.g * X + p.h * Z
    w = np.zeros((3, 3, 2, 2), dtype=np.complex128)
    w[0, 0] = I2
    w[0, 1] = p.J * Z
    w[0, 2] = onsite
    w[1, 2] = Z
    w[2, 2] = I2
    grids = [w[:1]] + [w] * (p.n - 2) + [w[:, 2:]]
    return _from_operator_grid(grids)


def ising_dense(p: IsingParams) -> np.ndarray:
    """Dense Hamiltonian as an explicit sum of Pauli strings (oracle path)."""
    dim = 2**p.n

    def embed(ops: dict[int, np.ndarray]) -> np.ndarray:
        out = np.ones((1, 1), dtype=np.complex128)
        for k in range(p.n):
            out = np.kron(out, ops.get(k, I2))
        return out

    h = np.zeros((dim, dim), dtype=np.complex128)
    for k in range(p.n - 1):
        h += p.J * embed({k: Z, k + 1: Z})
    for k in range(p.n):
        h += p.g * embed({k: X}) + p.h * embed({k: Z})
    return h


def evolution_dense(p: IsingParams, dt: float) -> np.ndarray:
    if p.n > DENSE_MATRIX_MAX_QUBITS:
        raise DenseGuardError(f"dense evolution limited to n <= {DENSE_MATRIX_MAX_QUBITS}")
    return scipy.linalg.expm(-1j * dt * ising_dense(p))


def evolution_mpo(p: IsingParams, dt: float, tol: float = 1e-6) -> TTMatrix:
    """``exp(-i H dt)`` via a dense Pade exponential compressed by TT-SVD at ``tol``."""
    if p.n > DENSE_MATRIX_MAX_QUBITS:
        raise DenseGuardError(
            f"evolution_mpo is dense-backed (n <= {DENSE_MATRIX_MAX_QUBITS}); use trotter_mpo"
        )
    return tt_svd_matrix(evolution_dense(p, dt), tol)


def _x_layer(p: IsingParams, theta: float) -> TTMatrix:
    u = scipy.linalg.expm(-1j * theta * p.g * X)
    return TTMatrix([u.reshape(1, 2, 2, 1)] * p.n)


def _diag_layer(p: IsingParams, theta: float) -> TTMatrix:
    # bond carries the previous spin; phase exp(-i theta (J z_{k-1} z_k + h z_k))
    spin = np.array([1.0, -1.0])
    cores = []
    for k in range(p.n):
        left = 1 if k == 0 else 2
        c = np.zeros((left, 2, 2, 2), dtype=np.complex128)
        for a in range(left):
            for s in range(2):
                e = p.h * spin[s]
                if k > 0:
                    e += p.J * spin[a] * spin[s]
                c[a, s, s, s] = np.exp(-1j * theta * e)
        if k == p.n - 1:
            c = c.sum(axis=3, keepdims=True)
        cores.append(c)
    return TTMatrix(cores)


def trotter_mpo(p: IsingParams, dt: float, order: int = 1, tol: float = 1e-12) -> TTMatrix:
    """Product-formula approximation of ``exp(-i H dt)``.

    The split is diagonal terms (ZZ and Z) against the transverse X terms.
    Order 1 is ``e^{-i dt H_diag} e^{-i dt H_X}``; order 2 is the symmetric
    ``e^{-i dt/2 H_X} e^{-i dt H_diag} e^{-i dt/2 H_X}``. No dense matrices
    are formed, so any ``n`` works.
    """
    if order == 1:
        u = matmat(_diag_layer(p, dt), _x_layer(p, dt))
    elif order == 2:
        half = _x_layer(p, dt / 2)
        u = matmat(matmat(half, _diag_layer(p, dt)), half)
    else:
        raise ValueError(f"unsupported Trotter order {order}")
    return tt_round(u, tol)


def diag_mpo_from_mps(y: TTVector) -> TTMatrix:
    """Diagonal operator ``diag(y)`` with the same rank profile as ``y``."""
    cores = []
    for c in y.cores:
        r0, d, r1 = c.shape
        out = np.zeros((r0, d, d, r1), dtype=np.complex128)
        idx = np.arange(d)
        out[:, idx, idx, :] = c
        cores.append(out)
    return TTMatrix(cores)


MATRIX_NAMES = ("identity", "diag", "laplace", "mct", "ising", "evolution", "trotter1", "trotter2")


def build_matrix(
    name: str,
    n: int,
    *,
    dt: float = 0.05,
    tol: float = 1e-6,
    ising: IsingParams | None = None,
) -> TTMatrix:
    """Look up a constructor by its CLI name."""
    if name == "identity":
        return identity_mpo(n)
    if name == "diag":
        return diag_linear_mpo(n)
    if name == "laplace":
        return laplace_mpo(n)
    if name == "mct":
        return mct_mpo(n)
    p = ising if ising is not None else IsingParams(n)
    if name == "ising":
        return ising_mpo(p)
    if name == "evolution":
        return evolution_mpo(p, dt, tol)
    if name == "trotter1":
        return trotter_mpo(p, dt, 1, tol)
    if name == "trotter2":
        return trotter_mpo(p, dt, 2, tol)
    raise ValueError(f"unknown matrix {name!r}; choose from {', '.join(MATRIX_NAMES)}")
