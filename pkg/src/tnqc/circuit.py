"""Compile unitary MPOs and MPSs into staircase circuits of dense gates.

Wire layout for ``n`` system qubits and ``m = ceil(log2 R)`` ancillas
(``n + m`` wires, wire 0 is the most significant bit)::

    wires 0 .. m-1       ancillas prepared in |0>        (prep_wires)
    wires m .. m+n-1     system input, qubit k on wire m+k  (input_wires)

Gate ``k`` acts on wires ``k .. k+m``. It reads the bond from wires
``k .. k+m-1`` and input qubit ``k`` from wire ``k+m``, and writes output
qubit ``k`` to wire ``k`` and the new bond to wires ``k+1 .. k+m``. After
the last gate the system output sits on wires ``0 .. n-1`` and the bond on
wires ``n .. n+m-1``, the far end of the register, which is what gets
measured and post-selected on all zeros (postselect_wires).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .fit import UnitaryMPO
from .io import array_from_json, array_to_json
from .stiefel import isometry_defect
from .tt import TTVector, norm, orthogonalize

__all__ = [
    "Gate",
    "QuantumCircuit",
    "complete_isometry",
    "circuit_from_unitary_mpo",
    "mps_prep_circuit",
    "circuit_to_dict",
    "circuit_from_dict",
]

_UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class Gate:
    unitary: np.ndarray
    wires: tuple[int, ...]

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=np.complex128)
        wires = tuple(int(w) for w in self.wires)
        if u.shape != (2 ** len(wires),) * 2:
            raise ValueError(f"gate shape {u.shape} does not match {len(wires)} wires")
        if len(set(wires)) != len(wires):
            raise ValueError(f"repeated wire in {wires}")
        if isometry_defect(u) > _UNITARY_TOL:
            raise ValueError("gate matrix is not unitary")
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "wires", wires)


@dataclass(frozen=True)
class QuantumCircuit:
    n_system: int
    n_ancilla: int
    gates: tuple[Gate, ...]
    prep_wires: tuple[int, ...]
    postselect_wires: tuple[int, ...]
    input_wires: tuple[int, ...] = field(default=())
    output_wires: tuple[int, ...] = field(default=())

    def __post_init__(self):
        n_wires = self.n_wires
        if len(self.prep_wires) != self.n_ancilla or len(self.postselect_wires) != self.n_ancilla:
            raise ValueError("ancilla registers must have n_ancilla wires")
        for g in self.gates:
            if max(g.wires) >= n_wires or min(g.wires) < 0:
                raise ValueError(f"gate wires {g.wires} out of range for {n_wires} wires")
        if not self.input_wires:
            object.__setattr__(
                self, "input_wires", tuple(range(self.n_ancilla, self.n_ancilla + self.n_system))
            )
        if not self.output_wires:
            object.__setattr__(self, "output_wires", tuple(range(self.n_system)))
        if sorted(self.prep_wires + self.input_wires) != list(range(n_wires)):
            raise ValueError("prep and input wires must partition the register")
        if sorted(self.postselect_wires + self.output_wires) != list(range(n_wires)):
            raise ValueError("postselect and output wires must partition the register")

    @property
    def n_wires(self) -> int:
        return self.n_system + self.n_ancilla


def _complement(v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    m, p = v.shape
    if p == m:
        return np.zeros((m, 0), dtype=np.complex128)
    # complete QR gives an orthonormal complement even when a random draw
    # happens to lie near span(v); a seeded rotation keeps it generic
    basis = np.linalg.qr(v, mode="complete")[0][:, p:]
    z = rng.standard_normal((m - p, m - p)) + 1j * rng.standard_normal((m - p, m - p))
    q, r = np.linalg.qr(z)
    return basis @ (q * (np.diag(r) / np.abs(np.diag(r))))


def complete_isometry(v: np.ndarray, seed: int = 0) -> np.ndarray:
    """Extend an ``m x p`` isometry to an ``m x m`` unitary whose first ``p``
    columns are ``v``. The complement is the QR of a seeded random block
    projected off ``v``, so the result is deterministic."""
    v = np.asarray(v, dtype=np.complex128)
    m, p = v.shape
    if p > m:
        raise ValueError("need m >= p")
    if isometry_defect(v) > 1e-8:
        raise ValueError("input is not an isometry")
    return np.concatenate([v, _complement(v, np.random.default_rng(seed))], axis=1)


def _unitary_with_columns(cols: np.ndarray, where: list[int], seed: int) -> np.ndarray:
    """Unitary whose columns at positions ``where`` equal ``cols``."""
    dim = cols.shape[0]
    full = complete_isometry(cols, seed)
    rest = [j for j in range(dim) if j not in set(where)]
    out = np.empty_like(full)
    out[:, where] = full[:, : len(where)]
    out[:, rest] = full[:, len(where):]
    return out


def _ancilla_count(r: int) -> int:
    return int(math.ceil(math.log2(r))) if r > 1 else 0


def circuit_from_unitary_mpo(a: UnitaryMPO, seed: int = 0) -> QuantumCircuit:
    """Turn each isometric core into one gate on ``m + 1`` wires.

    The post-selected block ``<0|_post U |0>_prep`` equals ``dense(a.mpo)``.
    Boundary isometries are completed with :func:`complete_isometry`; the
    block does not depend on the completion.
    """
    a.check(1e-8)
    n = a.n
    m = _ancilla_count(a.R)
    dim_bond = 2**m
    gates = []
    for k, core in enumerate(a.mpo.cores):
        ra, s, l, rb = core.shape
        # full[(s, b), (a, l)] with bonds zero-padded to the register size
        full = np.zeros((2, dim_bond, dim_bond, 2), dtype=np.complex128)
        full[:, :rb, :ra, :] = core.transpose(1, 3, 0, 2)
        full = full.reshape(2 * dim_bond, 2 * dim_bond)
        if k == n - 1 and n > 1:
            # only rows with outgoing bond 0 are specified; complete the rows
            rows = [sv * dim_bond for sv in range(2)]
            u = _unitary_with_columns(full[rows].conj().T, rows, seed + k).conj().T
        else:
            cols = list(range(2 * ra))
            u = _unitary_with_columns(full[:, cols], cols, seed + k)
        gates.append(Gate(u, tuple(range(k, k + m + 1))))
    return QuantumCircuit(
        n_system=n,
        n_ancilla=m,
        gates=tuple(gates),
        prep_wires=tuple(range(m)),
        postselect_wires=tuple(range(n, n + m)),
    )


def mps_prep_circuit(x: TTVector, seed: int = 0) -> QuantumCircuit:
    """Staircase circuit preparing a normalized MPS from ``|0...0>``.

    The MPS is brought to right-canonical form; gate ``k`` maps
    ``|a>|0> -> sum_{s,b} B_k[a, s, b] |s>|b>``. The bond register ends in
    ``|0>`` with certainty, so the post-selection on it always succeeds.
    """
    nrm = norm(x)
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError(f"state must be normalized (norm = {nrm:.12f})")
    if any(d != 2 for d in x.phys_dims):
        raise ValueError("only qubit MPSs are supported")
    n = x.n
    y = orthogonalize(x, 0)
    m = _ancilla_count(y.max_rank)
    dim_bond = 2**m
    gates = []
    for k, core in enumerate(y.cores):
        ra, _, rb = core.shape
        if k == 0:
            core = core / np.linalg.norm(core)
        full = np.zeros((2, dim_bond, dim_bond), dtype=np.complex128)
        full[:, :rb, :ra] = core.transpose(1, 2, 0)
        cols = [2 * av for av in range(ra)]  # gate columns (a, input 0)
        u = _unitary_with_columns(full.reshape(2 * dim_bond, dim_bond)[:, :ra], cols, seed + k)
        gates.append(Gate(u, tuple(range(k, k + m + 1))))
    return QuantumCircuit(
        n_system=n,
        n_ancilla=m,
        gates=tuple(gates),
        prep_wires=tuple(range(m)),
        postselect_wires=tuple(range(n, n + m)),
    )


def circuit_to_dict(circ: QuantumCircuit) -> dict[str, Any]:
    return {
        "n_system": circ.n_system,
        "n_ancilla": circ.n_ancilla,
        "gates": [
            {"wires": list(g.wires), **{k: v for k, v in array_to_json(g.unitary).items() if k != "shape"}}
            for g in circ.gates
        ],
        "prep_wires": list(circ.prep_wires),
        "postselect_wires": list(circ.postselect_wires),
        "input_wires": list(circ.input_wires),
        "output_wires": list(circ.output_wires),
    }


def circuit_from_dict(d: dict[str, Any]) -> QuantumCircuit:
    gates = []
    for g in d["gates"]:
        dim = 2 ** len(g["wires"])
        u = array_from_json({"shape": [dim, dim], "re": g["re"], "im": g["im"]})
        gates.append(Gate(u, tuple(g["wires"])))
    n, m = int(d["n_system"]), int(d["n_ancilla"])
    return QuantumCircuit(
        n_system=n,
        n_ancilla=m,
        gates=tuple(gates),
        prep_wires=tuple(d.get("prep_wires", range(m))),
        postselect_wires=tuple(d["postselect_wires"]),
        input_wires=tuple(d.get("input_wires", ())),
        output_wires=tuple(d.get("output_wires", ())),
    )
