"""Dense statevector simulation with ancilla preparation and post-selection.

Wire 0 is the most significant bit of the amplitude index, matching the
site order of :mod:`tnqc.tt`. All randomness goes through
``numpy.random.default_rng(seed)`` (PCG64), and every stochastic function
takes an explicit seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .circuit import Gate, QuantumCircuit
from .fit import UnitaryMPO
from .tt import (
    DENSE_MATRIX_MAX_QUBITS,
    DenseGuardError,
    TTMatrix,
    TTVector,
    frobenius_norm,
    matvec,
    norm,
    to_dense_matrix,
    to_dense_vector,
)

__all__ = [
    "MAX_WIRES",
    "BASIS_ROTATIONS",
    "CIRCUIT_MATRIX_MAX_QUBITS",
    "Statevector",
    "RunResult",
    "SpectralReport",
    "apply_gate",
    "run_postselected",
    "circuit_to_matrix",
    "exact_success_prob",
    "spectral_success_prob",
    "avg_success_prob",
    "sample_measurements",
    "write_samples_csv",
    "read_samples_csv",
    "haar_random_state",
    "basis_state",
]

MAX_WIRES = 16
CIRCUIT_MATRIX_MAX_QUBITS = 8

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
_SDG = np.diag([1, -1j]).astype(np.complex128)
# measurement rotations: outcome 0 is the +1 eigenstate of the Pauli
BASIS_ROTATIONS = {"Z": np.eye(2, dtype=np.complex128), "X": _H, "Y": _H @ _SDG}


@dataclass(frozen=True)
class Statevector:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amp.size != 2**self.n:
            raise ValueError(f"{amp.size} amplitudes do not describe {self.n} qubits")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm - 1.0) <= 1e-10

    def normalized(self) -> "Statevector":
        nrm = self.norm
        if nrm == 0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return Statevector(self.n, self.amplitudes / nrm)

    @classmethod
    def from_tt(cls, x: TTVector) -> "Statevector":
        return cls(x.n, to_dense_vector(x, MAX_WIRES))


@dataclass(frozen=True)
class RunResult:
    output: Statevector
    success_prob: float
    shots_attempted: int = 0
    shots_accepted: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.shots_accepted / self.shots_attempted if self.shots_attempted else float("nan")

    def to_dict(self) -> dict[str, Any]:
        amp = self.output.amplitudes
        return {
            "n": self.output.n,
            "success_prob": self.success_prob,
            "shots_attempted": self.shots_attempted,
            "shots_accepted": self.shots_accepted,
            "output": {"re": [float(v) for v in amp.real], "im": [float(v) for v in amp.imag]},
        }


@dataclass(frozen=True)
class SpectralReport:
    success_prob: float
    max_success_prob: float
    singular_values: np.ndarray
    overlaps: np.ndarray  # |<v_k|psi>|^2 for right singular vectors v_k


def basis_state(bits: str | Iterable[int]) -> Statevector:
    bits = [int(b) for b in bits]
    idx = int("".join(map(str, bits)), 2) if bits else 0
    amp = np.zeros(2 ** len(bits), dtype=np.complex128)
    amp[idx] = 1.0
    return Statevector(len(bits), amp)


def _apply(tensor: np.ndarray, u: np.ndarray, wires: tuple[int, ...]) -> np.ndarray:
    """Contract ``u`` onto ``wires`` of a (2,)*N tensor (optionally with a trailing batch axis)."""
    k = len(wires)
    ut = u.reshape((2,) * (2 * k))
    out = np.tensordot(ut, tensor, axes=(list(range(k, 2 * k)), list(wires)))
    # tensordot puts the gate outputs first; move them back into place
    n_axes = tensor.ndim
    rest = [w for w in range(n_axes) if w not in wires]
    order = list(wires) + rest
    return np.moveaxis(out, list(range(n_axes)), order)


def apply_gate(state: Statevector, g: Gate) -> Statevector:
    if max(g.wires) >= state.n or min(g.wires) < 0:
        raise ValueError(f"gate wires {g.wires} out of range for {state.n} qubits")
    t = state.amplitudes.reshape((2,) * state.n)
    return Statevector(state.n, _apply(t, g.unitary, g.wires).reshape(-1))


def _full_input(circ: QuantumCircuit, psi: np.ndarray) -> np.ndarray:
    """``psi`` on the input wires and ``|0>`` on the prep wires, as a (2,)*N tensor.
    A trailing batch axis of ``psi`` is carried along."""
    batch = psi.shape[1:]
    t = np.zeros((2,) * circ.n_wires + batch, dtype=np.complex128)
    zero = (0,) * circ.n_ancilla
    src = psi.reshape((2,) * circ.n_system + batch)
    # index: prep wires fixed to 0, input wires free
    view = np.moveaxis(t, list(circ.prep_wires) + list(circ.input_wires), range(circ.n_wires))
    view[zero] = src
    return t


def _run(circ: QuantumCircuit, psi: np.ndarray) -> np.ndarray:
    if circ.n_wires > MAX_WIRES:
        raise DenseGuardError(f"simulation limited to {MAX_WIRES} wires, circuit has {circ.n_wires}")
    t = _full_input(circ, psi)
    for g in circ.gates:
        t = _apply(t, g.unitary, g.wires)
    return t


def _split(circ: QuantumCircuit, t: np.ndarray) -> np.ndarray:
    """Reorder a final tensor to (postselect register, output register, batch...)."""
    order = list(circ.postselect_wires) + list(circ.output_wires)
    moved = np.moveaxis(t, order, range(circ.n_wires))
    return moved.reshape((2**circ.n_ancilla, 2**circ.n_system) + t.shape[circ.n_wires:])


def run_postselected(
    circ: QuantumCircuit,
    input_state: Statevector,
    *,
    shots: int = 0,
    seed: int | None = None,
) -> RunResult:
    """Run ``circ`` on ``input_state`` and post-select the ancillas on zero.

    With ``shots == 0`` the projected amplitude is computed directly. With
    ``shots > 0`` the measure-and-retry loop is simulated: each attempt
    measures the ancilla register from the Born distribution and is accepted
    when all outcomes are zero. The output state is the same either way.
    """
    if input_state.n != circ.n_system:
        raise ValueError(f"input has {input_state.n} qubits, circuit expects {circ.n_system}")
    final = _split(circ, _run(circ, input_state.amplitudes))
    projected = final[0]
    p = float(np.vdot(projected, projected).real)
    if p > 0:
        out = Statevector(circ.n_system, projected / np.sqrt(p))
    else:
        out = Statevector(circ.n_system, projected)
    if shots <= 0:
        return RunResult(out, p)
    if seed is None:
        raise ValueError("sampled mode needs an explicit seed")
    rng = np.random.default_rng(seed)
    probs = np.sum(np.abs(final) ** 2, axis=1)
    probs = probs / probs.sum()
    outcomes = rng.choice(probs.size, size=shots, p=probs)
    accepted = int(np.count_nonzero(outcomes == 0))
    return RunResult(out, p, shots_attempted=int(shots), shots_accepted=accepted)


def circuit_to_matrix(circ: QuantumCircuit, max_qubits: int = CIRCUIT_MATRIX_MAX_QUBITS) -> np.ndarray:
    """``<0|_post U |0>_prep`` as a dense matrix on the system register."""
    if circ.n_system > max_qubits:
        raise DenseGuardError(f"circuit_to_matrix limited to n_system <= {max_qubits}")
    dim = 2**circ.n_system
    final = _split(circ, _run(circ, np.eye(dim, dtype=np.complex128)))
    return final[0]


def _as_mpo(a: TTMatrix | UnitaryMPO) -> TTMatrix:
    return a.mpo if isinstance(a, UnitaryMPO) else a


def exact_success_prob(a: TTMatrix | UnitaryMPO, psi: TTVector) -> float:
    """``||A psi||^2`` in TT form. For a :class:`UnitaryMPO` this is the
    block the circuit implements, so ``c`` is not applied."""
    a = _as_mpo(a)
    if a.n != psi.n or a.col_dims != psi.phys_dims:
        raise ValueError("operator and state sizes differ")
    return norm(matvec(a, psi)) ** 2


def spectral_success_prob(
    a: TTMatrix | UnitaryMPO | np.ndarray, psi: TTVector | Statevector | np.ndarray
) -> SpectralReport:
    """Success probability through the singular spectrum of ``A``:
    ``sum_k s_k^2 |<v_k|psi>|^2`` with ``v_k`` the right singular vectors."""
    if isinstance(a, np.ndarray):
        dense = a
        if dense.shape[0] > 2**DENSE_MATRIX_MAX_QUBITS:
            raise DenseGuardError("matrix too large for a dense SVD")
    else:
        dense = to_dense_matrix(_as_mpo(a), DENSE_MATRIX_MAX_QUBITS)
    if isinstance(psi, TTVector):
        v = to_dense_vector(psi, DENSE_MATRIX_MAX_QUBITS)
    elif isinstance(psi, Statevector):
        v = psi.amplitudes
    else:
        v = np.asarray(psi, dtype=np.complex128)
    if v.size != dense.shape[1]:
        raise ValueError("operator and state sizes differ")
    _, s, vh = np.linalg.svd(dense)
    overlaps = np.abs(vh @ v) ** 2  # rows of vh are v_k^dagger
    return SpectralReport(
        success_prob=float(np.sum(s**2 * overlaps)),
        max_success_prob=float(s[0] ** 2),
        singular_values=s,
        overlaps=overlaps,
    )


def avg_success_prob(a: TTMatrix | UnitaryMPO) -> float:
    """Haar-averaged success probability ``||A||_F^2 / 2^n``."""
    a = _as_mpo(a)
    # log-space to stay finite at large n
    return float(np.exp(2 * np.log(max(frobenius_norm(a), 1e-300)) - a.n * np.log(2)))


def haar_random_state(n: int, seed: int) -> Statevector:
    """Normalized complex Gaussian vector, which is Haar-distributed."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return Statevector(n, z / np.linalg.norm(z))


def _rotate(state: Statevector, basis: str) -> np.ndarray:
    t = state.amplitudes.reshape((2,) * state.n)
    for w, b in enumerate(basis):
        if b != "Z":
            t = _apply(t, BASIS_ROTATIONS[b], (w,))
    return t.reshape(-1)


def _check_basis(basis: str, n: int) -> str:
    basis = basis.upper()
    if len(basis) != n:
        raise ValueError(f"basis {basis!r} has {len(basis)} letters for {n} qubits")
    bad = set(basis) - set(BASIS_ROTATIONS)
    if bad:
        raise ValueError(f"invalid basis letter(s) {sorted(bad)}; use X, Y or Z")
    return basis


def sample_measurements(state: Statevector, basis: str, shots: int, seed: int) -> list[str]:
    """Measure every qubit in the given per-qubit Pauli basis.

    X is measured after a Hadamard, Y after ``S^dagger`` then Hadamard, so
    outcome ``0`` always means the +1 eigenstate.
    """
    basis = _check_basis(basis, state.n)
    if shots < 0:
        raise ValueError("shots must be non-negative")
    amp = _rotate(state, basis)
    probs = np.abs(amp) ** 2
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    idx = rng.choice(probs.size, size=shots, p=probs)
    return [format(int(i), f"0{state.n}b") for i in idx]


def write_samples_csv(path: str | Path, rows: Iterable[tuple[str, str]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["basis", "outcome"])
        w.writerows(rows)


def read_samples_csv(path: str | Path) -> list[tuple[str, str]]:
    with Path(path).open(newline="") as fh:
        return [(r["basis"], r["outcome"]) for r in csv.DictReader(fh)]
