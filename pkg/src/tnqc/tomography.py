"""Maximum-likelihood MPS tomography from random-basis measurements.

A record is a per-qubit Pauli basis string plus the observed bitstring.
Its probability under a model MPS is ``|<x| R_b |psi>|^2 / <psi|psi>``;
the amplitude factorizes into one ``r x r`` matrix per site, so the
likelihood and its gradient cost ``O(n r^2)`` per record.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .simulator import BASIS_ROTATIONS
from .tt import TTVector, dot, norm, orthogonalize

__all__ = [
    "MeasurementRecord",
    "TomographyOptions",
    "TomographyReport",
    "VQCSpec",
    "vqc_output_state",
    "vqc_dense_state",
    "ghz_state",
    "product_zero_state",
    "sample_records",
    "model_probability",
    "nll_loss",
    "nll_gradient",
    "initial_model",
    "fit_mps",
    "fidelity",
    "min_records_for_fidelity",
    "write_records_csv",
    "read_records_csv",
]

_BASES = "ZXY"
# _SITE[b, x, s]: amplitude of physical state s in the measured vector for (basis b, outcome x)
_SITE = np.stack([BASIS_ROTATIONS[b] for b in _BASES])


@dataclass(frozen=True)
class MeasurementRecord:
    basis: str
    outcome: str

    def __post_init__(self):
        basis = self.basis.upper()
        if len(basis) != len(self.outcome):
            raise ValueError(f"basis {self.basis!r} and outcome {self.outcome!r} differ in length")
        if set(basis) - set(_BASES):
            raise ValueError(f"invalid basis string {self.basis!r}")
        if set(self.outcome) - {"0", "1"}:
            raise ValueError(f"invalid outcome string {self.outcome!r}")
        object.__setattr__(self, "basis", basis)

    @property
    def n(self) -> int:
        return len(self.basis)


@dataclass(frozen=True)
class TomographyOptions:
    rank: int = 2
    n_records: int = 1000
    batch_size: int = 256
    learning_rate: float = 0.01
    max_epochs: int = 1000
    prob_floor: float = 1e-12
    seed: int = 0
    holdout_fraction: float = 0.1
    patience: int = 100
    # halve the learning rate after this many epochs without held-out improvement
    lr_patience: int = 25

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not self.prob_floor > 0:
            raise ValueError("prob_floor must be > 0")
        if self.batch_size < 1 or self.lr_patience < 1 or self.max_epochs < 0 or self.n_records < 1:
            raise ValueError("batch_size, n_records, lr_patience must be >= 1 and max_epochs >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in [0, 1)")


@dataclass
class TomographyReport:
    train_loss: list[float] = field(default_factory=list)
    holdout_loss: list[float] = field(default_factory=list)
    fidelity_history: list[float] = field(default_factory=list)
    best_epoch: int = 0
    n_records: int = 0
    seed: int = 0

    @property
    def final_fidelity(self) -> float | None:
        if not self.fidelity_history:
            return None
        return self.fidelity_history[self.best_epoch]

    def to_dict(self) -> dict[str, Any]:
        return {
            "final_fidelity": self.final_fidelity,
            "best_epoch": self.best_epoch,
            "n_records": self.n_records,
            "seed": self.seed,
            "train_loss": self.train_loss,
            "holdout_loss": self.holdout_loss,
            "fidelity_history": self.fidelity_history,
        }


# ---------------------------------------------------------------------------
# states


def product_zero_state(n: int) -> TTVector:
    e0 = np.array([1.0, 0.0], dtype=np.complex128).reshape(1, 2, 1)
    return TTVector([e0] * n)


def ghz_state(n: int) -> TTVector:
    """``(|0...0> + |1...1>)/sqrt(2)`` with rank 2."""
    if n < 2:
        raise ValueError("GHZ needs n >= 2")
    first = np.zeros((1, 2, 2), dtype=np.complex128)
    first[0, 0, 0] = first[0, 1, 1] = 2**-0.5
    mid = np.zeros((2, 2, 2), dtype=np.complex128)
    mid[0, 0, 0] = mid[1, 1, 1] = 1.0
    last = np.zeros((2, 2, 1), dtype=np.complex128)
    last[0, 0, 0] = last[1, 1, 0] = 1.0
    return TTVector([first] + [mid] * (n - 2) + [last])


def _euler(a: float, b: float, c: float) -> np.ndarray:
    """``Rz(a) Ry(b) Rz(c)``."""
    rz = lambda t: np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])  # noqa: E731
    ry = np.array(
        [[np.cos(b / 2), -np.sin(b / 2)], [np.sin(b / 2), np.cos(b / 2)]], dtype=np.complex128
    )
    return rz(a) @ ry @ rz(c)


_CNOT = np.eye(4, dtype=np.complex128)[[0, 1, 3, 2]]


@dataclass(frozen=True)
class VQCSpec:
    """Random hardware-efficient circuit: each layer applies a random
    single-qubit gate to every qubit, then CNOTs on pairs (0,1), (2,3), ...
    followed by (1,2), (3,4), .... ``layers=0`` is allowed and gives
    ``|0...0>``."""

    n: int
    layers: int
    seed: int = 0
    angles: np.ndarray | None = None  # (layers, n, 3) Euler angles

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.angles is None:
            rng = np.random.default_rng(self.seed)
            ang = rng.uniform(0, 2 * np.pi, size=(self.layers, self.n, 3))
        else:
            ang = np.asarray(self.angles, dtype=np.float64)
            if ang.shape != (self.layers, self.n, 3):
                raise ValueError(f"angles must have shape {(self.layers, self.n, 3)}")
        object.__setattr__(self, "angles", ang)

    def operations(self):
        """Yield ``(unitary, wires)`` in application order."""
        pairs = [(k, k + 1) for k in range(0, self.n - 1, 2)] + [
            (k, k + 1) for k in range(1, self.n - 1, 2)
        ]
        for layer in range(self.layers):
            for k in range(self.n):
                yield _euler(*self.angles[layer, k]), (k,)
            for p in pairs:
                yield _CNOT, p


def _apply_two_site(cores: list[np.ndarray], k: int, u: np.ndarray) -> None:
    a, b = cores[k], cores[k + 1]
    theta = np.einsum("asb,btc->astc", a, b)
    theta = np.einsum("stuv,auvc->astc", u.reshape(2, 2, 2, 2), theta)
    ra, _, _, rc = theta.shape
    q, s, vh = np.linalg.svd(theta.reshape(ra * 2, 2 * rc), full_matrices=False)
    keep = max(1, int(np.count_nonzero(s > 1e-14 * s[0])))
    cores[k] = q[:, :keep].reshape(ra, 2, keep)
    cores[k + 1] = (s[:keep, None] * vh[:keep]).reshape(keep, 2, rc)


def vqc_output_state(spec: VQCSpec) -> TTVector:
    """Exact MPS of the circuit output on ``|0...0>``; only numerically zero
    singular values are discarded when splitting two-qubit gates."""
    cores = [c.copy() for c in product_zero_state(spec.n).cores]
    for u, wires in spec.operations():
        if len(wires) == 1:
            k = wires[0]
            cores[k] = np.einsum("st,atb->asb", u, cores[k])
        else:
            _apply_two_site(cores, wires[0], u)
    return TTVector(cores)


def vqc_dense_state(spec: VQCSpec) -> np.ndarray:
    """Dense statevector oracle for :func:`vqc_output_state`."""
    psi = np.zeros((2,) * spec.n, dtype=np.complex128)
    psi[(0,) * spec.n] = 1.0
    for u, wires in spec.operations():
        k = len(wires)
        out = np.tensordot(u.reshape((2,) * (2 * k)), psi, axes=(list(range(k, 2 * k)), list(wires)))
        psi = np.moveaxis(out, list(range(k)), list(wires))
    return psi.reshape(-1)


# ---------------------------------------------------------------------------
# records


def _encode(records: Sequence[MeasurementRecord], n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise ValueError("no records")
    n = records[0].n if n is None else n
    if any(r.n != n for r in records):
        raise ValueError(f"all records must have {n} qubits")
    b = np.array([[_BASES.index(c) for c in r.basis] for r in records], dtype=np.intp)
    x = np.array([[int(c) for c in r.outcome] for r in records], dtype=np.intp)
    return b, x


def sample_records(
    state: TTVector, n_records: int, seed: int, basis: str | None = None
) -> list[MeasurementRecord]:
    """Draw i.i.d. uniform per-qubit bases and one Born-rule outcome per record.

    A fixed ``basis`` string (e.g. ``"ZZZZ"``) replaces the random bases.
    Sampling is sequential over sites on the right-canonical form, so it
    works at any ``n``.
    """
    rng = np.random.default_rng(seed)
    n = state.n
    bases = rng.integers(0, 3, size=(n_records, n))
    if basis is not None:
        fixed = MeasurementRecord(basis, "0" * len(basis))
        if fixed.n != n:
            raise ValueError(f"basis has {fixed.n} letters for {n} qubits")
        bases[:] = [_BASES.index(ch) for ch in fixed.basis]
    y = orthogonalize(state, 0)
    cores = list(y.cores)
    cores[0] = cores[0] / np.linalg.norm(cores[0])
    left = np.ones((n_records, 1), dtype=np.complex128)
    outcomes = np.zeros((n_records, n), dtype=np.intp)
    u = rng.random((n_records, n))
    for k, g in enumerate(cores):
        w = _SITE[bases[:, k]]  # (N, x, s)
        v = np.einsum("ia,ixs,asb->ixb", left, w, g)
        p = np.sum(np.abs(v) ** 2, axis=2)
        p0 = p[:, 0] / p.sum(axis=1)
        xk = (u[:, k] >= p0).astype(np.intp)
        outcomes[:, k] = xk
        chosen = v[np.arange(n_records), xk]
        left = chosen / np.linalg.norm(chosen, axis=1, keepdims=True)
    return [
        MeasurementRecord("".join(_BASES[i] for i in bb), "".join(map(str, xx)))
        for bb, xx in zip(bases, outcomes)
    ]


def write_records_csv(path: str | Path, records: Iterable[MeasurementRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["basis", "outcome"])
        for r in records:
            w.writerow([r.basis, r.outcome])


def read_records_csv(path: str | Path) -> list[MeasurementRecord]:
    with Path(path).open(newline="") as fh:
        return [MeasurementRecord(r["basis"], r["outcome"]) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# likelihood


def _amplitudes(cores: Sequence[np.ndarray], b: np.ndarray, x: np.ndarray) -> np.ndarray:
    left = np.ones((b.shape[0], 1), dtype=np.complex128)
    for k, g in enumerate(cores):
        left = np.einsum("ia,is,asb->ib", left, _SITE[b[:, k], x[:, k]], g)
    return left[:, 0]


def _norm_sq(cores: Sequence[np.ndarray]) -> float:
    e = np.ones((1, 1), dtype=np.complex128)
    for g in cores:
        e = np.einsum("ab,asc,bsd->cd", e, g.conj(), g)
    return float(e[0, 0].real)


def model_probability(model: TTVector, rec: MeasurementRecord) -> float:
    """Born probability of ``rec`` under the normalized ``model``."""
    if rec.n != model.n:
        raise ValueError(f"record has {rec.n} qubits, model has {model.n}")
    b, x = _encode([rec])
    amp = _amplitudes(model.cores, b, x)[0]
    return float(abs(amp) ** 2 / _norm_sq(model.cores))


def _probabilities(cores, b, x) -> np.ndarray:
    return np.abs(_amplitudes(cores, b, x)) ** 2 / _norm_sq(cores)


def nll_loss(model: TTVector, records: Sequence[MeasurementRecord], prob_floor: float = 1e-12) -> float:
    """``-(1/N) sum log max(P(record), prob_floor)``."""
    b, x = _encode(records, model.n)
    return _nll(model.cores, b, x, prob_floor)


def _nll(cores, b, x, floor) -> float:
    p = _probabilities(cores, b, x)
    return float(-np.mean(np.log(np.maximum(p, floor))))


def _grad(cores: Sequence[np.ndarray], b: np.ndarray, x: np.ndarray, floor: float):
    """Loss and ``d loss / d conj(core)`` for every core (Wirtinger)."""
    n = len(cores)
    batch = b.shape[0]
    w = [_SITE[b[:, k], x[:, k]] for k in range(n)]
    lefts = [np.ones((batch, 1), dtype=np.complex128)]
    for k in range(n - 1):
        lefts.append(np.einsum("ia,is,asb->ib", lefts[k], w[k], cores[k]))
    rights = [np.ones((batch, 1), dtype=np.complex128)] * n
    for k in range(n - 1, 0, -1):
        rights[k - 1] = np.einsum("asb,is,ib->ia", cores[k], w[k], rights[k])
    amp = np.einsum("ia,is,asb,ib->i", lefts[0], w[0], cores[0], rights[0])

    # norm environments
    el = [np.ones((1, 1), dtype=np.complex128)]
    for g in cores[:-1]:
        el.append(np.einsum("ab,asc,bsd->cd", el[-1], g.conj(), g))
    er = [np.ones((1, 1), dtype=np.complex128)] * n
    for k in range(n - 1, 0, -1):
        er[k - 1] = np.einsum("asc,bsd,cd->ab", cores[k].conj(), cores[k], er[k])
    z = float(np.einsum("ab,asc,bsd,cd->", el[0], cores[0].conj(), cores[0], er[0]).real)

    p = np.abs(amp) ** 2 / z
    live = p >= floor
    loss = float(-np.mean(np.log(np.maximum(p, floor))))
    frac = np.count_nonzero(live) / batch
    scale = np.where(live, 1.0, 0.0) / np.where(live, amp, 1.0)
    grads = []
    for k in range(n):
        data = np.einsum("ia,is,ib->asb", lefts[k] * scale[:, None], w[k], rights[k])
        g = -data.conj() / batch
        g = g + frac * np.einsum("ab,bsd,cd->asc", el[k], cores[k], er[k]) / z
        grads.append(g)
    return loss, grads


def nll_gradient(model: TTVector, records: Sequence[MeasurementRecord], prob_floor: float = 1e-12):
    """``(loss, [d loss / d conj(core_k)])``. The directional derivative
    along ``D`` is ``2 Re sum_k <grad_k, D_k>``."""
    b, x = _encode(records, model.n)
    return _grad(model.cores, b, x, prob_floor)


# ---------------------------------------------------------------------------
# fitting


def fidelity(a: TTVector, b: TTVector) -> float:
    """``|<a|b>|^2 / (||a||^2 ||b||^2)``."""
    if a.n != b.n or a.phys_dims != b.phys_dims:
        raise ValueError("states have different shapes")
    return float(abs(dot(a, b)) ** 2 / (norm(a) ** 2 * norm(b) ** 2))


def initial_model(n: int, rank: int, seed: int) -> TTVector:
    """The random normalized starting point :func:`fit_mps` uses for ``seed``."""
    return TTVector(_init_cores(n, rank, np.random.default_rng(seed)))


def _init_cores(n: int, rank: int, rng: np.random.Generator) -> list[np.ndarray]:
    bonds = [1] + [min(rank, 2 ** min(k, n - k)) for k in range(1, n)] + [1]
    cores = []
    for k in range(n):
        shape = (bonds[k], 2, bonds[k + 1])
        cores.append((rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2))
    return _normalize(cores)


def _normalize(cores: list[np.ndarray]) -> list[np.ndarray]:
    z = _norm_sq(cores)
    s = z ** (-0.5 / len(cores))
    return [g * s for g in cores]


def fit_mps(
    records: Sequence[MeasurementRecord],
    options: TomographyOptions | None = None,
    reference: TTVector | None = None,
    init: TTVector | None = None,
) -> tuple[TTVector, TomographyReport]:
    """Minibatch ADAM on the raw (complex) core entries with the model
    renormalized after each step. A held-out slice of the records picks the
    returned model (lowest held-out loss over epochs)."""
    opt = options or TomographyOptions()
    if not records:
        raise ValueError("no records")
    b_all, x_all = _encode(records)
    n = b_all.shape[1]
    rng = np.random.default_rng([opt.seed, 1])
    perm = rng.permutation(len(records))
    n_hold = int(round(opt.holdout_fraction * len(records))) if len(records) >= 10 else 0
    hold, train = perm[:n_hold], perm[n_hold:]
    b_tr, x_tr = b_all[train], x_all[train]
    b_ho, x_ho = (b_all[hold], x_all[hold]) if n_hold else (b_tr, x_tr)

    if init is not None:
        if init.n != n:
            raise ValueError("init has the wrong number of sites")
        cores = _normalize([np.array(c, dtype=np.complex128) for c in init.cores])
    else:
        cores = list(initial_model(n, opt.rank, opt.seed).cores)
    report = TomographyReport(n_records=len(records), seed=opt.seed)

    def log_epoch(train_loss: float) -> float:
        held = _nll(cores, b_ho, x_ho, opt.prob_floor)
        report.train_loss.append(train_loss)
        report.holdout_loss.append(held)
        if reference is not None:
            report.fidelity_history.append(fidelity(TTVector(cores), reference))
        return held

    best = log_epoch(_nll(cores, b_tr, x_tr, opt.prob_floor))
    best_cores = [c.copy() for c in cores]
    m = [np.zeros_like(c) for c in cores]
    v = [np.zeros(c.shape) for c in cores]
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = 0
    stale = 0
    lr = opt.learning_rate
    for epoch in range(1, opt.max_epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(train), opt.batch_size):
            idx = order[start : start + opt.batch_size]
            loss, grads = _grad(cores, b_tr[idx], x_tr[idx], opt.prob_floor)
            losses.append(loss * len(idx))
            if opt.learning_rate == 0:
                continue
            t += 1
            for k, g in enumerate(grads):
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * np.abs(g) ** 2
                step = (m[k] / (1 - b1**t)) / (np.sqrt(v[k] / (1 - b2**t)) + eps)
                cores[k] = cores[k] - lr * step
            cores = _normalize(cores)
        held = log_epoch(float(sum(losses) / len(train)))
        if held < best - 1e-12:
            best, best_cores, stale = held, [c.copy() for c in cores], 0
            report.best_epoch = epoch
        else:
            stale += 1
            if stale >= opt.patience:
                break
            if stale % opt.lr_patience == 0:
                lr *= 0.5
    return TTVector(best_cores), report


def min_records_for_fidelity(
    truth: TTVector,
    grid: Sequence[int],
    options: TomographyOptions,
    target: float = 0.99,
    data_seed: int = 0,
) -> int | None:
    """Smallest ``N`` in ``grid`` whose fit reaches ``target`` fidelity, or
    ``None`` if even the largest does not.

    Record sets are nested prefixes of one sample, so larger ``N`` only adds
    data; success is treated as monotone in ``N``. The search doubles ``N``
    from the bottom of the grid until a fit succeeds, then bisects the last
    bracket, so the expensive large-``N`` fits are only run when needed.
    """
    grid = sorted(set(int(g) for g in grid))
    pool = sample_records(truth, grid[-1], data_seed)
    cache: dict[int, bool] = {}

    def ok(i: int) -> bool:
        if i not in cache:
            model, _ = fit_mps(pool[: grid[i]], options)
            cache[i] = fidelity(model, truth) >= target
        return cache[i]

    lo, hi = -1, 0  # ok(lo) false (or below the grid), hi is the probe
    while not ok(hi):
        if hi == len(grid) - 1:
            return None
        lo = hi
        nxt = next((j for j in range(hi + 1, len(grid)) if grid[j] >= 2 * grid[hi]), len(grid) - 1)
        hi = nxt
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return grid[hi]
