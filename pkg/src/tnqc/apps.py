"""Experiment drivers behind the command-line interface.

Every driver takes an :class:`ExperimentConfig`, writes its CSV/JSON
artifacts under ``config.out`` and returns a small summary dict. Each
artifact carries the config hash and the package version, and re-running a
config produces identical CSV bytes (no timestamps, no timings).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .circuit import circuit_from_dict, circuit_from_unitary_mpo, circuit_to_dict
from .fit import FitOptions, UnitaryMPO, fit_unitary_mpo
from .io import read_json, unitary_mpo_from_dict, unitary_mpo_to_dict, write_json
from .mpo_zoo import (
    MATRIX_NAMES,
    IsingParams,
    build_matrix,
    diag_mpo_from_mps,
    evolution_dense,
    evolution_mpo,
    identity_mpo,
    laplace_mpo,
    trotter_mpo,
)
from .simulator import (
    CIRCUIT_MATRIX_MAX_QUBITS,
    Statevector,
    avg_success_prob,
    circuit_to_matrix,
    exact_success_prob,
    haar_random_state,
    run_postselected,
    spectral_success_prob,
)
from .tomography import (
    TomographyOptions,
    VQCSpec,
    fidelity,
    fit_mps,
    initial_model,
    sample_records,
    vqc_output_state,
)
from .tt import (
    DENSE_VECTOR_MAX_QUBITS,
    DenseGuardError,
    TTMatrix,
    TTVector,
    add,
    dot,
    matvec,
    norm,
    scalar_mul,
    to_dense_matrix,
    to_dense_vector,
    tt_round,
    tt_svd_vector,
)

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "HeatConfig",
    "FIT_PRESETS",
    "load_config",
    "config_hash",
    "fit_options",
    "relative_error",
    "cmd_encode",
    "cmd_verify",
    "cmd_sweep",
    "cmd_evolution",
    "cmd_heat",
    "cmd_power",
    "tt_greedy_argmax",
    "cmd_tomo",
    "COMMANDS",
]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

# Fit settings by matrix family. "balanced" keeps the ADAM iterate, which
# lands on solutions with a usable success probability; "accurate" adds a
# Riemannian L-BFGS polish, for targets where only the error matters.
FIT_PRESETS: dict[str, dict[str, Any]] = {
    "balanced": {"iters": 5000, "learning_rate": 0.1, "lr_decay": 0.01, "init": "random_haar", "polish": 0},
    "accurate": {"iters": 300, "learning_rate": 0.1, "lr_decay": 0.01, "init": "random_haar", "polish": 1000},
}
_PRESET_FOR = {"mct": "accurate", "ising": "accurate", "evolution": "accurate",
               "trotter1": "accurate", "trotter2": "accurate"}
# a Haar-random start overlaps the target by ~exp(-n), so its gradient
# vanishes at large n; above this size the start is derived from the target
RANDOM_INIT_MAX_QUBITS = 16


@dataclass
class ExperimentConfig:
    """All knobs of every command; each command reads the ones it needs.

    ``None`` for a fit setting means "take it from the preset of the matrix
    family" (see :data:`FIT_PRESETS`).
    """

    command: str = "encode"
    matrix: str = "diag"
    qubits: int = 5
    rank: int = 16
    seed: int = 0
    out: str = "out"
    tol: float = 1e-6
    dt: float = 0.05
    order: int = 1
    layers: int = 2
    shots: int = 10000
    # fit settings (None: preset)
    iters: int | None = None
    learning_rate: float | None = None
    lr_decay: float | None = None
    init: str | None = None
    polish: int | None = None
    preset: str | None = None
    # sweep
    sweep_qubits: list[int] = field(default_factory=lambda: [4, 6, 8, 10])
    sweep_ranks: list[int] = field(default_factory=lambda: [2, 4, 8, 16])
    # evolution
    dt_list: list[float] = field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0])
    fit_ranks: list[int] = field(default_factory=lambda: [4, 8, 16])
    # verify
    artifacts: str | None = None
    # heat / power
    steps: int = 100
    diffusivity: float = 1.0
    dx: float | None = None
    initial: str = "sin"
    function: str = "ramp"
    index: int = 0
    max_rank: int | None = None
    circuit: bool = False
    # tomography
    records: list[int] = field(default_factory=lambda: [0, 500, 1000, 2000, 4000, 8000])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    model_rank: int | None = None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls(**dict(data))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.matrix not in MATRIX_NAMES:
            raise ConfigError(f"unknown matrix {self.matrix!r}; choose from {', '.join(MATRIX_NAMES)}")
        if self.qubits < 1:
            raise ConfigError("qubits must be >= 1")
        if self.rank < 1 or self.rank & (self.rank - 1):
            raise ConfigError("rank must be a power of two")
        if self.tol < 0 or self.dt <= 0:
            raise ConfigError("tol must be >= 0 and dt > 0")
        if self.preset is not None and self.preset not in FIT_PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.dx is not None and self.dx <= 0:
            raise ConfigError("dx must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class HeatConfig:
    n: int
    diffusivity: float
    dt: float
    dx: float
    steps: int
    tol: float
    initial: str = "sin"
    max_rank: int | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.dx <= 0:
            raise ConfigError("dt and dx must be > 0")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")

    @property
    def courant(self) -> float:
        return self.dt * self.diffusivity / self.dx**2

    @classmethod
    def from_experiment(cls, cfg: ExperimentConfig) -> "HeatConfig":
        dx = cfg.dx if cfg.dx is not None else 1.0 / (2**cfg.qubits + 1)
        return cls(cfg.qubits, cfg.diffusivity, cfg.dt, dx, cfg.steps, cfg.tol, cfg.initial, cfg.max_rank)


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a JSON or YAML config file (by suffix) into a plain dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return data


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of every setting except output locations."""
    d = cfg.to_dict()
    d.pop("out", None)
    d.pop("artifacts", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fit_options(cfg: ExperimentConfig, R: int | None = None, n: int | None = None) -> FitOptions:
    preset = dict(FIT_PRESETS[cfg.preset or _PRESET_FOR.get(cfg.matrix, "balanced")])
    if (cfg.qubits if n is None else n) > RANDOM_INIT_MAX_QUBITS:
        preset["init"] = "polar_from_target"

    def pick(name):
        v = getattr(cfg, name)
        return preset[name] if v is None else v

    return FitOptions(
        R=cfg.rank if R is None else R,
        max_iters=int(pick("iters")),
        learning_rate=float(pick("learning_rate")),
        lr_decay=float(pick("lr_decay")),
        init_strategy=pick("init"),
        polish_iters=int(pick("polish")),
        seed=cfg.seed,
    )


def _meta(cfg: ExperimentConfig) -> dict[str, Any]:
    return {"config_hash": config_hash(cfg), "version": __version__, "config": cfg.to_dict()}


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], cfg: ExperimentConfig,
               append: bool = False) -> None:
    """CSV with ``config_hash`` and ``version`` appended to every row."""
    h = config_hash(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not (append and path.exists())
    with path.open("w" if new else "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(list(header) + ["config_hash", "version"])
        for r in rows:
            w.writerow([_fmt(v) for v in r] + [h, __version__])


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """``||approx - exact||_F^2 / ||exact||_F^2``."""
    return float(np.linalg.norm(approx - exact) ** 2 / np.linalg.norm(exact) ** 2)


def _target(cfg: ExperimentConfig, n: int | None = None) -> TTMatrix:
    n = cfg.qubits if n is None else n
    try:
        return build_matrix(cfg.matrix, n, dt=cfg.dt, tol=cfg.tol)
    except DenseGuardError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


# ---------------------------------------------------------------------------
# encode / verify / sweep


def cmd_encode(cfg: ExperimentConfig) -> dict[str, Any]:
    """Target MPO -> unitary MPO fit -> circuit, with JSON artifacts."""
    out = _out(cfg)
    m = _target(cfg)
    a, rep = fit_unitary_mpo(m, fit_options(cfg))
    circ = circuit_from_unitary_mpo(a, seed=cfg.seed)
    meta = _meta(cfg)
    write_json(out / "unitary_mpo.json", {**meta, **unitary_mpo_to_dict(a)})
    write_json(out / "circuit.json", {**meta, **circuit_to_dict(circ)})
    summary = {
        "matrix": cfg.matrix,
        "n": m.n,
        "R": cfg.rank,
        "epsilon": rep.epsilon,
        "c": rep.c,
        "avg_success": rep.avg_success,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "n_gates": len(circ.gates),
        "n_ancilla": circ.n_ancilla,
    }
    write_json(out / "report.json", {**meta, "summary": summary, "fit": rep.to_dict()})
    _write_csv(
        out / "history.csv",
        ["iteration", "epsilon", "c"],
        ([i, e, c] for i, (e, c) in enumerate(zip(rep.cost_history, rep.c_history))),
        cfg,
    )
    if m.n <= 6:
        dm = to_dense_matrix(m)
        err = np.abs(a.c * to_dense_matrix(a.mpo) - dm) / np.linalg.norm(dm)
        _write_csv(
            out / "error_matrix.csv",
            ["row", "col", "rel_error"],
            ([i, j, err[i, j]] for i in range(err.shape[0]) for j in range(err.shape[1])),
            cfg,
        )
    return summary


def cmd_verify(cfg: ExperimentConfig) -> dict[str, Any]:
    """Check encode artifacts: circuit block vs MPO vs target, plus success
    probabilities (TT exact, spectral, circuit exact, circuit sampled)."""
    src = Path(cfg.artifacts or cfg.out)
    try:
        a = unitary_mpo_from_dict(read_json(src / "unitary_mpo.json"))
        circ = circuit_from_dict(read_json(src / "circuit.json"))
        report = read_json(src / "report.json") if (src / "report.json").exists() else None
    except FileNotFoundError as e:
        raise ConfigError(f"missing artifact: {e.filename}") from e
    n = a.n
    if n > CIRCUIT_MATRIX_MAX_QUBITS:
        raise DenseGuardError(f"verify runs at n <= {CIRCUIT_MATRIX_MAX_QUBITS}, artifact has n={n}")
    block = circuit_to_matrix(circ)
    dense_a = to_dense_matrix(a.mpo)
    result: dict[str, Any] = {
        "n": n,
        "R": a.R,
        "c": a.c,
        "circuit_vs_mpo_max_dev": float(np.abs(block - dense_a).max()),
        "max_singular_value": float(np.linalg.norm(dense_a, 2)),
    }
    if report is not None:
        tcfg = ExperimentConfig.from_mapping(report["config"])
        dm = to_dense_matrix(_target(tcfg, n))
        result["target"] = tcfg.matrix
        result["epsilon"] = relative_error(a.c * dense_a, dm)
        result["target_max_rel_dev"] = float(np.abs(a.c * block - dm).max() / np.linalg.norm(dm))
    psi = haar_random_state(n, cfg.seed)
    psi_tt = tt_svd_vector(psi.amplitudes)
    run = run_postselected(circ, psi, shots=cfg.shots, seed=cfg.seed)
    p = exact_success_prob(a, psi_tt)
    sigma = math.sqrt(max(p * (1 - p), 1e-300) / max(cfg.shots, 1))
    result.update(
        {
            "success_exact": p,
            "success_spectral": spectral_success_prob(dense_a, psi).success_prob,
            "success_circuit": run.success_prob,
            "success_avg": avg_success_prob(a),
            "shots": run.shots_attempted,
            "shots_accepted": run.shots_accepted,
            "acceptance_rate": run.acceptance_rate if cfg.shots > 0 else None,
            "acceptance_within_3sigma": bool(abs(run.acceptance_rate - p) <= 3 * sigma) if cfg.shots > 0 else None,
        }
    )
    write_json(_out(cfg) / "verify.json", {**_meta(cfg), "verify": result})
    return result


_SWEEP_HEADER = ["matrix", "n", "R", "seed", "epsilon", "avg_success", "c", "iterations"]


def cmd_sweep(cfg: ExperimentConfig) -> dict[str, Any]:
    """Fit every (n, R) cell and append one CSV row per cell.

    Rows already present for the same config hash are skipped, so an
    interrupted sweep resumes where it stopped.
    """
    path = _out(cfg) / "sweep.csv"
    h = config_hash(cfg)
    done: set[tuple[int, int]] = set()
    if path.exists():
        with path.open(newline="") as fh:
            for r in csv.DictReader(fh):
                if r.get("config_hash") == h:
                    done.add((int(r["n"]), int(r["R"])))
    rows = []
    for n in cfg.sweep_qubits:
        for R in cfg.sweep_ranks:
            if (n, R) in done:
                continue
            m = _target(cfg, n)
            _, rep = fit_unitary_mpo(m, fit_options(cfg, R, n))
            row = [cfg.matrix, n, R, cfg.seed, rep.epsilon, rep.avg_success, rep.c, rep.iterations]
            _write_csv(path, _SWEEP_HEADER, [row], cfg, append=True)
            log.info("sweep cell n=%d R=%d eps=%.3e", n, R, rep.epsilon)
            rows.append(dict(zip(_SWEEP_HEADER, row)))
    return {"path": str(path), "new_rows": len(rows), "skipped": len(done)}


# ---------------------------------------------------------------------------
# evolution operator


def cmd_evolution(cfg: ExperimentConfig) -> dict[str, Any]:
    """Rank of ``exp(-i H dt)`` versus ``dt``, and fitted unitary-MPO error
    against first/second order Trotter, all measured against the dense
    exponential."""
    n = cfg.qubits
    if n > 8:
        raise DenseGuardError("the evolution benchmark is dense-verified and runs at n <= 8")
    p = IsingParams(n)
    rank_rows, err_rows = [], []
    for dt in cfg.dt_list:
        exact = evolution_dense(p, dt)
        m = evolution_mpo(p, dt, cfg.tol)
        rank_rows.append([dt, m.max_rank, "-".join(map(str, m.rank_profile))])
        e1 = relative_error(to_dense_matrix(trotter_mpo(p, dt, 1)), exact)
        e2 = relative_error(to_dense_matrix(trotter_mpo(p, dt, 2)), exact)
        sub = ExperimentConfig.from_mapping({**cfg.to_dict(), "matrix": "evolution"})
        for R in cfg.fit_ranks:
            a, _ = fit_unitary_mpo(m, fit_options(sub, R))
            ef = relative_error(a.c * to_dense_matrix(a.mpo), exact)
            err_rows.append([dt, R, ef, e1, e2])
            log.info("evolution dt=%g R=%d fit=%.2e trotter1=%.2e", dt, R, ef, e1)
    out = _out(cfg)
    _write_csv(out / "evolution_ranks.csv", ["dt", "max_rank", "rank_profile"], rank_rows, cfg)
    _write_csv(out / "evolution_errors.csv", ["dt", "R", "eps_fit", "eps_trotter1", "eps_trotter2"],
               err_rows, cfg)
    return {"ranks": rank_rows, "errors": err_rows}


# ---------------------------------------------------------------------------
# heat equation


def _sin_tt(n: int, dx: float) -> TTVector:
    """``sin(pi x_j)`` with ``x_j = (j + 1) dx`` as an exact rank-2 TT."""
    def phase(sign):
        cores = []
        for k in range(n):
            w = 2 ** (n - 1 - k)
            cores.append(np.array([1.0, np.exp(sign * 1j * np.pi * dx * w)]).reshape(1, 2, 1))
        cores[0] = cores[0] * np.exp(sign * 1j * np.pi * dx)
        return TTVector(cores)

    return tt_round(scalar_mul(-0.5j, add(phase(1), scalar_mul(-1.0, phase(-1)))), 1e-14)


def heat_initial(name: str, n: int, dx: float) -> TTVector:
    if name == "sin":
        return _sin_tt(n, dx)
    if name == "zero":
        return TTVector([np.zeros((1, 2, 1), dtype=np.complex128)] * n)
    if n > DENSE_VECTOR_MAX_QUBITS:
        raise DenseGuardError(f"initial condition {name!r} is built densely (n <= {DENSE_VECTOR_MAX_QUBITS})")
    x = (np.arange(2**n) + 1) * dx
    if name == "gauss":
        u = np.exp(-(((x - 0.5) / 0.1) ** 2))
    elif name == "step":
        u = ((x >= 0.25) & (x <= 0.75)).astype(float)
    else:
        raise ConfigError(f"unknown initial condition {name!r}")
    return tt_svd_vector(u.astype(np.complex128), 1e-14)


def heat_iteration_mpo(n: int, courant: float) -> TTMatrix:
    """``I - (dt k^2 / dx^2) M_L``, the decaying explicit Euler step."""
    return tt_round(add(identity_mpo(n), scalar_mul(-courant, laplace_mpo(n))), 1e-14)


def heat_dense_trajectory(h: HeatConfig) -> list[np.ndarray]:
    """Dense oracle: the same iteration with numpy matrices."""
    b = to_dense_matrix(heat_iteration_mpo(h.n, h.courant))
    u = to_dense_vector(heat_initial(h.initial, h.n, h.dx))
    traj = [u]
    for _ in range(h.steps):
        u = b @ u
        traj.append(u)
    return traj


def run_heat(h: HeatConfig, circuit_options: FitOptions | None = None, seed: int = 0):
    """Returns ``(states, norms, ranks, info)``.

    With ``circuit_options`` the iteration matrix is fitted to a unitary MPO
    once and every step runs the encoded circuit on the simulator:
    ``u <- c ||u|| sqrt(p) |out>``.
    """
    if h.courant > 0.5:
        warnings.warn(f"CFL condition violated: dt k^2/dx^2 = {h.courant:.3g} > 1/2", RuntimeWarning)
    b = heat_iteration_mpo(h.n, h.courant)
    u = heat_initial(h.initial, h.n, h.dx)
    info: dict[str, Any] = {"courant": h.courant, "cfl_violated": h.courant > 0.5}
    circ = a = None
    if circuit_options is not None:
        if h.n > 6:
            raise DenseGuardError("circuit mode runs at n <= 6")
        a, rep = fit_unitary_mpo(b, circuit_options)
        circ = circuit_from_unitary_mpo(a, seed=seed)
        info.update({"fit_epsilon": rep.epsilon, "fit_c": a.c})
    states, norms, ranks = [u], [norm(u)], [u.max_rank]
    for _ in range(h.steps):
        if circ is None:
            u = tt_round(matvec(b, u), h.tol, h.max_rank)
        else:
            nrm = norm(u)
            if nrm == 0:
                pass
            else:
                dense = to_dense_vector(u) / nrm
                res = run_postselected(circ, Statevector(h.n, dense))
                v = a.c * nrm * math.sqrt(res.success_prob) * res.output.amplitudes
                u = tt_svd_vector(v, h.tol, h.max_rank)
        states.append(u)
        norms.append(norm(u))
        ranks.append(u.max_rank)
    return states, norms, ranks, info


def cmd_heat(cfg: ExperimentConfig) -> dict[str, Any]:
    h = HeatConfig.from_experiment(cfg)
    opts = fit_options(ExperimentConfig.from_mapping({**cfg.to_dict(), "matrix": "laplace"})) if cfg.circuit else None
    states, norms, ranks, info = run_heat(h, opts, cfg.seed)
    out = _out(cfg)
    _write_csv(out / "heat_history.csv", ["step", "norm", "rank"],
               ([i, nv, r] for i, (nv, r) in enumerate(zip(norms, ranks))), cfg)
    if h.n <= DENSE_VECTOR_MAX_QUBITS:
        u = to_dense_vector(states[-1]).real
        x = (np.arange(2**h.n) + 1) * h.dx
        _write_csv(out / "heat_profile.csv", ["index", "x", "u"], ([j, x[j], u[j]] for j in range(u.size)), cfg)
    summary = {**info, "steps": h.steps, "final_norm": norms[-1], "max_rank": max(ranks)}
    write_json(out / "heat.json", {**_meta(cfg), "summary": summary})
    return summary


# ---------------------------------------------------------------------------
# power method for the maximum element


def _ramp_tt(n: int) -> TTVector:
    """``y_j = j`` as a rank-2 TT."""
    cores = []
    for k in range(n):
        w = float(2 ** (n - 1 - k))
        g = np.zeros((2, 2, 2), dtype=np.complex128)
        g[0, :, 0] = 1.0
        g[0, 1, 1] = w
        g[1, :, 1] = 1.0
        if k == 0:
            g = g[:1]
        if k == n - 1:
            g = g[:, :, 1:]
        cores.append(g)
    if n == 1:
        return TTVector([np.array([0.0, 1.0], dtype=np.complex128).reshape(1, 2, 1)])
    return TTVector(cores)


def power_target(name: str, n: int, seed: int = 0, index: int = 0) -> TTVector:
    if name == "ramp":
        return _ramp_tt(n)
    if n > DENSE_VECTOR_MAX_QUBITS:
        raise DenseGuardError(f"function {name!r} is built densely (n <= {DENSE_VECTOR_MAX_QUBITS})")
    if name == "delta":
        if not 0 <= index < 2**n:
            raise ConfigError("index out of range")
        y = np.zeros(2**n)
        y[index] = 1.0
    elif name == "smooth":
        rng = np.random.default_rng(seed)
        x = np.arange(2**n) / 2**n
        amp = rng.uniform(0.1, 0.6, size=3)
        ph = rng.uniform(0, 2 * np.pi, size=3)
        y = 2.0 + sum(a * np.cos(2 * np.pi * (k + 1) * x + p) for k, (a, p) in enumerate(zip(amp, ph)))
    else:
        raise ConfigError(f"unknown function {name!r}")
    return tt_svd_vector(y.astype(np.complex128), 1e-14)


def _check_nonnegative(y: TTVector) -> None:
    if y.n > DENSE_VECTOR_MAX_QUBITS:
        return  # built from closed forms that are non-negative
    d = to_dense_vector(y)
    if np.any(d.real < -1e-12) or np.any(np.abs(d.imag) > 1e-12) or not np.any(d.real > 0):
        raise ConfigError("the power-method demo needs a non-negative, nonzero real vector")


def tt_greedy_argmax(x: TTVector) -> int:
    """Index picked bit by bit, each time keeping the branch with the larger
    conditional mass ``sum |x|^2``. Exact for the product-like, strongly
    peaked vectors the power method produces; costs O(n r^3)."""
    n = x.n
    right = [np.ones((1, 1), dtype=np.complex128)] * (n + 1)
    for k in range(n - 1, -1, -1):
        g = x.cores[k]
        right[k] = np.einsum("asb,bc,dsc->ad", g, right[k + 1], g.conj())
    left = np.ones((1,), dtype=np.complex128)
    idx = 0
    for k in range(n):
        g = x.cores[k]
        best, best_v, best_mass = 0, None, -1.0
        for bit in range(g.shape[1]):
            v = left @ g[:, bit, :]
            mass = float(np.real(v @ right[k + 1] @ v.conj()))
            if mass > best_mass:
                best, best_v, best_mass = bit, v, mass
        idx = 2 * idx + best
        left = best_v / max(np.linalg.norm(best_v), 1e-300)
    return idx


def run_power(y: TTVector, steps: int, tol: float = 1e-10, max_rank: int | None = None,
              circuit_options: FitOptions | None = None, seed: int = 0, shots: int = 0):
    """Power iteration with ``diag(y)`` from the all-ones vector.

    Returns ``(x, history, info)``; ``history`` rows are ``(step, rayleigh, rank)``.
    In circuit mode (n <= 6) each step is one post-selected circuit run, so
    the normalization comes from the post-selection itself.
    """
    _check_nonnegative(y)
    n = y.n
    d = diag_mpo_from_mps(y)
    x = TTVector([np.full((1, 2, 1), 2**-0.5, dtype=np.complex128)] * n)
    info: dict[str, Any] = {}
    circ = None
    if circuit_options is not None:
        if n > 6:
            raise DenseGuardError("circuit mode runs at n <= 6")
        a, rep = fit_unitary_mpo(d, circuit_options)
        circ = circuit_from_unitary_mpo(a, seed=seed)
        info["fit_epsilon"] = rep.epsilon
    history = []
    for step in range(1, steps + 1):
        if circ is None:
            x = tt_round(matvec(d, x), tol, max_rank)
            x = scalar_mul(1.0 / norm(x), x)
        else:
            res = run_postselected(circ, Statevector(n, to_dense_vector(x)))
            x = tt_svd_vector(res.output.amplitudes, tol, max_rank)
        history.append([step, float(dot(x, matvec(d, x)).real), x.max_rank])
    if n <= DENSE_VECTOR_MAX_QUBITS:
        info["argmax"] = int(np.argmax(np.abs(to_dense_vector(x))))
    else:
        info["argmax"] = tt_greedy_argmax(x)
    if shots > 0:
        counts: dict[str, int] = {}
        for r in sample_records(x, shots, seed, basis="Z" * n):
            counts[r.outcome] = counts.get(r.outcome, 0) + 1
        top = max(sorted(counts), key=counts.get)
        info["sampled_argmax"] = int(top, 2)
        info["sampled_top_frequency"] = counts[top] / sum(counts.values())
    return x, history, info


def cmd_power(cfg: ExperimentConfig) -> dict[str, Any]:
    y = power_target(cfg.function, cfg.qubits, cfg.seed, cfg.index)
    opts = None
    if cfg.circuit:
        opts = fit_options(ExperimentConfig.from_mapping({**cfg.to_dict(), "matrix": "diag"}))
    _, history, info = run_power(y, cfg.steps, cfg.tol, cfg.max_rank, opts, cfg.seed, cfg.shots)
    out = _out(cfg)
    _write_csv(out / "power_history.csv", ["step", "rayleigh", "rank"], history, cfg)
    summary = {"function": cfg.function, "n": cfg.qubits, "iterations": cfg.steps, **info}
    write_json(out / "power.json", {**_meta(cfg), "summary": summary})
    return summary


# ---------------------------------------------------------------------------
# tomography


def tomography_curve(n: int, layers: int, seed: int, grid: Sequence[int],
                     model_rank: int | None = None) -> list[tuple[int, float]]:
    """Fidelity of the fitted model versus the number of records for one
    random circuit. Record sets are nested prefixes of one sample; ``N=0``
    reports the untrained initialization."""
    truth = vqc_output_state(VQCSpec(n, layers, seed))
    rank = model_rank or truth.max_rank
    grid = sorted(grid)
    pool = sample_records(truth, max(grid[-1], 1), seed)
    curve = []
    for n_rec in grid:
        if n_rec == 0:
            model = initial_model(n, rank, seed)
        else:
            model, _ = fit_mps(pool[:n_rec], TomographyOptions(rank=rank, seed=seed))
        curve.append((n_rec, fidelity(model, truth)))
    return curve


def cmd_tomo(cfg: ExperimentConfig) -> dict[str, Any]:
    rows, per_seed = [], {}
    for s in cfg.seeds:
        curve = tomography_curve(cfg.qubits, cfg.layers, s, cfg.records, cfg.model_rank)
        rows += [[cfg.qubits, cfg.layers, s, n_rec, f] for n_rec, f in curve]
        hit = [n_rec for n_rec, f in curve if f >= 0.99]
        per_seed[str(s)] = {"curve": curve, "min_records_099": hit[0] if hit else None}
    out = _out(cfg)
    _write_csv(out / "tomo.csv", ["n", "layers", "seed", "records", "fidelity"], rows, cfg)
    mean = {}
    for n_rec in sorted(set(cfg.records)):
        mean[str(n_rec)] = float(np.mean([r[4] for r in rows if r[3] == n_rec]))
    summary = {"n": cfg.qubits, "layers": cfg.layers, "mean_fidelity": mean, "seeds": per_seed}
    write_json(out / "tomo.json", {**_meta(cfg), "summary": summary})
    return summary


COMMANDS = {
    "encode": cmd_encode,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "evolution": cmd_evolution,
    "heat": cmd_heat,
    "power": cmd_power,
    "tomo": cmd_tomo,
}
