"""Fit a normalized unitary MPO ``c * A`` to a target MPO ``M``.

Alternating descent on ``C = ||c A - M||^2``: the optimal ``c`` in closed
form, then one Riemannian ADAM step over all cores of ``A``.

Each core of ``A`` is kept isometric in the reshaping

    W[k]_{(s_k, a_k), (a_{k-1}, l_k)} = A[k][a_{k-1}, s_k, l_k, a_k]

i.e. the map from (incoming bond, column/input index) to (row/output
index, outgoing bond). ``W[k]^H W[k] = I`` for every core except the last,
which satisfies ``W[n] W[n]^H = I``; the optimizer therefore works with
``W[n]^H``. With all interior bonds equal to ``R`` the inner ``W[k]`` are
square unitaries and the boundary ones become unitaries after completion,
which is exactly what the circuit compiler needs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .stiefel import (
    AdamState,
    isometry_defect,
    polar_factor,
    project_tangent,
    random_isometry,
    retract,
    riemannian_adam_step,
)
from .tt import (
    TTMatrix,
    _check_same_structure,
    dot,
    frobenius_norm,
    orthogonalize,
    scalar_mul,
    tt_round,
)

log = logging.getLogger(__name__)

__all__ = [
    "UnitaryMPO",
    "FitOptions",
    "FitReport",
    "site_matrix",
    "site_core",
    "cost",
    "update_c",
    "euclidean_gradient",
    "init_unitary_mpo",
    "fit_unitary_mpo",
]


def _is_power_of_two(r: int) -> bool:
    return r >= 1 and (r & (r - 1)) == 0


# ---------------------------------------------------------------------------
# core <-> isometry reshaping


def site_matrix(core: np.ndarray, k: int, n: int) -> np.ndarray:
    """Stiefel coordinates of core ``k``: ``W[k]`` for ``k < n-1``, ``W[n-1]^H`` for the last."""
    a, s, l, b = core.shape
    w = core.transpose(1, 3, 0, 2).reshape(s * b, a * l)
    if k == n - 1 and n > 1:
        return w.conj().T
    return w


def site_core(x: np.ndarray, k: int, n: int, shape: tuple[int, int, int, int]) -> np.ndarray:
    a, s, l, b = shape
    w = x.conj().T if (k == n - 1 and n > 1) else x
    return w.reshape(s, b, a, l).transpose(2, 0, 3, 1)


@dataclass(frozen=True)
class UnitaryMPO:
    """``c * mpo`` approximates the target; ``mpo`` has isometric cores and bonds <= ``R``."""

    mpo: TTMatrix
    c: float
    R: int

    @property
    def n(self) -> int:
        return self.mpo.n

    @property
    def n_ancilla(self) -> int:
        return int(math.ceil(math.log2(self.R))) if self.R > 1 else 0

    def site_matrices(self) -> list[np.ndarray]:
        return [site_matrix(c, k, self.n) for k, c in enumerate(self.mpo.cores)]

    def isometry_defects(self) -> list[float]:
        return [isometry_defect(x) for x in self.site_matrices()]

    def check(self, tol: float = 1e-10) -> None:
        worst = max(self.isometry_defects())
        if worst > tol:
            raise ValueError(f"cores are not isometric (defect {worst:.2e} > {tol:.0e})")
        if self.mpo.max_rank > self.R:
            raise ValueError("bond dimension exceeds R")


# ---------------------------------------------------------------------------
# cost, c-update, gradients


def cost(a: TTMatrix | UnitaryMPO, c: float, m: TTMatrix) -> float:
    """``||c A - M||^2 = c^2 ||A||^2 - 2 c Re Tr[A^H M] + ||M||^2`` by TT contractions."""
    a = a.mpo if isinstance(a, UnitaryMPO) else a
    _check_same_structure(a, m)
    aa = dot(a, a).real
    am = dot(a, m).real
    mm = dot(m, m).real
    return float(c * c * aa - 2 * c * am + mm)


def update_c(a: TTMatrix | UnitaryMPO, m: TTMatrix) -> float:
    """Minimizer of ``cost`` over ``c``: ``Re Tr[A^H M] / ||A||^2``."""
    a = a.mpo if isinstance(a, UnitaryMPO) else a
    aa = dot(a, a).real
    if aa == 0.0:
        raise ZeroDivisionError("||A|| = 0, the optimal c is undefined")
    return float(dot(a, m).real / aa)


def _flat(cores) -> list[np.ndarray]:
    return [c.reshape(c.shape[0], -1, c.shape[3]) for c in cores]


def _environments(xs: list[np.ndarray], ys: list[np.ndarray]):
    """Left/right transfer environments of ``<x, y>``; ``left[k]`` covers sites ``< k``."""
    n = len(xs)
    left = [np.ones((1, 1), dtype=np.complex128)]
    for k in range(n):
        left.append(np.einsum("ab,axc,bxd->cd", left[k], xs[k].conj(), ys[k], optimize=True))
    right = [None] * (n + 1)
    right[n] = np.ones((1, 1), dtype=np.complex128)
    for k in range(n - 1, -1, -1):
        right[k] = np.einsum("axc,bxd,cd->ab", xs[k].conj(), ys[k], right[k + 1], optimize=True)
    return left, right


def _env_derivative(left, right, ys, k) -> np.ndarray:
    """``d<x, y>/d conj(x_k)``."""
    return np.einsum("ab,bxd,cd->axc", left[k], ys[k], right[k + 1], optimize=True)


class _Evaluator:
    """Shared contraction of <A,A> and <A,M> with all core derivatives."""

    def __init__(self, a_cores, m_cores):
        self.shapes = [c.shape for c in a_cores]
        xs, ms = _flat(a_cores), _flat(m_cores)
        self.xs, self.ms = xs, ms
        self.laa, self.raa = _environments(xs, xs)
        self.lam, self.ram = _environments(xs, ms)
        self.aa = float(self.laa[-1][0, 0].real)
        self.am = complex(self.lam[-1][0, 0])

    def grad(self, k: int, c: float) -> np.ndarray:
        """``dC/d conj(A_k)`` as a 4-way core."""
        g = c * c * _env_derivative(self.laa, self.raa, self.xs, k)
        g -= c * _env_derivative(self.lam, self.ram, self.ms, k)
        return g.reshape(self.shapes[k])


def euclidean_gradient(a: TTMatrix | UnitaryMPO, c: float, m: TTMatrix, k: int) -> np.ndarray:
    """``dC/d conj(A[k])`` for ``C = ||c A - M||^2``, same shape as core ``k``.

    The first-order change of ``C`` along a core perturbation ``D`` is
    ``2 Re <grad, D>``.
    """
    a = a.mpo if isinstance(a, UnitaryMPO) else a
    _check_same_structure(a, m)
    if not 0 <= k < a.n:
        raise IndexError(f"site {k} out of range for {a.n} sites")
    return _Evaluator(a.cores, m.cores).grad(k, c)


# ---------------------------------------------------------------------------
# options / report


@dataclass
class FitOptions:
    R: int = 4
    max_iters: int = 5000
    learning_rate: float = 0.1
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    c_update_every: int = 1
    convergence_tol: float = 1e-12
    seed: int = 0
    init_strategy: Literal["polar_from_target", "random_haar"] = "random_haar"
    # learning rate at iteration t is learning_rate * lr_decay ** (t / max_iters)
    lr_decay: float = 0.01
    # Riemannian L-BFGS refinement steps after the ADAM phase
    polish_iters: int = 0

    def __post_init__(self):
        if not _is_power_of_two(self.R):
            raise ValueError(f"R must be a power of two, got {self.R}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.c_update_every < 1:
            raise ValueError("c_update_every must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.init_strategy not in ("polar_from_target", "random_haar"):
            raise ValueError(f"unknown init_strategy {self.init_strategy!r}")
        self.adam_betas = tuple(self.adam_betas)


@dataclass
class FitReport:
    """``cost_history`` holds the relative cost ``||cA - M||^2 / ||M||^2`` per
    iteration; its trailing entry is the returned iterate."""

    epsilon: float
    c: float
    iterations: int
    seed: int
    avg_success: float
    converged: bool
    cost_history: list[float] = field(default_factory=list)
    c_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# initialization


def _bond_shapes(n: int, R: int) -> list[tuple[int, int, int, int]]:
    bonds = [1] + [R] * (n - 1) + [1]
    return [(bonds[k], 2, 2, bonds[k + 1]) for k in range(n)]


def _pad(core: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=np.complex128)
    a, s, l, b = core.shape
    out[:a, :s, :l, :b] = core
    return out


def init_unitary_mpo(
    m: TTMatrix,
    R: int,
    strategy: str = "polar_from_target",
    seed: int = 0,
) -> UnitaryMPO:
    """Starting point for :func:`fit_unitary_mpo`.

    ``polar_from_target`` truncates ``M`` to rank ``R``, brings it to
    left-canonical form, zero-pads every bond to ``R`` and replaces each
    reshaped core by its isometric polar factor. ``random_haar`` draws
    every core from the Haar measure.
    """
    if not _is_power_of_two(R):
        raise ValueError(f"R must be a power of two, got {R}")
    n = m.n
    shapes = _bond_shapes(n, R)
    if strategy == "random_haar":
        rng = np.random.default_rng(seed)
        xs = []
        for k, sh in enumerate(shapes):
            rows, cols = site_matrix(np.zeros(sh), k, n).shape
            xs.append(random_isometry(rows, cols, rng))
    elif strategy == "polar_from_target":
        t = tt_round(m, 0.0, max_rank=R)
        t = orthogonalize(t, n - 1)
        xs = []
        for k, (core, sh) in enumerate(zip(t.cores, shapes)):
            xs.append(polar_factor(site_matrix(_pad(core, sh), k, n)))
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    a = TTMatrix([site_core(x, k, n, sh) for k, (x, sh) in enumerate(zip(xs, shapes))])
    return UnitaryMPO(a, update_c(a, m) if dot(a, a).real > 0 else 1.0, R)


# ---------------------------------------------------------------------------
# the alternating loop


class _Objective:
    """Relative cost with ``c`` at its optimum, plus Riemannian gradients.

    With ``M`` normalized to unit norm and ``c`` optimal the cost is
    ``1 - Re<A,M>^2 / ||A||^2``; by the envelope argument its gradient in
    ``A`` is the partial gradient at fixed optimal ``c``.
    """

    def __init__(self, target: TTMatrix, shapes):
        self.m_cores = target.cores
        self.shapes = shapes
        self.n = len(shapes)

    def cores(self, xs):
        return [site_core(x, k, self.n, sh) for k, (x, sh) in enumerate(zip(xs, self.shapes))]

    def evaluate(self, xs, c=None):
        ev = _Evaluator(self.cores(xs), self.m_cores)
        if c is None:
            c = ev.am.real / ev.aa
        eps = max(c * c * ev.aa - 2 * c * ev.am.real + 1.0, 0.0)
        return ev, c, eps

    def euclidean(self, ev, c):
        return [site_matrix(ev.grad(k, c), k, self.n) for k in range(self.n)]


def _inner(a, b) -> float:
    return float(sum(np.vdot(x, y).real for x, y in zip(a, b)))


def _transport(xs, vs):
    return [project_tangent(x, v, check=False) for x, v in zip(xs, vs)]


def _lbfgs_polish(obj: _Objective, xs, iters: int, memory: int = 20):
    """Riemannian L-BFGS with Armijo backtracking; vector transport by projection.

    Yields ``(eps, c, xs)`` after every accepted step.
    """

    def fg(points):
        ev, c, eps = obj.evaluate(points)
        grads = _transport(points, [2 * g for g in obj.euclidean(ev, c)])
        return eps, c, grads

    f, c, g = fg(xs)
    s_hist: list = []
    y_hist: list = []
    for _ in range(iters):
        q = [v.copy() for v in g]
        alphas = []
        for s_k, y_k in reversed(list(zip(s_hist, y_hist))):
            a = _inner(s_k, q) / _inner(y_k, s_k)
            alphas.append(a)
            q = [qi - a * yi for qi, yi in zip(q, y_k)]
        if s_hist:
            gamma = _inner(s_hist[-1], y_hist[-1]) / _inner(y_hist[-1], y_hist[-1])
        else:
            gamma = 1e-2 / max(np.sqrt(_inner(g, g)), 1e-300)
        r = [gamma * qi for qi in q]
        for (s_k, y_k), a in zip(zip(s_hist, y_hist), reversed(alphas)):
            b = _inner(y_k, r) / _inner(y_k, s_k)
            r = [ri + (a - b) * si for ri, si in zip(r, s_k)]
        d = _transport(xs, [-ri for ri in r])
        slope = _inner(g, d)
        if slope >= 0:
            d = [-gi for gi in g]
            slope = _inner(g, d)
            s_hist, y_hist = [], []
        if slope == 0:
            return
        t = 1.0
        while True:
            x_new = [retract(x, di, t) for x, di in zip(xs, d)]
            f_new, c_new, g_new = fg(x_new)
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                return
        step = _transport(x_new, [t * di for di in d])
        y = [a - b for a, b in zip(g_new, _transport(x_new, g))]
        s_hist = [_transport(x_new, v) for v in s_hist]
        y_hist = [_transport(x_new, v) for v in y_hist]
        if _inner(step, y) > 1e-30:
            s_hist.append(step)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        xs, f, c, g = x_new, f_new, c_new, g_new
        yield f, c, xs
        if f <= 1e-15:
            return


def fit_unitary_mpo(
    m: TTMatrix,
    options: FitOptions | None = None,
    init: UnitaryMPO | None = None,
) -> tuple[UnitaryMPO, FitReport]:
    """Alternate the closed-form ``c`` update with Riemannian ADAM sweeps.

    Runs until ``max_iters`` or until the relative cost changes by less
    than ``convergence_tol`` between iterations, then optionally refines
    with ``polish_iters`` Riemannian L-BFGS steps. The best iterate seen is
    returned, not the last one.
    """
    opts = options or FitOptions()
    n = m.n
    m_norm = frobenius_norm(m)
    if m_norm == 0:
        raise ValueError("target matrix is zero")
    target = scalar_mul(1.0 / m_norm, m)
    start = init if init is not None else init_unitary_mpo(m, opts.R, opts.init_strategy, opts.seed)
    if start.R != opts.R or start.n != n:
        raise ValueError("initial UnitaryMPO does not match target/options")
    obj = _Objective(target, [c.shape for c in start.mpo.cores])
    xs = [site_matrix(c, k, n) for k, c in enumerate(start.mpo.cores)]
    state = AdamState()

    costs: list[float] = []
    cs: list[float] = []
    best_eps, best_xs, best_c = math.inf, xs, 1.0
    c = None
    converged = False
    it = 0
    for it in range(opts.max_iters + 1):
        ev, c_opt, eps = obj.evaluate(xs)
        if c is None or it % opts.c_update_every == 0:
            c = c_opt
        else:
            eps = max(c * c * ev.aa - 2 * c * ev.am.real + 1.0, 0.0)
        costs.append(eps)
        cs.append(c * m_norm)
        if eps < best_eps:
            best_eps, best_xs, best_c = eps, xs, c
        if it == opts.max_iters:
            break
        if it > 0 and abs(costs[-1] - costs[-2]) < opts.convergence_tol:
            converged = True
            break
        # site_matrix conjugate-transposes the last core, which is exactly the
        # chain rule for d/d conj(W^H)
        grads = obj.euclidean(ev, c)
        lr = opts.learning_rate * opts.lr_decay ** (it / opts.max_iters)
        xs, state = riemannian_adam_step(state, xs, grads, lr, opts.adam_betas, opts.adam_eps)

    if opts.polish_iters:
        for eps, c, xs in _lbfgs_polish(obj, best_xs, opts.polish_iters):
            it += 1
            costs.append(eps)
            cs.append(c * m_norm)
            if eps < best_eps:
                best_eps, best_xs, best_c = eps, xs, c

    a = TTMatrix(obj.cores(best_xs))
    result = UnitaryMPO(a, float(best_c * m_norm), opts.R)
    costs.append(best_eps)
    cs.append(result.c)
    report = FitReport(
        epsilon=float(best_eps),
        c=result.c,
        iterations=it,
        seed=opts.seed,
        avg_success=float(dot(a, a).real / 2.0**n),
        converged=converged,
        cost_history=costs,
        c_history=cs,
    )
    log.debug("fit finished: eps=%.3e after %d iterations", best_eps, it)
    return result, report
