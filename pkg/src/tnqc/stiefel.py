"""Complex Stiefel manifold primitives and a Riemannian ADAM.

Points are ``m x p`` matrices with ``V^H V = I``. The metric is the
Euclidean one inherited from ``C^{m x p}`` (real part of the Frobenius
inner product), the retraction is the QR retraction, and ADAM moments
are carried to the new tangent space by re-projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NotIsometricError",
    "isometry_defect",
    "project_tangent",
    "retract",
    "polar_factor",
    "random_isometry",
    "AdamState",
    "riemannian_adam_step",
]

_ISOMETRY_TOL = 1e-8


class NotIsometricError(ValueError):
    pass


def isometry_defect(v: np.ndarray) -> float:
    """``max |V^H V - I|``."""
    g = v.conj().T @ v
    return float(np.abs(g - np.eye(g.shape[0])).max())


def _herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def project_tangent(v: np.ndarray, g: np.ndarray, check: bool = True) -> np.ndarray:
    """Orthogonal projection of ``g`` onto the tangent space at ``v``:
    ``g - v herm(v^H g)``."""
    if check and isometry_defect(v) > _ISOMETRY_TOL:
        raise NotIsometricError("project_tangent needs an isometric base point")
    return g - v @ _herm(v.conj().T @ g)


def retract(v: np.ndarray, xi: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """QR retraction of ``v + alpha * xi`` with positive-diagonal R."""
    if alpha == 0:
        return np.array(v, copy=True)
    q, r = np.linalg.qr(v + alpha * xi)
    d = np.diagonal(r)
    mag = np.abs(d)
    if mag.min() <= 1e-12 * max(mag.max(), 1.0):
        raise np.linalg.LinAlgError("retraction point is rank deficient")
    return q * (d / mag)[None, :]


def polar_factor(a: np.ndarray) -> np.ndarray:
    """Isometric factor ``U V^H`` of a tall matrix (closest isometry in Frobenius norm)."""
    u, _, vh = np.linalg.svd(a, full_matrices=False)
    return u @ vh


def random_isometry(m: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``m x p`` isometry (QR of a complex Ginibre matrix, phase-fixed)."""
    z = (rng.standard_normal((m, p)) + 1j * rng.standard_normal((m, p))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))[None, :]


@dataclass
class AdamState:
    """Per-manifold first moment (tangent matrix) and scalar second moment."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[float] = field(default_factory=list)
    t: int = 0


def riemannian_adam_step(
    state: AdamState,
    points: list[np.ndarray],
    grads: list[np.ndarray],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One ADAM step on a product of Stiefel manifolds.

    ``grads`` are ambient (Euclidean) gradients. The second moment is the
    squared norm of the Riemannian gradient, one scalar per factor, which
    keeps the update direction a tangent vector.
    """
    b1, b2 = betas
    if not state.m:
        state = AdamState([np.zeros_like(p) for p in points], [0.0] * len(points), 0)
    t = state.t + 1
    new_points, new_m, new_v = [], [], []
    for x, g, m, v in zip(points, grads, state.m, state.v):
        rg = project_tangent(x, g, check=False)
        m = b1 * m + (1 - b1) * rg
        v = b2 * v + (1 - b2) * float(np.vdot(rg, rg).real)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        step = project_tangent(x, m_hat, check=False) / (np.sqrt(v_hat) + eps)
        if np.any(step):
            x_new = retract(x, -step, lr)
        else:
            x_new = np.array(x, copy=True)
        new_points.append(x_new)
        new_m.append(project_tangent(x_new, m, check=False))
        new_v.append(v)
    return new_points, AdamState(new_m, new_v, t)
