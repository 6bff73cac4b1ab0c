"""State space of the linearized IPM system and its wave cone.

States are stored as float arrays of shape ``(..., 5)`` with component order
``(rho, v1, v2, q1, q2)``.  The coordinates ``(rho, w, z)`` used for the T4
geometry are the same numbers (``w = v``, ``z = q``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RHO, V1, V2, Q1, Q2 = range(5)

CONE_RTOL = 1e-12


@dataclass(frozen=True)
class StateU:
    """A point ``(rho, v, q)`` of R x R^2 x R^2."""

    rho: float
    v: tuple[float, float]
    q: tuple[float, float]

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("state components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, *self.v, *self.q], dtype=float)

    @classmethod
    def from_array(cls, a) -> "StateU":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), (float(a[1]), float(a[2])), (float(a[3]), float(a[4])))


def state(rho, v=(0.0, 0.0), q=(0.0, 0.0)) -> np.ndarray:
    return np.array([rho, v[0], v[1], q[0], q[1]], dtype=float)


def as_states(s) -> np.ndarray:
    if isinstance(s, StateU):
        return s.as_array()
    a = np.asarray(s, dtype=float)
    if a.shape[-1] != 5:
        raise ValueError(f"expected trailing dimension 5, got shape {a.shape}")
    return a


def to_matrix(s) -> np.ndarray:
    """Embed states as 3x3 matrices ``[[-v2-rho, v1, 0], [v1, v2, 0], [q1, q2, rho]]``."""
    a = as_states(s)
    rho, v1, v2, q1, q2 = np.moveaxis(a, -1, 0)
    zero = np.zeros_like(rho)
    m = np.stack(
        [
            np.stack([-v2 - rho, v1, zero], axis=-1),
            np.stack([v1, v2, zero], axis=-1),
            np.stack([q1, q2, rho], axis=-1),
        ],
        axis=-2,
    )
    return m


def cone_residual(s) -> np.ndarray:
    """``rho * (v1^2 + v2^2 + rho*v2)``; equal to ``-det(to_matrix(s))``."""
    a = as_states(s)
    rho, v1, v2 = a[..., RHO], a[..., V1], a[..., V2]
    return rho * (v1 * v1 + v2 * v2 + rho * v2)


def in_cone(s, rtol: float = CONE_RTOL) -> np.ndarray:
    """Relative membership test: the residual is cubic, so scale by ``(1+|s|)^3``."""
    a = as_states(s)
    scale = (1.0 + np.linalg.norm(a, axis=-1)) ** 3
    return np.abs(cone_residual(a)) <= rtol * scale


def segment_in_cone(a, b, rtol: float = CONE_RTOL) -> bool:
    return bool(in_cone(as_states(a) - as_states(b), rtol))


def lambda_convex_f(s) -> np.ndarray:
    """Barrier ``q2 - rho*v2``: convex along cone directions, zero on K."""
    a = as_states(s)
    return a[..., Q2] - a[..., RHO] * a[..., V2]


def constraint_defect(s) -> np.ndarray:
    """``|q - rho v|``."""
    a = as_states(s)
    d = a[..., 3:5] - a[..., RHO, None] * a[..., 1:3]
    return np.linalg.norm(d, axis=-1)


def _profile(r, rho, v, q):
    # min over u of |v-u|^2 + |q-ru|^2 equals |q - r v|^2 / (1 + r^2)
    d1 = q[..., 0] - r * v[..., 0]
    d2 = q[..., 1] - r * v[..., 1]
    return (rho - r) ** 2 + (d1 * d1 + d2 * d2) / (1.0 + r * r)


def nearest_K_param(s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimizer ``(r, u)`` of ``|s - (r, u, r u)|`` and the squared distance.

    The inner minimization over ``u`` is a linear least-squares problem, which
    leaves a scalar profile in ``r``.  Multistart: a bracketing scan over the
    interval ``|r - rho| <= sqrt(profile(rho))`` (the minimizer cannot lie
    outside it), followed by golden-section refinement around the best sample.
    """
    a = as_states(s)
    shape = a.shape[:-1]
    a = a.reshape(-1, 5)
    rho = a[:, RHO]
    v = a[:, 1:3]
    q = a[:, 3:5]
    half = np.sqrt(_profile(rho, rho, v, q)) + 1e-12
    n_scan = 65
    grid = np.linspace(-1.0, 1.0, n_scan)
    rs = rho[:, None] + half[:, None] * grid[None, :]
    vals = _profile(rs, rho[:, None], v[:, None, :], q[:, None, :])
    # extra starts r in {-1, 0, 1}
    extra = np.broadcast_to(np.array([-1.0, 0.0, 1.0]), (a.shape[0], 3))
    ev = _profile(extra, rho[:, None], v[:, None, :], q[:, None, :])
    k = np.argmin(vals, axis=1)
    idx = np.arange(a.shape[0])
    step = half * (grid[1] - grid[0])
    lo = rs[idx, k] - step
    hi = rs[idx, k] + step
    gr = 0.5 * (np.sqrt(5.0) - 1.0)
    x1 = hi - gr * (hi - lo)
    x2 = lo + gr * (hi - lo)
    f1 = _profile(x1, rho, v, q)
    f2 = _profile(x2, rho, v, q)
    for _ in range(80):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        nx1 = np.where(left, hi - gr * (hi - lo), x2)
        nx2 = np.where(left, x1, lo + gr * (hi - lo))
        nf1 = np.where(left, _profile(nx1, rho, v, q), f2)
        nf2 = np.where(left, f1, _profile(nx2, rho, v, q))
        x1, x2, f1, f2 = nx1, nx2, nf1, nf2
    r = 0.5 * (lo + hi)
    d2 = _profile(r, rho, v, q)
    # keep any explicit start that happens to beat the refined bracket
    j = np.argmin(ev, axis=1)
    better = ev[idx, j] < d2
    r = np.where(better, extra[idx, j], r)
    d2 = np.where(better, ev[idx, j], d2)
    u = (v + r[:, None] * q) / (1.0 + r * r)[:, None]
    return r.reshape(shape), u.reshape(shape + (2,)), np.maximum(d2, 0.0).reshape(shape)


def dist_to_K(s) -> np.ndarray:
    """Euclidean distance in R^5 from ``s`` to ``K = {(r, u, r u)}``."""
    a = as_states(s)
    _, _, d2 = nearest_K_param(a)
    d = np.sqrt(d2)
    # points already on K are reported as exactly zero
    d = np.where(constraint_defect(a) == 0.0, 0.0, d)
    return d.reshape(a.shape[:-1]) if a.ndim > 1 else float(d.reshape(-1)[0])


def dist_to_K_bruteforce(s, lim: float = 3.0, step: float = 1e-3) -> float:
    """Grid search over ``(r, u1, u2)``; the ``u`` grid is scanned per ``r`` slab.

    Test oracle only: it does not use the ``u``-elimination of :func:`dist_to_K`.
    """
    a = as_states(s)
    rs = np.arange(-lim, lim + step / 2, step)
    us = np.arange(-lim, lim + step / 2, step)
    best = np.inf
    rho, v1, v2, q1, q2 = a
    # separable in u1, u2 for fixed r: (v1-u1)^2+(q1-r u1)^2 + same for index 2
    for r in rs:
        c1 = (v1 - us) ** 2 + (q1 - r * us) ** 2
        c2 = (v2 - us) ** 2 + (q2 - r * us) ** 2
        val = (rho - r) ** 2 + c1.min() + c2.min()
        if val < best:
            best = val
    return float(np.sqrt(best))
