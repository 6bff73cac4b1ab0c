"""Quadrature on a patch ball aligned with its stripes and cutoff shell.

Local cylindrical coordinates about the phase axis: ``u = k.eta``,
``w = |eta_perp|^2`` and an angle.  The volume element is ``du dw dtheta / 2``.
``u`` is split at the saw-tooth jumps and at ``+-(1 - width)``; ``w`` is split
at the plateau sphere.  Composite midpoint in ``u`` (the only non-spectral
rule, hence the second-order convergence), Gauss-Legendre in ``w`` and the
periodic trapezoid rule in the angle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wave_potential import WavePatch


@dataclass
class BallRule:
    points: np.ndarray  # (M, 3) global space-time points
    weights: np.ndarray  # (M,) global volume weights
    plateau: np.ndarray  # (M,) bool


def _frame(k):
    a = np.eye(3)[int(np.argmin(np.abs(k)))]
    e1 = np.cross(k, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(k, e1)
    return e1, e2


def ball_rule(p: WavePatch, n_sub: int = 2, n_w: int = 4, n_theta: int = 12,
              parts: str = "all", u_rule: str = "midpoint") -> BallRule:
    """Tensor rule on the patch ball; ``parts`` is ``"all"``, ``"plateau"`` or ``"annulus"``.

    ``u_rule="gauss"`` swaps the composite midpoint rule in ``u`` for
    ``n_sub``-point Gauss-Legendre on every piece.
    """
    R0 = p.plateau_radius
    edges, _ = p.stripe_pieces()
    edges = np.unique(np.concatenate([edges, [-R0, R0]]))
    lo, hi = edges[:-1], edges[1:]
    if u_rule == "gauss":
        fx, fw = np.polynomial.legendre.leggauss(n_sub)
        frac, fw = 0.5 * (fx + 1.0), 0.5 * fw
    else:
        frac = (np.arange(n_sub) + 0.5) / n_sub
        fw = np.full(n_sub, 1.0 / n_sub)
    u = (lo[:, None] + frac[None, :] * (hi - lo)[:, None]).ravel()
    du = ((hi - lo)[:, None] * fw[None, :]).ravel()
    gx, gw = np.polynomial.legendre.leggauss(n_w)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    wmax = 1.0 - u * u
    wsplit = np.clip(R0 * R0 - u * u, 0.0, None)
    blocks_w, blocks_wt, blocks_plat = [], [], []
    if parts in ("all", "plateau"):
        a, b = np.zeros_like(u), wsplit
        blocks_w.append(a[:, None] + gx[None, :] * (b - a)[:, None])
        blocks_wt.append(gw[None, :] * (b - a)[:, None])
        blocks_plat.append(np.ones((u.size, n_w), bool))
    if parts in ("all", "annulus"):
        a, b = wsplit, wmax
        blocks_w.append(a[:, None] + gx[None, :] * (b - a)[:, None])
        blocks_wt.append(gw[None, :] * (b - a)[:, None])
        blocks_plat.append(np.zeros((u.size, n_w), bool))
    W = np.concatenate(blocks_w, axis=1)
    Wt = np.concatenate(blocks_wt, axis=1)
    PL = np.concatenate(blocks_plat, axis=1)
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    k = p.k
    e1, e2 = _frame(k)
    rad = np.sqrt(W)
    cos, sin = np.cos(th), np.sin(th)
    # eta = u k + rad (cos e1 + sin e2)
    eta = (u[:, None, None, None] * k[None, None, None, :]
           + rad[:, :, None, None] * (cos[None, None, :, None] * e1 + sin[None, None, :, None] * e2))
    wts = (du[:, None, None] * Wt[:, :, None] * 0.5 * (2.0 * np.pi / n_theta)) * np.ones((1, 1, n_theta))
    keep = (Wt > 0)[:, :, None] & np.ones((1, 1, n_theta), bool)
    pts = p.center + p.radius * eta[keep]
    return BallRule(pts, wts[keep] * p.radius**3, np.broadcast_to(PL[:, :, None], keep.shape)[keep])
