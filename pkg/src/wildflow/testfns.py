"""Smooth space-time test functions: a Fourier mode on the unit torus times a polynomial time bump."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TestFunction:
    """``g = F(x) b(t)`` with ``F = cos`` or ``sin`` of ``2 pi kappa.x``.

    ``bump="initial"``: ``b = (1 - t/T)^4`` on ``[0, T)`` and 0 after, so
    ``g`` need not vanish at ``t = 0``.  ``bump="interior"``:
    ``b = (4 t (T - t) / T^2)^4`` on ``[0, T]``.  Both are extended by zero.
    """

    __test__ = False  # not a pytest class

    kappa: tuple[int, int]
    kind: str = "cos"
    bump: str = "interior"
    T: float = 1.0

    def _bump(self, t):
        t = np.asarray(t, float)
        T = self.T
        if self.bump == "initial":
            inside = (t >= 0) & (t < T)
            a = 1.0 - t / T
            b = np.where(inside, a**4, 0.0)
            db = np.where(inside, -4.0 * a**3 / T, 0.0)
            d2b = np.where(inside, 12.0 * a**2 / T**2, 0.0)
        else:
            inside = (t >= 0) & (t <= T)
            c = 4.0 / T**2
            p = c * t * (T - t)
            dp = c * (T - 2.0 * t)
            b = np.where(inside, p**4, 0.0)
            db = np.where(inside, 4.0 * p**3 * dp, 0.0)
            d2b = np.where(inside, 12.0 * p**2 * dp * dp - 8.0 * c * p**3, 0.0)
        return b, db, d2b

    def _mode(self, x):
        ph = TWO_PI * (self.kappa[0] * x[..., 0] + self.kappa[1] * x[..., 1])
        if self.kind == "cos":
            return np.cos(ph), -np.sin(ph)
        return np.sin(ph), np.cos(ph)

    def value(self, y):
        y = np.asarray(y, float)
        F, _ = self._mode(y)
        b, _, _ = self._bump(y[..., 2])
        return F * b

    def grad(self, y):
        """``(d/dx1, d/dx2, d/dt)`` stacked on the last axis."""
        y = np.asarray(y, float)
        F, dF = self._mode(y)
        b, db, _ = self._bump(y[..., 2])
        k1, k2 = TWO_PI * self.kappa[0], TWO_PI * self.kappa[1]
        return np.stack([k1 * dF * b, k2 * dF * b, F * db], axis=-1)

    def bounds(self):
        """Sup bounds ``(G0, G1, G2)`` of ``|g|``, first and second derivatives."""
        t = np.linspace(0.0, self.T, 4001)
        b, db, d2b = (np.abs(a).max() for a in self._bump(t))
        km = TWO_PI * max(abs(self.kappa[0]), abs(self.kappa[1]))
        return float(b), float(max(km * b, db)), float(max(km * km * b, km * db, d2b))

    def as_dict(self):
        return {"kappa": list(self.kappa), "kind": self.kind, "bump": self.bump, "T": self.T}


DEFAULT_MODES = [((1, 0), "cos"), ((0, 1), "sin"), ((1, 1), "cos"), ((2, -1), "sin"),
                 ((1, 2), "cos"), ((0, 0), "cos")]


def default_family(T: float = 1.0, bump: str = "interior", size: int | None = None):
    modes = DEFAULT_MODES if size is None else DEFAULT_MODES[:size]
    return [TestFunction(k, kind, bump, T) for k, kind in modes]
