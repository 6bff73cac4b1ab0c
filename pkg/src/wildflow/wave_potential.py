"""Saw-tooth plane waves through the potential ``D(phi, psi)`` and their localization.

Space-time points are ``y = (x1, x2, t)``.  ``D`` maps a scalar ``phi`` and a
scalar ``psi`` to the state

    rho = psi_11 + psi_22,  v = (psi_12, -psi_11),
    q = (-psi_t1 - phi_2, -psi_t2 + phi_1),

which satisfies the linear system identically.  A cone direction ``U`` with
``rho != 0`` factors as ``beta * xi xi^T`` on its velocity block, which gives the
phase covector; ``psi = beta |xi|^2 S(theta)/N^2`` and ``phi = d |xi| S'(theta)/N``
with ``theta = N k.y`` then produce ``S''(theta) U``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateDirection, IterationCap
from .lambda_geometry import as_states, in_cone


@dataclass(frozen=True)
class SawtoothProfile:
    lam: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")

    @property
    def s_max(self) -> float:
        return 0.5 * self.lam * (1.0 - self.lam)

    @property
    def S_max(self) -> float:
        return 0.125 * self.lam * (1.0 - self.lam)

    def jumps(self) -> tuple[float, float]:
        """Positions of the ``s'`` jumps inside one period."""
        return 0.5 * self.lam, 1.0 - 0.5 * self.lam


def sawtooth_eval(p: SawtoothProfile, x):
    """``(S, s, s')`` at ``x``; ``s'`` takes the left value at its jumps."""
    lam = p.lam
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x)
    a, b = 0.5 * lam, 1.0 - 0.5 * lam
    # left-value convention: a point sitting exactly on a jump belongs to the piece on its left
    first = y <= a
    last = y > b
    mid = ~first & ~last
    yl = np.where(last, y - 1.0, y)  # [-lam/2, lam/2] around 0
    ds = np.where(mid, -lam, 1.0 - lam)
    s = np.where(mid, 0.5 * lam * (1 - lam) - lam * (y - a), (1.0 - lam) * yl)
    S_edge = 0.5 * (1.0 - lam) * yl * yl
    u = y - a
    S_mid = 0.125 * (1.0 - lam) * lam * lam + 0.5 * lam * (1 - lam) * u - 0.5 * lam * u * u
    S = np.where(mid, S_mid, S_edge)
    return S, s, ds


def d_operator(grad_phi, hess_psi) -> np.ndarray:
    """State read off ``D`` from ``grad phi`` (..., 3) and ``Hess psi`` (..., 3, 3)."""
    g = np.asarray(grad_phi, dtype=float)
    H = np.asarray(hess_psi, dtype=float)
    out = np.empty(g.shape[:-1] + (5,))
    out[..., 0] = H[..., 0, 0] + H[..., 1, 1]
    out[..., 1] = H[..., 0, 1]
    out[..., 2] = -H[..., 0, 0]
    out[..., 3] = -H[..., 2, 0] - g[..., 1]
    out[..., 4] = -H[..., 2, 1] + g[..., 0]
    return out


def potential_apply(phi, psi, point) -> np.ndarray:
    """Apply ``D`` at ``point``.

    ``phi(point)`` must return ``(value, gradient)`` and ``psi(point)`` must
    return ``(value, gradient, hessian)``, all in closed form.
    """
    _, gphi = phi(point)[:2]
    _, _, hpsi = psi(point)[:3]
    return d_operator(gphi, hpsi)


def wave_coefficients(direction):
    """Phase covector ``xi = (xi1, xi2, xi_t)`` and the coefficients ``(c, d)``, ``c = xi_t``.

    ``beta = sign(rho)`` and ``beta xi_s xi_s^T = [[-v2, v1], [v1, v2 + rho]]``
    (rank one on the cone); ``(c, d)`` solve ``q1 = -beta c xi1 - d xi2`` and
    ``q2 = -beta c xi2 + d xi1``, a system with determinant ``-beta |xi_s|^2``.
    The sign of ``xi_s`` is fixed by making its largest entry positive.
    """
    U = as_states(direction).astype(float)
    rho, v1, v2, q1, q2 = U
    if rho == 0.0:
        raise DegenerateDirection("rho = 0: no plane-wave potential")
    if not in_cone(U, 1e-10):
        raise DegenerateDirection("direction is not in the wave cone")
    beta = 1.0 if rho > 0 else -1.0
    P = beta * np.array([[-v2, v1], [v1, v2 + rho]])
    j = int(np.argmax(np.diag(P)))
    xs = P[:, j] / math.sqrt(P[j, j])
    A = np.array([[-beta * xs[0], -xs[1]], [-beta * xs[1], xs[0]]])
    c, d = np.linalg.solve(A, np.array([q1, q2]))
    return np.array([xs[0], xs[1], c]), float(c), float(d)


# ---------------------------------------------------------------------------
# radial cutoff


def cutoff_radial(r, width):
    """Quintic smoothstep ``Z(r)``: 1 for ``r <= 1 - width``, 0 for ``r >= 1``; returns ``(Z, Z', Z'')``."""
    r = np.asarray(r, dtype=float)
    s = np.clip((r - (1.0 - width)) / width, 0.0, 1.0)
    Z = (1.0 - s) ** 3 * (1.0 + 3.0 * s + 6.0 * s * s)  # exact at both ends
    Z1 = -30.0 * s * s * (1.0 - s) ** 2 / width
    Z2 = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / width**2
    return Z, Z1, Z2


ZETA1_MAX = 15.0 / 8.0
ZETA2_MAX = 10.0 / math.sqrt(3.0)


@dataclass
class WavePatch:
    """Localized saw-tooth wave on the ball ``|y - center| < radius``."""

    center: np.ndarray
    radius: float
    direction: np.ndarray
    lam: float
    N: int
    cutoff_width: float = 0.1
    phase_shift: float = 0.0
    beta: float = field(init=False)
    xi: np.ndarray = field(init=False)
    c: float = field(init=False)
    d: float = field(init=False)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.direction = as_states(self.direction).astype(float)
        if not (0.0 < self.cutoff_width < 0.5):
            raise ValueError("cutoff width must be in (0, 1/2)")
        if self.N < 1:
            raise ValueError("frequency must be a positive integer")
        self.xi, self.c, self.d = wave_coefficients(self.direction)
        self.beta = 1.0 if self.direction[0] > 0 else -1.0

    @property
    def profile(self) -> SawtoothProfile:
        return SawtoothProfile(self.lam)

    @property
    def xi_norm(self) -> float:
        return float(np.linalg.norm(self.xi))

    @property
    def k(self) -> np.ndarray:
        return self.xi / self.xi_norm

    @property
    def plateau_radius(self) -> float:
        return 1.0 - self.cutoff_width

    def local(self, y):
        return (np.asarray(y, dtype=float) - self.center) / self.radius

    def phase(self, eta):
        return self.N * (eta @ self.k) + self.phase_shift

    def endpoints(self):
        """``((1-lam) U, -lam U)`` with masses ``lam`` and ``1 - lam``."""
        return (1.0 - self.lam) * self.direction, -self.lam * self.direction

    def stripe_pieces(self):
        """Split of ``u = k.eta`` in ``[-1, 1]`` at the ``s'`` jumps.

        Returns ``(edges, high)``: consecutive edges and, per piece, whether
        ``s' = 1 - lam`` there (else ``-lam``).
        """
        a, b = self.profile.jumps()
        N, ph = self.N, self.phase_shift
        lo = math.floor(-N - ph) - 1
        hi = math.ceil(N - ph) + 1
        m = np.arange(lo, hi + 1)
        cuts = np.concatenate([(m + a - ph) / N, (m + b - ph) / N])
        cuts = np.sort(cuts[(cuts > -1.0) & (cuts < 1.0)])
        edges = np.concatenate([[-1.0], cuts, [1.0]])
        mids = 0.5 * (edges[:-1] + edges[1:])
        _, _, ds = sawtooth_eval(self.profile, N * mids + ph)
        return edges, ds > 0


def patch_field(p: WavePatch, points) -> np.ndarray:
    """``D(zeta phi_N, zeta psi_N)`` at the given space-time points, shape ``(..., 5)``."""
    y = np.asarray(points, dtype=float)
    shape = y.shape[:-1]
    eta = p.local(y.reshape(-1, 3))
    out = np.zeros((eta.shape[0], 5))
    r = np.linalg.norm(eta, axis=1)
    inside = r < 1.0
    if not np.any(inside):
        return out.reshape(shape + (5,))
    e = eta[inside]
    ri = r[inside]
    theta = p.phase(e)
    S, s, ds = sawtooth_eval(p.profile, theta)
    plateau = ri <= p.plateau_radius
    # plateau identity: the field is exactly s'(theta) U there
    sub = np.empty((e.shape[0], 5))
    sub[plateau] = ds[plateau, None] * p.direction[None, :]
    ann = ~plateau
    if np.any(ann):
        ea, ra = e[ann], ri[ann]
        Sa, sa, dsa = S[ann], s[ann], ds[ann]
        k = p.k
        n2 = p.xi_norm**2
        N = p.N
        psi = p.beta * n2 * Sa / N**2
        gpsi = (p.beta * n2 * sa / N)[:, None] * k[None, :]
        Hpsi = (p.beta * n2 * dsa)[:, None, None] * np.outer(k, k)[None]
        phi = p.d * p.xi_norm * sa / N
        gphi = (p.d * p.xi_norm * dsa)[:, None] * k[None, :]
        Z, Z1, Z2 = cutoff_radial(ra, p.cutoff_width)
        nh = ea / ra[:, None]
        gz = Z1[:, None] * nh
        P = nh[:, :, None] * nh[:, None, :]
        Hz = Z2[:, None, None] * P + (Z1 / ra)[:, None, None] * (np.eye(3)[None] - P)
        H = (Z[:, None, None] * Hpsi + gz[:, :, None] * gpsi[:, None, :]
             + gpsi[:, :, None] * gz[:, None, :] + psi[:, None, None] * Hz)
        G = Z[:, None] * gphi + phi[:, None] * gz
        sub[ann] = d_operator(G, H)
    out[inside] = sub
    return out.reshape(shape + (5,))


def pollution_constant(direction, lam: float, cutoff_width: float) -> float:
    """``C`` with ``sup dist(field, segment) <= C / N`` for ``N * width >= 1``.

    Sums the explicit bounds of the cutoff terms ``2 |grad zeta| |grad psi|``,
    ``|psi| |Hess zeta|`` and ``|phi| |grad zeta|`` (the first two enter the
    state through at most two matrix entries each).
    """
    xi, _, d = wave_coefficients(direction)
    n = float(np.linalg.norm(xi))
    p = SawtoothProfile(lam)
    w = cutoff_width
    t1 = 2.0 * ZETA1_MAX / w * n * n * p.s_max
    t2 = ZETA2_MAX / w * n * n * p.S_max  # 1/N^2 <= w/N once N w >= 1
    t3 = ZETA1_MAX / w * abs(d) * n * p.s_max
    return float(2.0 * (t1 + t2) + t3)


def n_min(epsilon: float, direction, lam: float, cutoff_width: float) -> int:
    """Smallest ``N`` for which the pollution bound is at most ``epsilon``."""
    C = pollution_constant(direction, lam, cutoff_width)
    return int(max(math.ceil(C / epsilon), math.ceil(1.0 / cutoff_width)))


# ---------------------------------------------------------------------------
# exact measures


def ball_slab_measure(R: float, a, b):
    """``|{|y| <= R, a <= y.k <= b}|`` for a unit ``k``; vectorized in ``a, b``."""
    a = np.clip(np.asarray(a, dtype=float), -R, R)
    b = np.clip(np.asarray(b, dtype=float), -R, R)
    F = lambda u: R * R * u - u**3 / 3.0  # noqa: E731
    return np.pi * np.maximum(F(b) - F(a), 0.0)


def ball_volume(r):
    return 4.0 / 3.0 * np.pi * np.asarray(r, dtype=float) ** 3


def plateau_stripes(p: WavePatch):
    """Exact stripe decomposition of the plateau ball.

    Returns a list of ``(u_lo, u_hi, high, measure)`` in local coordinates, the
    measure scaled to global units.  Only stripes meeting the plateau are kept.
    """
    edges, high = p.stripe_pieces()
    R0 = p.plateau_radius
    meas = ball_slab_measure(R0, edges[:-1], edges[1:]) * p.radius**3
    out = []
    for lo, hi, h, m in zip(edges[:-1], edges[1:], high, meas):
        if m > 0:
            out.append((float(max(lo, -R0)), float(min(hi, R0)), bool(h), float(m)))
    return out


# ---------------------------------------------------------------------------
# covers


@dataclass
class Domain:
    """Closed ball (``radius`` set) or axis box (``lo``/``hi`` set) in space-time."""

    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    @classmethod
    def box(cls, lo, hi):
        return cls(lo=np.asarray(lo, float), hi=np.asarray(hi, float))

    @classmethod
    def ball(cls, center, radius):
        return cls(center=np.asarray(center, float), radius=float(radius))

    @property
    def is_ball(self) -> bool:
        return self.radius is not None

    @property
    def measure(self) -> float:
        if self.is_ball:
            return float(ball_volume(self.radius))
        return float(np.prod(self.hi - self.lo))

    def bounds(self):
        if self.is_ball:
            return self.center - self.radius, self.center + self.radius
        return self.lo, self.hi

    def inner_distance(self, pts):
        """Distance from points to the complement (negative outside)."""
        pts = np.atleast_2d(pts)
        if self.is_ball:
            return self.radius - np.linalg.norm(pts - self.center, axis=1)
        return np.minimum((pts - self.lo).min(axis=1), (self.hi - pts).min(axis=1))

    def as_dict(self):
        if self.is_ball:
            return {"ball": {"center": self.center.tolist(), "radius": self.radius}}
        return {"box": {"lo": self.lo.tolist(), "hi": self.hi.tolist()}}


@dataclass
class BallCover:
    domain: Domain
    centers: np.ndarray
    radii: np.ndarray
    history: list = field(default_factory=list)  # covered fraction after each level

    @property
    def covered_measure(self) -> float:
        return float(ball_volume(self.radii).sum())

    @property
    def covered_fraction(self) -> float:
        return self.covered_measure / self.domain.measure

    @property
    def uncovered_fraction(self) -> float:
        return 1.0 - self.covered_fraction

    def __len__(self):
        return len(self.radii)


def greedy_ball_cover(domain: Domain, target_fraction: float, *, shrink: float = 0.98,
                      max_levels: int = 8, max_balls: int | None = None,
                      obstacles=None, r0: float | None = None,
                      allow_partial: bool = False) -> BallCover:
    """Deterministic greedy packing by dyadic radius classes.

    Level ``j`` tries centers on a cubic lattice of spacing ``r_j / 2``, the
    roomiest first with lexicographic tie-breaking; a candidate gets the largest radius in
    ``[r_j / 2, r_j]`` that keeps it inside the domain and disjoint from every
    accepted ball and obstacle, times ``shrink``.  ``obstacles`` is an optional
    ``(centers, radii)`` pair of balls to avoid.  With ``allow_partial`` the
    cover found so far is returned instead of raising when the levels or the
    ball budget run out.
    """
    if not 0.0 < target_fraction < 1.0:
        raise ValueError("target fraction must lie in (0, 1)")
    lo, hi = domain.bounds()
    if r0 is None:
        r0 = 0.5 * float(np.min(hi - lo))
    centers = np.zeros((0, 3))
    radii = np.zeros(0)
    if obstacles is not None and len(obstacles[1]):
        ob_c = np.asarray(obstacles[0], float)
        ob_r = np.asarray(obstacles[1], float)
    else:
        ob_c, ob_r = np.zeros((0, 3)), np.zeros(0)
    target = target_fraction * domain.measure
    covered = 0.0
    history = []
    for j in range(max_levels):
        rj = r0 / 2**j
        h = 0.5 * rj
        axes = [np.arange(lo[i] + h, hi[i] - h + 1e-12, h) for i in range(3)]
        if min(len(a) for a in axes) == 0:
            history.append(covered / domain.measure)
            continue
        g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        room = domain.inner_distance(g)
        all_c = np.concatenate([centers, ob_c])
        all_r = np.concatenate([radii, ob_r])
        if len(all_r):
            tree = cKDTree(all_c)
            rmax = all_r.max()
            near = tree.query_ball_point(g, rj + rmax)
            for idx, nb in enumerate(near):
                if nb and room[idx] >= 0.5 * rj:
                    nb = np.asarray(nb)
                    gap = np.linalg.norm(all_c[nb] - g[idx], axis=1) - all_r[nb]
                    room[idx] = min(room[idx], gap.min())
        keep = np.nonzero(room >= 0.5 * rj)[0]
        # roomiest first, lattice order among ties
        keep = keep[np.argsort(-np.round(np.minimum(room[keep], rj), 12), kind="stable")]
        new_c, new_r = [], []
        # same-level conflicts: bucket grid of cell size 2 r_j
        buckets: dict = {}
        for idx in keep:
            c = g[idx]
            r = min(rj, room[idx]) * shrink
            key = tuple(np.floor(c / (2 * rj)).astype(int))
            ok = True
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        for k2 in buckets.get((key[0] + dx, key[1] + dy, key[2] + dz), ()):
                            if np.linalg.norm(new_c[k2] - c) < new_r[k2] + r:
                                ok = False
                                break
                        if not ok:
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if not ok:
                continue
            buckets.setdefault(key, []).append(len(new_c))
            new_c.append(c)
            new_r.append(r)
            covered += float(ball_volume(r))
            if covered >= target or (max_balls is not None and len(radii) + len(new_r) >= max_balls):
                break
        if new_c:
            centers = np.concatenate([centers, np.array(new_c)])
            radii = np.concatenate([radii, np.array(new_r)])
        history.append(covered / domain.measure)
        if covered >= target:
            return BallCover(domain, centers, radii, history)
        if max_balls is not None and len(radii) >= max_balls:
            break
    if allow_partial:
        return BallCover(domain, centers, radii, history)
    raise IterationCap(f"covered fraction {covered / domain.measure:.4f} below target",
                       achieved=covered / domain.measure)


# ---------------------------------------------------------------------------
# building block


@dataclass
class MeasureStats:
    domain_measure: float
    covered_measure: float
    plateau_measure: float
    high_measure: float  # where the field is (1 - lam) U
    low_measure: float  # where the field is -lam U
    annulus_measure: float
    n_patches: int
    n_min: int
    sup_bound: float

    @property
    def high_fraction(self) -> float:
        return self.high_measure / self.domain_measure

    @property
    def low_fraction(self) -> float:
        return self.low_measure / self.domain_measure

    @property
    def cutoff_budget(self) -> float:
        return self.annulus_measure / self.covered_measure

    @property
    def epsilon_total(self) -> float:
        return 1.0 - self.plateau_measure / self.domain_measure


def single_ball_cover(domain: Domain, shrink: float = 1.0 - 1e-9) -> BallCover:
    return BallCover(domain, domain.center[None, :].copy(), np.array([domain.radius * shrink]), [shrink**3])


def building_block(domain: Domain, direction, lam: float, epsilon: float, N: int,
                   cutoff_width: float = 0.1, phase_shift: float = 0.0, cover: BallCover | None = None):
    """Patches realizing the two-state split along ``direction`` with masses ``(lam, 1 - lam)``.

    The domain is covered to ``1 - epsilon`` (a ball domain is its own cover),
    one patch per ball.  Stripe measures are exact.
    """
    if cover is None:
        cover = single_ball_cover(domain) if domain.is_ball else greedy_ball_cover(domain, 1.0 - epsilon)
    patches = [WavePatch(c, r, direction, lam, N, cutoff_width, phase_shift)
               for c, r in zip(cover.centers, cover.radii)]
    high = low = plat = 0.0
    for p in patches:
        for _, _, h, m in plateau_stripes(p):
            plat += m
            if h:
                high += m
            else:
                low += m
    cov = cover.covered_measure
    C = pollution_constant(direction, lam, cutoff_width)
    stats = MeasureStats(
        domain_measure=domain.measure, covered_measure=cov, plateau_measure=plat,
        high_measure=high, low_measure=low, annulus_measure=cov - plat,
        n_patches=len(patches), n_min=n_min(epsilon, direction, lam, cutoff_width),
        sup_bound=C / N,
    )
    return patches, stats


def distance_to_segment(values, a, b) -> np.ndarray:
    """Euclidean distance of states to the segment ``[a, b]``."""
    v = np.asarray(values, float)
    d = b - a
    t = np.clip(((v - a) @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(v - a - t[..., None] * d, axis=-1)
