"""Degenerate T4 configurations around ``(0, 0, z)`` and the hull sets built on them.

Corner maps.  For a center ``A = (rho, w, z)`` with ``|rho| < 1`` the segment
through ``A`` joining ``(1, x, x)`` and ``(-1, y, -y)`` has

    t = (1 + rho) / 2,   x = (z + w) / (1 + rho),   y = (w - z) / (1 - rho).

``A - (1, x', x')`` is a cone direction iff ``x' - w`` lies on the circle of
center ``(0, -(1 - rho)/2)`` and radius ``(1 - rho)/2``; for the ``rho = -1``
corners the circle has center ``(0, (1 + rho)/2)`` and radius ``(1 + rho)/2``.
Splitting ``x`` along the diameter of its circle through ``x`` gives the two
positive corners, and likewise for ``y``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadShrink,
    CenterOnAxis,
    CornerEscape,
    DegenerateWitness,
    NoAdmissibleDelta,
    NotMember,
    OutOfBall,
)
from .lambda_geometry import as_states, dist_to_K, in_cone, state

DELTA_CAP = 0.25
DELTA_FLOOR = 1e-3
EXCLUDED_Z = np.array([0.0, -0.5])


@dataclass(frozen=True)
class HullSpec:
    """Anchor flux ``z`` and radius ``delta`` of the ball around ``(0, 0, z)``."""

    z: tuple[float, float]
    delta: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if not np.linalg.norm(z) < 1.0:
            raise ValueError("need |z| < 1")
        if np.allclose(z, EXCLUDED_Z):
            raise ValueError("z = (0, -1/2) is excluded")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def center(self) -> np.ndarray:
        return state(0.0, (0.0, 0.0), self.z)

    @classmethod
    def for_z(cls, z, **kw) -> "HullSpec":
        return cls(tuple(float(c) for c in z), admissible_delta(z, **kw))


@dataclass
class T4Configuration:
    center: np.ndarray
    corners: np.ndarray  # (4, 5)
    weights: np.ndarray  # (4,)
    t: float
    x: np.ndarray
    y: np.ndarray
    a_x: np.ndarray
    a_y: np.ndarray
    r_x: float
    r_y: float


def _t4_arrays(A, radius_mode="corrected"):
    """Vectorized corner maps.  Returns a dict of arrays; no validity checks."""
    A = np.atleast_2d(as_states(A))
    rho = A[:, 0]
    w = A[:, 1:3]
    z = A[:, 3:5]
    t = 0.5 * (1.0 + rho)
    x = (z + w) / (1.0 + rho)[:, None]
    y = (w - z) / (1.0 - rho)[:, None]
    a_x = w.copy()
    a_x[:, 1] -= 0.5 * (1.0 - rho)
    a_y = w.copy()
    a_y[:, 1] += 0.5 * (1.0 + rho)
    if radius_mode == "corrected":
        r_x = 0.5 * (1.0 - rho)
        r_y = 0.5 * (1.0 + rho)
    elif radius_mode == "paper":
        # literal r = 1 - rho; kept only as a regression guard
        r_x = 1.0 - rho
        r_y = 1.0 + rho
    else:
        raise ValueError(radius_mode)
    dx = x - a_x
    dy = y - a_y
    nx = np.linalg.norm(dx, axis=1)
    ny = np.linalg.norm(dy, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ex = dx / nx[:, None]
        ey = dy / ny[:, None]
    x1 = a_x - r_x[:, None] * ex
    x2 = a_x + r_x[:, None] * ex
    y1 = a_y - r_y[:, None] * ey
    y2 = a_y + r_y[:, None] * ey
    mu1 = 0.5 * (1.0 - nx / r_x)
    mu2 = 0.5 * (1.0 + nx / r_x)
    nu1 = 0.5 * (1.0 - ny / r_y)
    nu2 = 0.5 * (1.0 + ny / r_y)
    n = A.shape[0]
    corners = np.empty((n, 4, 5))
    corners[:, 0, 0] = 1.0
    corners[:, 0, 1:3] = x1
    corners[:, 0, 3:5] = x1
    corners[:, 1, 0] = 1.0
    corners[:, 1, 1:3] = x2
    corners[:, 1, 3:5] = x2
    corners[:, 2, 0] = -1.0
    corners[:, 2, 1:3] = y1
    corners[:, 2, 3:5] = -y1
    corners[:, 3, 0] = -1.0
    corners[:, 3, 1:3] = y2
    corners[:, 3, 3:5] = -y2
    weights = np.stack([t * mu1, t * mu2, (1 - t) * nu1, (1 - t) * nu2], axis=1)
    margin = np.minimum.reduce([nx, r_x - nx, ny, r_y - ny])
    return dict(
        rho=rho, t=t, x=x, y=y, a_x=a_x, a_y=a_y, r_x=r_x, r_y=r_y,
        nx=nx, ny=ny, corners=corners, weights=weights, margin=margin,
    )


def t4_margin(A) -> np.ndarray:
    """``min(|x-a_x|, r_x-|x-a_x|, |y-a_y|, r_y-|y-a_y|)``; ``-inf`` where ``|rho| >= 1``."""
    A = np.atleast_2d(as_states(A))
    rho = A[:, 0]
    ok = np.abs(rho) < 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        w1, w2, z1, z2 = A[:, 1], A[:, 2], A[:, 3], A[:, 4]
        # x - a_x and y - a_y written out; same geometry as _t4_arrays
        nx = np.hypot((z1 + w1) / (1.0 + rho) - w1, (z2 + w2) / (1.0 + rho) - w2 + 0.5 * (1.0 - rho))
        ny = np.hypot((w1 - z1) / (1.0 - rho) - w1, (w2 - z2) / (1.0 - rho) - w2 - 0.5 * (1.0 + rho))
        m = np.minimum(np.minimum(nx, 0.5 * (1.0 - rho) - nx), np.minimum(ny, 0.5 * (1.0 + rho) - ny))
    return np.where(ok & np.isfinite(m), m, -np.inf)


def corner_map(A, i: int) -> np.ndarray:
    """Corner ``T_i(A)`` (``i`` in 1..4) for an array of centers, no validity checks."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return _t4_arrays(A)["corners"][:, i - 1, :]


def t4_for_center(A, spec: HullSpec | None = None, radius_mode: str = "corrected") -> T4Configuration:
    """Explicit T4 configuration in K with center ``A``.

    ``spec`` (optional) only enforces the ball precondition.
    """
    A = as_states(A).astype(float)
    if spec is not None and np.linalg.norm(A - spec.center) > spec.delta * (1 + 1e-12):
        raise OutOfBall(f"center lies outside the ball of radius {spec.delta}")
    if not abs(A[0]) < 1.0:
        raise OutOfBall("need |rho| < 1")
    with np.errstate(invalid="ignore", divide="ignore"):
        d = _t4_arrays(A, radius_mode)
    nx, ny = d["nx"][0], d["ny"][0]
    tiny = 1e-14
    if nx <= tiny or ny <= tiny:
        raise CenterOnAxis("x(A) = a_x or y(A) = a_y")
    if nx >= d["r_x"][0] or ny >= d["r_y"][0]:
        raise OutOfBall("x(A) or y(A) is not inside its ball")
    return T4Configuration(
        center=A,
        corners=d["corners"][0],
        weights=d["weights"][0],
        t=float(d["t"][0]),
        x=d["x"][0],
        y=d["y"][0],
        a_x=d["a_x"][0],
        a_y=d["a_y"][0],
        r_x=float(d["r_x"][0]),
        r_y=float(d["r_y"][0]),
    )


def _unit_directions(n, dim, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def admissible_delta(z, cap: float = DELTA_CAP, floor: float = DELTA_FLOOR,
                     n_samples: int = 4096, seed: int = 0) -> float:
    """Largest sampled-admissible radius around ``(0, 0, z)``.

    A radius is admissible when every sample of the closed ball (the center,
    ``n_samples`` points on the sphere and as many on the half-radius sphere)
    has T4 margin at least ``floor``.  Bisection between ``1e-9`` and ``cap``.
    """
    d = admissible_delta_many(np.asarray(z, float)[None, :], cap, floor, n_samples, seed)[0]
    if np.isnan(d):
        raise NoAdmissibleDelta(f"no admissible radius around z={tuple(np.asarray(z, float))}")
    return float(d)


def admissible_delta_many(zs, cap: float = DELTA_CAP, floor: float = DELTA_FLOOR,
                          n_samples: int = 4096, seed: int = 0, iters: int = 50) -> np.ndarray:
    """Vectorized :func:`admissible_delta`; ``nan`` where no radius is admissible."""
    zs = np.atleast_2d(np.asarray(zs, float))
    n = zs.shape[0]
    centers = np.zeros((n, 5))
    centers[:, 3:5] = zs
    dirs = _unit_directions(n_samples, 5, seed)
    offs = np.concatenate([np.zeros((1, 5)), dirs, 0.5 * dirs])

    def ok(delta):
        pts = centers[:, None, :] + delta[:, None, None] * offs[None, :, :]
        m = t4_margin(pts.reshape(-1, 5)).reshape(n, -1)
        return np.all(m >= floor, axis=1)

    hi = np.full(n, float(cap))
    lo = np.full(n, 1e-9)
    full = ok(hi)
    feasible = ok(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        good = ok(mid)
        lo = np.where(good, mid, lo)
        hi = np.where(good, hi, mid)
    out = np.where(full, float(cap), lo)
    return np.where(feasible | full, out, np.nan)


def max_corner_norm(spec: HullSpec, n_samples: int = 2048, seed: int = 1) -> float:
    dirs = _unit_directions(n_samples, 5, seed)
    pts = np.concatenate([spec.center[None], spec.center + spec.delta * dirs])
    with np.errstate(invalid="ignore", divide="ignore"):
        c = _t4_arrays(pts)["corners"]
    return float(np.nanmax(np.linalg.norm(c, axis=2)))


def app_constants(spec: HullSpec) -> dict:
    """``M(delta) = 1 + delta + max|T_i(C)|`` and ``c1 = (1-delta)/(8 M)``; ``c0 = 7/32``."""
    M = 1.0 + spec.delta + max_corner_norm(spec)
    return {"M": M, "c1": (1.0 - spec.delta) / (8.0 * M), "c0": 7.0 / 32.0}


# ---------------------------------------------------------------------------
# first-hull membership


@dataclass
class Witness:
    """``state = mix * C + (1 - mix) * X`` with ``C`` in the ball, ``X = T_i(B)``, ``B`` in the ball."""

    i: int
    C: np.ndarray
    X: np.ndarray
    B: np.ndarray
    mix: float
    defect: float = 0.0

    @property
    def state(self) -> np.ndarray:
        return self.mix * self.C + (1.0 - self.mix) * self.X


def _corner_x(P, i):
    """The ``x`` (i=1,2) or ``y`` (i=3,4) coordinate of corner ``T_i(P)``."""
    return corner_map(P, i)[:, 1:3]


def preimage_in_ball(xs, i: int, spec: HullSpec, iters: int = 12):
    """Least-norm Gauss-Newton solve of ``x_i(B) = x`` starting at the ball center.

    Returns the points ``B`` and their distances to the center (``inf`` when the
    iteration fails).  The corner map is a submersion, so the step
    ``J^T (J J^T)^-1 r`` is well defined near the ball.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = xs.shape[0]
    B = np.repeat(spec.center[None], n, axis=0)
    h = 1e-7
    eye = np.eye(5)
    for _ in range(iters):
        f = _corner_x(B, i)
        r = xs - f
        J = np.empty((n, 2, 5))
        for k in range(5):
            J[:, :, k] = (_corner_x(B + h * eye[k], i) - _corner_x(B - h * eye[k], i)) / (2 * h)
        JJt = J @ np.swapaxes(J, 1, 2)
        with np.errstate(invalid="ignore"):
            sol = np.linalg.solve(JJt + 1e-300 * np.eye(2), r[:, :, None])
        step = (np.swapaxes(J, 1, 2) @ sol)[:, :, 0]
        B = B + step
    res = np.linalg.norm(xs - _corner_x(B, i), axis=1)
    dist = np.linalg.norm(B - spec.center, axis=1)
    bad = ~np.isfinite(res) | (res > 1e-11) | ~np.isfinite(dist)
    dist = np.where(bad, np.inf, dist)
    return B, dist


def _circle(P, sign, phi):
    """Points ``x`` with ``P - (sign, x, sign x)`` in the cone, parametrized by angle."""
    rho = P[0]
    w = P[1:3]
    if sign > 0:
        c = w + np.array([0.0, -0.5 * (1.0 - rho)])
        R = 0.5 * abs(1.0 - rho)
    else:
        c = w + np.array([0.0, 0.5 * (1.0 + rho)])
        R = 0.5 * abs(1.0 + rho)
    return c[None] + R * np.stack([np.cos(phi), np.sin(phi)], axis=1)


def membership_in_Uz(s, spec: HullSpec, n_phi: int = 128, n_t: int = 96) -> Witness:
    """Witness that ``s`` lies in the first cone-hull of the ball and its four corner images.

    Search: for each corner family the admissible ``X`` form a circle around
    ``s`` (angle ``phi``), and each mix ``t`` then fixes ``C = (s - (1-t) X)/t``.
    Candidates with ``C`` in the ball are checked for ``X`` in the image of the
    ball under the corner map; the most interior candidate wins.
    """
    P = as_states(s).astype(float)
    center, delta = spec.center, spec.delta
    if np.linalg.norm(P - center) <= delta:
        with np.errstate(invalid="ignore", divide="ignore"):
            X = corner_map(P, 1)[0]
        return Witness(1, P.copy(), X, P.copy(), 1.0, 0.0)

    best = None
    best_score = -np.inf
    best_defect = np.inf
    phi = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    ts = np.geomspace(1e-4, 1.0, n_t)
    for i in (1, 2, 3, 4):
        sign = 1.0 if i <= 2 else -1.0
        if abs(P[0] - sign) < 1e-15 and np.linalg.norm(P[3:5] - P[0] * P[1:3]) < 1e-14:
            # s itself on K with matching density: mix 0
            B, d = preimage_in_ball(P[1:3], i, spec)
            if d[0] <= delta:
                X = corner_map(B, i)[0]
                return Witness(i, B[0], X, B[0], 0.0, float(np.linalg.norm(X - P)))
            continue
        xs = _circle(P, sign, phi)
        X = np.zeros((n_phi, 5))
        X[:, 0] = sign
        X[:, 1:3] = xs
        X[:, 3:5] = sign * xs
        C = (P[None, None, :] - (1 - ts)[None, :, None] * X[:, None, :]) / ts[None, :, None]
        dc = np.linalg.norm(C - center, axis=2)
        cand = np.argwhere(dc <= delta)
        if cand.size == 0:
            m = dc.min()
            if delta - m > best_score and best is None:
                best_defect = min(best_defect, m - delta)
            continue
        rows = np.unique(cand[:, 0])
        _, dB = preimage_in_ball(xs[rows], i, spec)
        okrow = dict(zip(rows.tolist(), dB.tolist()))
        for a, b in cand:
            dBv = okrow[a]
            if dBv > delta:
                continue
            score = min(delta - dc[a, b], delta - dBv)
            if score > best_score:
                best_score = score
                best = (i, a, b)
    if best is None:
        raise NotMember("no witness found", best=None, defect=best_defect)
    i, a, b = best
    sign = 1.0 if i <= 2 else -1.0
    x = _circle(P, sign, phi[a:a + 1])
    B, _ = preimage_in_ball(x, i, spec)
    X = corner_map(B, i)[0]
    t = ts[b]
    C = (P - (1 - t) * X) / t
    w = Witness(i, C, X, B[0], float(t), float(np.linalg.norm(t * C + (1 - t) * X - P)))
    if not (np.linalg.norm(C - center) <= delta and in_cone(C - X, 1e-9)):
        raise NotMember("witness failed verification", best=w, defect=w.defect)
    return w


def _image_boundary_distance(x0, i, spec, n_dir=48, iters=30):
    """Distance from ``x0`` to the boundary of ``x_i(ball)`` by radial bisection."""
    ang = np.linspace(0, 2 * np.pi, n_dir, endpoint=False)
    e = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    lo = np.zeros(n_dir)
    hi = np.full(n_dir, 4.0 * spec.delta + 1.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        _, d = preimage_in_ball(x0[None] + mid[:, None] * e, i, spec)
        inside = d <= spec.delta
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return float(lo.min())


def openness_margin(witness: Witness, spec: HullSpec) -> float:
    """``eps = min(t * dist(C, boundary of ball), dist(x_X, boundary of x_i(ball))) / 8``."""
    t = witness.mix
    if not 0.0 < t < 1.0:
        raise DegenerateWitness(f"mix {t} is not in (0, 1)")
    d_ball = spec.delta - np.linalg.norm(witness.C - spec.center)
    d_img = _image_boundary_distance(witness.X[1:3], witness.i, spec)
    eps = min(t * d_ball, d_img) / 8.0
    if not eps > 0:
        raise DegenerateWitness("witness sits on the boundary of the ball")
    return float(eps)


# ---------------------------------------------------------------------------
# staircase laminate


def shrunk_corners(C, s: float) -> np.ndarray:
    """``T_{i,s}(C) = (1-s) C + s T_i(C)``: corners pulled toward ``C`` by ``1-s``."""
    cfg = t4_for_center(C)
    return (1.0 - s) * cfg.center[None, :] + s * cfg.corners


def min_shrink(C, spec: HullSpec) -> float:
    """Smallest ``s`` with ``2 |C - T_{i,s}(C)| >= dist_K(C)`` for every corner.

    ``|C - T_{i,s}| = s |C - T_i|`` is linear in ``s``, so this is closed form.
    """
    cfg = t4_for_center(C)
    lens = np.linalg.norm(cfg.corners - cfg.center, axis=1)
    return float(dist_to_K(cfg.center) / (2.0 * lens.min()))


@dataclass
class Split:
    """``parent = (1 - kappa) low + kappa high`` with ``high - low`` a cone direction."""

    parent: np.ndarray
    low: np.ndarray
    high: np.ndarray
    kappa: float
    corner: int
    witness: Witness | None = None

    @property
    def direction(self) -> np.ndarray:
        return self.high - self.low


@dataclass
class StaircaseLaminate:
    """Forward staircase cycles from ``base`` and the top ``depth`` splits that realize it.

    ``C_nodes[j]`` and ``T_nodes[j-1]`` follow the forward recursion; the cycle
    closes (``C_nodes[4m] == base``), so ``splits[0]`` splits ``base`` itself.
    """

    base: np.ndarray
    shrink: float
    epsilon: float
    order: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    C_nodes: list = field(default_factory=list)
    T_nodes: list = field(default_factory=list)
    splits: list = field(default_factory=list)
    weights: np.ndarray | None = None

    @property
    def depth(self) -> int:
        return len(self.splits)

    def terminal_mixture(self):
        """(mass, state) leaves of the realized splits; masses sum to one, barycenter ``base``."""
        leaves = []
        w = 1.0
        for sp in self.splits:
            leaves.append((w * sp.kappa, sp.high))
            w *= 1.0 - sp.kappa
        if self.splits:
            leaves.append((w, self.splits[-1].low))
        else:
            leaves.append((1.0, self.base))
        return leaves


def segment_witness(state, C, corner: int, spec: HullSpec, tol: float = 1e-12) -> Witness | None:
    """Witness for ``state`` on the segment ``[C, T_i(C)]`` (``C`` in the ball), if it lies there."""
    C = as_states(C).astype(float)
    if np.linalg.norm(C - spec.center) > spec.delta:
        return None
    X = corner_map(C, corner)[0]
    d = X - C
    a = float((state - C) @ d / (d @ d))
    if not (0.0 <= a <= 1.0) or np.linalg.norm(C + a * d - state) > tol * (1 + np.linalg.norm(state)):
        return None
    return Witness(corner, C.copy(), X, C.copy(), 1.0 - a, 0.0)


def staircase(C, spec: HullSpec, epsilon: float, s: float, depth: int,
              order=None, check_hull: bool = True) -> StaircaseLaminate:
    """Staircase laminate around ``C`` realized by its top ``depth`` splits.

    Step ``j`` of a cycle uses corner ``i = order[j mod 4]`` with mixing ratio
    ``kappa_i = 4 lambda_i epsilon / (1 + epsilon)`` (mean ``epsilon/(1+epsilon)``):

        C_j = C_{j-1} + kappa_i (T_{i,s}(C) - C),   T_j = T_{i,s}(C) + (C_{j-1} - C),

    so ``C_j = (1 - kappa_i) C_{j-1} + kappa_i T_j`` with ``T_j - C_{j-1}`` in
    the cone.  Weighting by the barycentric ``lambda_i`` closes every cycle of
    four steps, so ``C`` itself is split first: ``C = C_{4m} -> (C_{4m-1}, T_{4m})``,
    then ``C_{4m-1}``, and so on.  The last corner of ``order`` is split first.
    """
    C = as_states(C).astype(float)
    if np.linalg.norm(C - spec.center) > spec.delta:
        raise CornerEscape("base is not in the ball")
    if not 0.0 < s <= 1.0:
        raise BadShrink("shrink factor must lie in (0, 1]")
    cfg = t4_for_center(C)
    Ts = (1.0 - s) * C[None, :] + s * cfg.corners
    dK = float(dist_to_K(C))
    if not np.all(2.0 * np.linalg.norm(C[None] - Ts, axis=1) >= dK):
        raise BadShrink(f"shrink s={s} violates 2|C - T_is| >= dist(C, K)")
    order = list(order) if order is not None else [1, 2, 3, 4]
    if sorted(order) != [1, 2, 3, 4]:
        raise ValueError("order must be a permutation of 1..4")
    kappa_all = 4.0 * cfg.weights * epsilon / (1.0 + epsilon)
    if np.any(kappa_all >= 1.0):
        raise CornerEscape("epsilon too large: a mixing ratio reaches 1")
    lam = StaircaseLaminate(base=C, shrink=s, epsilon=epsilon, weights=cfg.weights)
    lam.C_nodes.append(C.copy())
    m = max(1, -(-depth // 4))
    acc = np.zeros(5)
    for j in range(4 * m):
        i = order[j % 4]
        k = float(kappa_all[i - 1])
        prev = lam.C_nodes[-1]
        lam.T_nodes.append(Ts[i - 1] + (prev - C))
        acc = acc + k * (Ts[i - 1] - C)
        lam.order.append(i)
        lam.ratios.append(k)
        lam.C_nodes.append(C + acc)
    # closure: the cycle returns to C up to roundoff; pin it
    lam.C_nodes[-1] = C.copy()
    n = 4 * m
    for j in range(n, n - depth, -1):
        low, high = lam.C_nodes[j - 1], lam.T_nodes[j - 1]
        if np.linalg.norm(low - spec.center) > spec.delta:
            raise CornerEscape(f"node C_{j - 1} left the ball (epsilon too large)")
        i = lam.order[j - 1]
        w = segment_witness(high, C, i, spec, tol=1e-9)
        if w is None and check_hull:
            try:
                w = membership_in_Uz(high, spec)
            except NotMember as exc:
                raise CornerEscape(f"node T_{j} left the hull") from exc
        lam.splits.append(Split(lam.C_nodes[j], low, high, lam.ratios[j - 1], i, w))
    return lam
