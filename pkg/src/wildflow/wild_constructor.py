"""Direct construction of subsolutions on the unit torus times ``(0, T)``.

A subsolution is a patch forest.  The base region is the whole domain at the
constant state ``(0, 0, z)``; every patch is a localized saw-tooth wave in a
ball lying inside the plateau of one constant region, and its plateau stripes
become new constant regions.  Field values are ``base + sum of patch fields``.
Measures of regions are exact (ball/slab formulas); only the cutoff shells are
integrated numerically, once, when a patch is created.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from .errors import (
    BadShrink,
    CornerEscape,
    InvalidConfig,
    NotInHull,
    NotMember,
    ToleranceUnreachable,
)
from .lambda_geometry import dist_to_K, state
from .quadrature import ball_rule
from .t4_hull import (
    HullSpec,
    Witness,
    admissible_delta,
    app_constants,
    membership_in_Uz,
    staircase,
)
from .testfns import default_family
from .wave_potential import (
    Domain,
    SawtoothProfile,
    WavePatch,
    ball_volume,
    greedy_ball_cover,
    patch_field,
    plateau_stripes,
)

FORMAT = "wildflow-subsolution"
VERSION = 1
BAND = (0.9, 1.1)


@dataclass
class ConstructionConfig:
    z: tuple = (0.2, -0.35)
    delta: float | None = None  # None: largest admissible radius
    T: float = 1.0
    rounds: int = 3
    N0: int = 8
    N_growth: int = 2
    N_cap: int = 1024
    cover_target: float = 0.6
    cutoff_width: float = 0.1
    shrink: float = 0.97
    eps_schedule: tuple = (0.03125, 0.015625, 0.0078125, 0.00390625)
    depth: int = 1
    patch_budget: int = 300
    gap_levels: int = 4
    eta: tuple = (0.25, 0.125, 0.0625, 0.03125, 0.015625)
    mollifier_grid: int = 24
    n_tests: int = 5
    seed: int = 0
    dist_floor: float = 1e-9

    def validate(self):
        try:
            z = np.asarray(self.z, float)
            if z.shape != (2,) or not np.linalg.norm(z) < 1:
                raise InvalidConfig("z must be a point of the open unit disk")
            positive = {
                "T": self.T, "N0": self.N0, "N_growth": self.N_growth, "N_cap": self.N_cap,
                "cover_target": self.cover_target, "cutoff_width": self.cutoff_width,
                "shrink": self.shrink, "depth": self.depth, "patch_budget": self.patch_budget,
                "gap_levels": self.gap_levels, "mollifier_grid": self.mollifier_grid,
                "n_tests": self.n_tests,
            }
            for name, val in positive.items():
                if not val > 0:
                    raise InvalidConfig(f"{name} must be positive")
            if self.rounds < 0:
                raise InvalidConfig("rounds must be nonnegative")
            if self.delta is not None and not self.delta > 0:
                raise InvalidConfig("delta must be positive")
            if not 0 < self.cover_target < 1 or not 0 < self.cutoff_width < 0.5:
                raise InvalidConfig("cover_target in (0,1) and cutoff_width in (0,1/2) required")
            if not 0 < self.shrink <= 1:
                raise InvalidConfig("shrink must lie in (0, 1]")
            if not self.eps_schedule or any(not e > 0 for e in self.eps_schedule):
                raise InvalidConfig("eps_schedule must be a nonempty list of positive numbers")
            if any(not 0 <= e < 1 for e in self.eta) or np.prod([1 - e for e in self.eta]) < 0.5:
                raise InvalidConfig("eta needs prod(1 - eta_j) >= 1/2")
            if self.N_growth < 1:
                raise InvalidConfig("frequency schedule must be nondecreasing")
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc
        return self

    def frequency(self, k: int) -> int:
        return int(self.N0 * self.N_growth ** (k - 1))

    def as_dict(self):
        d = asdict(self)
        d["z"] = [float(c) for c in self.z]
        d["eps_schedule"] = list(self.eps_schedule)
        d["eta"] = list(self.eta)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        for key in ("z", "eps_schedule", "eta"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d).validate()


@dataclass
class Region:
    id: int
    state: np.ndarray
    measure: float
    owner: int | None  # patch id; None for the base region
    u_lo: float | None
    u_hi: float | None
    high: bool
    round: int
    child_measure: float = 0.0
    children: list = field(default_factory=list)
    witness: dict | None = None

    @property
    def free_measure(self) -> float:
        return self.measure - self.child_measure

    def to_dict(self):
        return {
            "id": self.id, "state": self.state.tolist(), "measure": self.measure,
            "owner": self.owner, "u_lo": self.u_lo, "u_hi": self.u_hi, "high": self.high,
            "round": self.round, "child_measure": self.child_measure,
            "children": list(self.children), "witness": self.witness,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["state"] = np.asarray(d["state"], float)
        return cls(**d)


@dataclass
class PatchRecord:
    id: int
    round: int
    region: int
    wave: WavePatch
    local_state: np.ndarray
    kind: str  # "staircase" or "segment"
    meta: dict
    regions: list
    annulus: dict
    top: bool = True  # first patch of its ball in this round

    def to_dict(self):
        w = self.wave
        return {
            "id": self.id, "round": self.round, "region": self.region, "kind": self.kind,
            "top": self.top,
            "ball": {"center": w.center.tolist(), "radius": w.radius},
            "direction": w.direction.tolist(), "lambda": w.lam, "N": w.N,
            "cutoff_width": w.cutoff_width, "phase_shift": w.phase_shift,
            "c": w.c, "d": w.d, "local_state": self.local_state.tolist(),
            "meta": self.meta, "regions": list(self.regions), "annulus": self.annulus,
        }

    @classmethod
    def from_dict(cls, d):
        w = WavePatch(np.asarray(d["ball"]["center"]), d["ball"]["radius"], np.asarray(d["direction"]),
                      d["lambda"], d["N"], d["cutoff_width"], d["phase_shift"])
        return cls(d["id"], d["round"], d["region"], w, np.asarray(d["local_state"], float), d["kind"],
                   d["meta"], list(d["regions"]), d["annulus"], d.get("top", True))


class Subsolution:
    """Patch forest over ``[0,1)^2 x (0, T)`` with base state ``(0, 0, z)`` outside every patch."""

    def __init__(self, z, delta, T, config: dict | None = None):
        self.z = tuple(float(c) for c in z)
        self.delta = float(delta)
        self.T = float(T)
        self.base = state(0.0, (0.0, 0.0), self.z)
        self.config = config or {}
        self.regions: list[Region] = [
            Region(0, self.base.copy(), self.T, None, None, None, False, 0)
        ]
        self.patches: list[PatchRecord] = []
        self.generations: list[dict] = []

    # -- geometry -------------------------------------------------------
    @property
    def spec(self) -> HullSpec:
        return HullSpec(self.z, self.delta)

    @property
    def domain(self) -> Domain:
        return Domain.box([0.0, 0.0, 0.0], [1.0, 1.0, self.T])

    @property
    def rounds(self) -> int:
        return max((g["round"] for g in self.generations), default=0)

    def evaluate(self, points) -> np.ndarray:
        """Field values at space-time points ``(..., 3)``; spatial coordinates taken mod 1."""
        y = np.asarray(points, float)
        shape = y.shape[:-1]
        y = y.reshape(-1, 3).copy()
        y[:, :2] -= np.floor(y[:, :2])
        out = np.broadcast_to(self.base, (y.shape[0], 5)).copy()
        if not self.patches:
            return out.reshape(shape + (5,))
        tree = cKDTree(y)
        for rec in self.patches:
            w = rec.wave
            idx = tree.query_ball_point(w.center, w.radius)
            if idx:
                idx = np.sort(np.asarray(idx))
                out[idx] += patch_field(w, y[idx])
        return out.reshape(shape + (5,))

    def leaves(self):
        return [r for r in self.regions if r.free_measure > 0]

    # -- exact bookkeeping ---------------------------------------------
    def stats(self) -> dict:
        """Exact plateau accounting plus stored shell integrals."""
        regs = self.regions
        states = np.array([r.state for r in regs])
        free = np.array([r.free_measure for r in regs])
        d = np.atleast_1d(dist_to_K(states))
        rho = np.abs(states[:, 0])
        band = (rho >= BAND[0]) & (rho <= BAND[1])
        ann = [p.annulus for p in self.patches]
        total = float(free.sum() + sum(a["measure"] for a in ann))
        dist_int = float((d * free).sum() + sum(a["dist"] for a in ann))
        band_m = float(free[band].sum() + sum(a["band"] for a in ann))
        defect = np.linalg.norm(states[:, 3:5] - states[:, :1] * states[:, 1:3], axis=1)
        return {
            "measure": total,
            "dist_integral": dist_int,
            "band_fraction": band_m / self.T,
            "band_plateau_fraction": float(free[band].sum()) / self.T,
            "annulus_fraction": float(sum(a["measure"] for a in ann)) / self.T,
            "constraint_L1_plateau": float((defect * free).sum()),
            "n_patches": len(self.patches),
            "n_regions": len(regs),
        }

    def truncated(self, k: int) -> "Subsolution":
        """The subsolution after round ``k``: drop later patches and their regions."""
        sub = Subsolution(self.z, self.delta, self.T, self.config)
        keep = [p for p in self.patches if p.round <= k]
        keep_ids = {p.id for p in keep}
        regs = [copy.deepcopy(r) for r in self.regions if r.owner is None or r.owner in keep_ids]
        for r in regs:
            r.children = [c for c in r.children if c in keep_ids]
            r.child_measure = float(sum(ball_volume(self.patches[c].wave.radius) for c in r.children))
        sub.regions = regs
        sub.patches = [copy.deepcopy(p) for p in keep]
        sub.generations = [g for g in self.generations if g["round"] <= k]
        sub._reindex()
        return sub

    def _reindex(self):
        """Renumber after truncation so ids equal list positions."""
        rmap = {r.id: i for i, r in enumerate(self.regions)}
        pmap = {p.id: i for i, p in enumerate(self.patches)}
        for r in self.regions:
            r.id = rmap[r.id]
            r.owner = None if r.owner is None else pmap[r.owner]
            r.children = [pmap[c] for c in r.children]
        for p in self.patches:
            p.id = pmap[p.id]
            p.region = rmap[p.region]
            p.regions = [rmap[i] for i in p.regions]
        for g in self.generations:
            g["patches"] = [pmap[i] for i in g["patches"] if i in pmap]

    # -- serialization --------------------------------------------------
    def to_dict(self):
        return {
            "format": FORMAT, "version": VERSION,
            "z": list(self.z), "delta": self.delta, "T": self.T, "base": self.base.tolist(),
            "config": self.config,
            "generations": self.generations,
            "regions": [r.to_dict() for r in self.regions],
            "patches": [p.to_dict() for p in self.patches],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)

    @classmethod
    def from_dict(cls, d) -> "Subsolution":
        from .errors import FormatError

        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise FormatError(f"not a {FORMAT} v{VERSION} document")
        sub = cls(d["z"], d["delta"], d["T"], d.get("config"))
        sub.generations = d["generations"]
        sub.regions = [Region.from_dict(r) for r in d["regions"]]
        sub.patches = [PatchRecord.from_dict(p) for p in d["patches"]]
        return sub

    @classmethod
    def loads(cls, text: str) -> "Subsolution":
        return cls.from_dict(json.loads(text))


def initialize(config: ConstructionConfig) -> Subsolution:
    config.validate()
    z = np.asarray(config.z, float)
    if config.delta is None:
        try:
            delta = admissible_delta(z)
        except Exception as exc:
            raise InvalidConfig(f"no admissible radius around z={tuple(z)}: {exc}") from exc
    else:
        delta = float(config.delta)
    try:
        HullSpec(tuple(z), delta)
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
    return Subsolution(z, delta, config.T, config.as_dict())


# ---------------------------------------------------------------------------
# one perturbation


def _witness_dict(w: Witness) -> dict:
    return {"i": w.i, "C": w.C.tolist(), "X": w.X.tolist(), "B": w.B.tolist(), "mix": w.mix}


def _annulus_stats(wave: WavePatch, local_state, c1: float) -> dict:
    rule = ball_rule(wave, n_sub=2, n_w=4, n_theta=8, parts="annulus")
    f = patch_field(wave, rule.points)
    st = local_state + f
    d = np.atleast_1d(dist_to_K(st))
    rho = np.abs(st[:, 0])
    band = (rho >= BAND[0]) & (rho <= BAND[1])
    d0 = float(dist_to_K(local_state))
    inc = np.linalg.norm(f, axis=1)
    exact = float(ball_volume(wave.radius) - ball_volume(wave.radius * wave.plateau_radius))
    scale = exact / rule.weights.sum()  # pin the quadrature to the exact shell volume
    wts = rule.weights * scale
    return {
        "measure": exact,
        "dist": float((d * wts).sum()),
        "band": float(wts[band].sum()),
        "app": float(wts[inc >= c1 * d0].sum()),
        "abs_increment": float((inc * wts).sum()),
    }


def _choose_split(P, spec, cfg):
    """Case (a): the corner and largest scheduled epsilon with the best plateau decrease."""
    d0 = float(dist_to_K(P))
    best = None
    for last in (1, 2, 3, 4):
        order = [i for i in (1, 2, 3, 4) if i != last] + [last]
        for eps in cfg.eps_schedule:
            try:
                lam = staircase(P, spec, eps, cfg.shrink, cfg.depth, order)
            except (CornerEscape, BadShrink):
                continue
            sp = lam.splits[0]
            dh, dl = dist_to_K(np.array([sp.high, sp.low]))
            gain = sp.kappa * dh + (1 - sp.kappa) * dl - d0
            if best is None or gain < best[0]:
                best = (gain, lam, eps)
            break
    return best


class _Budget:
    def __init__(self, n):
        self.left = n

    def take(self):
        if self.left <= 0:
            return False
        self.left -= 1
        return True


def _commit_patch(sub, region, wave, kind, meta, k, c1, low_witness=None, high_witness=None, top=True):
    """Install ``wave`` inside ``region`` if it lowers the local dist integral; return the record or None."""
    P = region.state
    stripes = plateau_stripes(wave)
    U = wave.direction
    hi_state = P + (1.0 - wave.lam) * U
    lo_state = P - wave.lam * U
    d_hi, d_lo = (float(x) for x in dist_to_K(np.array([hi_state, lo_state])))
    ann = _annulus_stats(wave, P, c1)
    vol = float(ball_volume(wave.radius))
    new = ann["dist"] + sum(m * (d_hi if h else d_lo) for _, _, h, m in stripes)
    old = float(dist_to_K(P)) * vol
    if not new < old:
        return None
    pid = len(sub.patches)
    rec = PatchRecord(pid, k, region.id, wave, P.copy(), kind, meta, [], ann, top)
    for u_lo, u_hi, h, m in stripes:
        rid = len(sub.regions)
        st = hi_state if h else lo_state
        wit = high_witness if h else low_witness
        sub.regions.append(Region(rid, st.copy(), m, pid, u_lo, u_hi, h, k, witness=wit))
        rec.regions.append(rid)
    sub.patches.append(rec)
    region.children.append(pid)
    region.child_measure += vol
    return rec


def app_step(sub: Subsolution, region_id: int, center, radius: float, cfg: ConstructionConfig,
             k: int, N: int, rng, c1: float, budget: _Budget | None = None):
    """Perturb the constant state of ``region_id`` inside the given ball.

    Case (a), state in the ball around ``(0,0,z)``: the top staircase split
    (further splits, if ``cfg.depth > 1``, are realized by child balls in the
    low stripes).  Case (b): one segment block along a hull witness.  Returns
    the list of installed patch records (empty when rejected or already on K).
    """
    region = sub.regions[region_id]
    P = region.state
    spec = sub.spec
    if float(dist_to_K(P)) <= cfg.dist_floor:
        return []
    phase = float(rng.random())
    if np.linalg.norm(P - spec.center) <= spec.delta:
        choice = _choose_split(P, spec, cfg)
        if choice is None or not choice[0] < 0:
            return []
        _, lam, eps = choice
        return _realize_splits(sub, region, center, radius, lam.splits, cfg, k, N, phase, c1, budget, eps)
    wd = region.witness
    if wd is None:
        try:
            w = membership_in_Uz(P, spec)
        except NotMember as exc:
            raise NotInHull(f"region {region_id} state is outside the hull") from exc
        wd = _witness_dict(w)
    C, X, t = np.asarray(wd["C"]), np.asarray(wd["X"]), float(wd["mix"])
    if not 0.0 < t < 1.0:
        return []
    U = C - X
    wave = WavePatch(np.asarray(center, float), radius, U, t, N, cfg.cutoff_width, phase)
    meta = {"case": "b", "corner": int(wd["i"]), "mix": t, "recurse": bool(t >= 7.0 / 8.0)}
    rec = _commit_patch(sub, region, wave, "segment", meta, k, c1)
    return [rec] if rec is not None else []


def _realize_splits(sub, region, center, radius, splits, cfg, k, N, phase, c1, budget, eps, top=True):
    sp = splits[0]
    U = sp.high - sp.low
    wave = WavePatch(np.asarray(center, float), radius, U, sp.kappa, N, cfg.cutoff_width, phase)
    meta = {"case": "a", "corner": int(sp.corner), "epsilon": eps, "kappa": sp.kappa,
            "shrink": cfg.shrink}
    hw = _witness_dict(sp.witness) if sp.witness is not None else None
    rec = _commit_patch(sub, region, wave, "staircase", meta, k, c1, high_witness=hw, top=top)
    if rec is None:
        return []
    out = [rec]
    if len(splits) > 1:
        for rid in list(rec.regions):
            r = sub.regions[rid]
            if r.high:
                continue
            for c, rad in _stripe_children(sub, r):
                if budget is not None and not budget.take():
                    return out
                out += _realize_splits(sub, r, c, rad, splits[1:], cfg, k, N, phase, c1, budget, eps, top=False)
    return out


def _stripe_children(sub: Subsolution, region: Region, fill: float = 0.98):
    """Hex-lattice balls on the mid-plane of a plateau stripe, all inside the stripe."""
    p = sub.patches[region.owner].wave
    h = 0.5 * (region.u_hi - region.u_lo)
    um = 0.5 * (region.u_hi + region.u_lo)
    r = fill * h
    R0 = p.plateau_radius
    if R0 - r <= abs(um):
        return []
    D = math.sqrt((R0 - r) ** 2 - um * um)
    from .quadrature import _frame

    e1, e2 = _frame(p.k)
    out = []
    nj = int(D / (math.sqrt(3.0) * h)) + 1
    for j in range(-nj, nj + 1):
        yv = j * math.sqrt(3.0) * h
        off = h if j % 2 else 0.0
        ni = int(D / (2 * h)) + 1
        for i in range(-ni, ni + 1):
            xv = off + 2 * i * h
            if xv * xv + yv * yv <= D * D:
                eta = um * p.k + xv * e1 + yv * e2
                out.append((p.center + p.radius * eta, p.radius * r))
    return out


def _child_count(sub, region, fill=0.98):
    p = sub.patches[region.owner].wave
    h = 0.5 * (region.u_hi - region.u_lo)
    um = 0.5 * (region.u_hi + region.u_lo)
    r = fill * h
    if p.plateau_radius - r <= abs(um):
        return 0, 0.0
    return 1, p.radius * r


# ---------------------------------------------------------------------------
# rounds


def _fwc_bound(records, tests) -> float:
    """Rigorous bound on ``max_g |<increment, g>|`` via integration by parts.

    Every state component of ``D(Phi, Psi)`` pairs with ``g`` as at most two
    second derivatives of ``g`` against ``Psi`` plus one first derivative
    against ``Phi``; ``|Psi| <= R^2 |xi|^2 S_max / N^2`` and
    ``|Phi| <= R |d| |xi| s_max / N`` on the ball.
    """
    G = [t.bounds() for t in tests]
    G1 = max(g[1] for g in G)
    G2 = max(g[2] for g in G)
    total = 0.0
    for rec in records:
        w = rec.wave
        prof = SawtoothProfile(w.lam)
        vol = float(ball_volume(w.radius))
        n = w.xi_norm
        psi1 = w.radius**2 * n * n * prof.S_max / w.N**2 * vol
        phi1 = w.radius * abs(w.d) * n * prof.s_max / w.N * vol
        total += math.sqrt(5.0) * (2.0 * psi1 * G2 + phi1 * G1)
    return total


def _mollifier_check(sub: Subsolution, tol: float, n: int):
    """Largest Gaussian width (in cells) whose smoothing moves the field by at most ``tol`` in L1."""
    xs = (np.arange(n) + 0.5) / n
    ts = (np.arange(n) + 0.5) / n * sub.T
    g = np.stack(np.meshgrid(xs, xs, ts, indexing="ij"), axis=-1)
    U = sub.evaluate(g)
    cell = sub.T / n**3
    for sigma in (2.0, 1.0, 0.5, 0.25, 0.125):
        sm = np.stack([gaussian_filter(U[..., c], sigma, mode=("wrap", "wrap", "nearest"))
                       for c in range(5)], axis=-1)
        l1 = float(np.linalg.norm(U - sm, axis=-1).sum() * cell)
        if l1 <= tol:
            return sigma, l1
    return 0.0, 0.0


def _round_candidates(sub: Subsolution, cfg: ConstructionConfig, k: int, budget: int):
    """Deterministically ordered candidate balls: ``(priority, seq, region_id, center, radius)``."""
    cands = []
    base = sub.regions[0]
    d_base = float(dist_to_K(base.state))
    seq = 0
    if d_base > cfg.dist_floor:
        tops = [sub.patches[i] for i in base.children]
        obst = (np.array([p.wave.center for p in tops]).reshape(-1, 3),
                np.array([p.wave.radius for p in tops]))
        if k == 1 and not tops:
            cover = greedy_ball_cover(sub.domain, cfg.cover_target, max_balls=budget, allow_partial=True)
        else:
            cover = greedy_ball_cover(sub.domain, 0.999, obstacles=obst, max_levels=cfg.gap_levels,
                                      max_balls=budget, allow_partial=True)
        for c, r in zip(cover.centers, cover.radii):
            cands.append((d_base * float(ball_volume(r)), seq, 0, c, float(r)))
            seq += 1
    groups = []
    elig = [reg for reg in sub.regions
            if reg.owner is not None and reg.round < k and not reg.children and reg.free_measure > 0]
    dists = np.atleast_1d(dist_to_K(np.array([reg.state for reg in elig]).reshape(-1, 5))) if elig else []
    for reg, d in zip(elig, dists):
        d = float(d)
        if d <= cfg.dist_floor:
            continue
        ok, r = _child_count(sub, reg)
        if ok:
            groups.append((d * float(ball_volume(r)), reg.id))
    groups.sort(key=lambda g: (-g[0], g[1]))
    taken = 0
    for pr, rid in groups:
        if taken >= budget:
            break
        for c, r in _stripe_children(sub, sub.regions[rid]):
            cands.append((pr, seq, rid, c, r))
            seq += 1
            taken += 1
            if taken >= budget:
                break
    cands.sort(key=lambda c: (-round(c[0], 15), c[1]))
    return cands[:budget]


def perturbation_round(sub: Subsolution, cfg: ConstructionConfig, k: int, rng, c1: float,
                       N: int | None = None) -> dict:
    """Apply ``app_step`` on a disjoint family of balls; mutates ``sub`` and returns the round record."""
    N = cfg.frequency(k) if N is None else N
    before = sub.stats()
    budget = _Budget(cfg.patch_budget)
    cands = _round_candidates(sub, cfg, k, cfg.patch_budget)
    made, rejected = [], 0
    for _, _, rid, c, r in cands:
        if not budget.take():
            break
        recs = app_step(sub, rid, c, r, cfg, k, N, rng, c1, budget)
        if recs:
            made += recs
        else:
            rejected += 1
    gen = {"round": k, "N": N, "patches": [p.id for p in made], "rejected": rejected,
           "candidates": len(cands)}
    sub.generations.append(gen)
    return {"before": before, "records": made, "generation": gen}


def _app_fraction(sub: Subsolution, records, c1: float):
    """Fraction of the round's balls where ``|increment| >= c1 dist_K(old state)``."""
    num = den = 0.0
    for rec in records:
        if not rec.top:
            continue
        P = rec.local_state
        thr = c1 * float(dist_to_K(P))
        den += float(ball_volume(rec.wave.radius))
        num += rec.annulus["app"]
        stack = list(rec.regions)
        while stack:
            reg = sub.regions[stack.pop()]
            if reg.free_measure > 0 and np.linalg.norm(reg.state - P) >= thr:
                num += reg.free_measure
            for cid in reg.children:
                stack.extend(sub.patches[cid].regions)
    return (num / den if den > 0 else None), num, den


@dataclass
class ConvergenceLog:
    entries: list = field(default_factory=list)

    def to_dict(self):
        return {"entries": self.entries}

    def column(self, key):
        return [e[key] for e in self.entries]


def _snapshot(sub):
    return (len(sub.regions), len(sub.patches), len(sub.generations),
            [(len(r.children), r.child_measure) for r in sub.regions])


def _restore(sub, snap):
    """Undo a round: later regions and patches are dropped, earlier ones get their child lists back."""
    nr, np_, ng, kids = snap
    del sub.regions[nr:]
    del sub.patches[np_:]
    del sub.generations[ng:]
    for reg, (nc, cm) in zip(sub.regions, kids):
        del reg.children[nc:]
        reg.child_measure = cm


def direct_construction(cfg: ConstructionConfig):
    """Run ``cfg.rounds`` perturbation rounds; returns ``(subsolutions by round, log)``."""
    sub = initialize(cfg)
    consts = app_constants(sub.spec)
    c1 = consts["c1"]
    rng = np.random.default_rng(cfg.seed)
    tests = default_family(cfg.T, "interior", cfg.n_tests)
    log = ConvergenceLog()
    s0 = sub.stats()
    log.entries.append({"round": 0, **s0, "c1": c1, "M": consts["M"], "N": 0, "patches_added": 0})
    for k in range(1, cfg.rounds + 1):
        tol = 2.0 ** (-k)
        N = cfg.frequency(k)
        while True:
            snap = _snapshot(sub)
            rng_state = copy.deepcopy(rng.bit_generator.state)
            res = perturbation_round(sub, cfg, k, rng, c1, N)
            fwc = _fwc_bound(res["records"], tests)
            if fwc <= tol:
                break
            _restore(sub, snap)
            rng.bit_generator.state = rng_state
            if 2 * N > cfg.N_cap:
                raise ToleranceUnreachable(k)
            N *= 2
        after = sub.stats()
        frac, num, den = _app_fraction(sub, res["records"], c1)
        inc = sum(_increment_L1(r) for r in res["records"])
        sigma, l1 = _mollifier_check(sub, tol, cfg.mollifier_grid)
        prev = res["before"]["dist_integral"]
        log.entries.append({
            "round": k, **after, "N": N, "patches_added": len(res["records"]),
            "rejected": res["generation"]["rejected"],
            "app_fraction": frac, "app_measure": num, "perturbed_measure": den,
            "increment_L1": inc, "increment_over_dist": inc / prev if prev > 0 else None,
            "contraction": after["dist_integral"] / prev if prev > 0 else None,
            "fwc_bound": fwc, "fwc_tolerance": tol,
            "mollifier_sigma_cells": sigma, "mollifier_L1": l1, "c1": c1,
        })
    return [sub.truncated(k) for k in range(cfg.rounds + 1)], log


def _increment_L1(rec: PatchRecord) -> float:
    """``int |U_new - U_old|`` over the patch ball: exact on stripes, shell by quadrature."""
    w = rec.wave
    hi, lo = w.endpoints()
    s = sum(m * (np.linalg.norm(hi) if h else np.linalg.norm(lo)) for _, _, h, m in plateau_stripes(w))
    return float(s + rec.annulus["abs_increment"])
