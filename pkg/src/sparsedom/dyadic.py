"""Dyadic grids on discretized spaces of homogeneous type.

Cubes of generation k are built from nested greedy nets at separation δ^k.
A center that survives into the next generation is its own parent, other
centers attach to the nearest coarser center, and points join the cube of
their nearest finest-generation center and its ancestor chain. The sandwich
constants are measured on the cloud: the grid stores a length unit L so
that ℓ(Q) = L·δ^k and B(x_c, ℓ(Q)) ⊆ Q ⊆ B(x_c, 𝔠ℓ(Q)) holds exactly.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_real
from .errors import ContractViolation, ResolutionError

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-3
THEOREM_DELTA = 1.0 / 100
# default adjacent family size; 3 greedy grids leave balls straddling every boundary
ADJACENT_SEEDS = tuple(range(8))


@dataclass
class DyadicCube:
    id: tuple
    k: int
    center: int
    members: np.ndarray
    ell: float
    parent: tuple = None
    children: list = field(default_factory=list)

    @property
    def size(self):
        return int(self.members.size)


class DyadicGrid:
    """Generations k_min..k_max of cubes over a DiscreteSHT."""

    def __init__(self, S, delta, L, centers, labels, seed=0, mode="test"):
        self.S = S
        self.delta = float(delta)
        self.L = float(L)
        self.seed = seed
        self.mode = mode
        self.labels = labels            # k -> (N,) rank of the containing cube
        self.k_min = min(labels)
        self.k_max = max(labels)
        self.cubes = {}
        for k in range(self.k_min, self.k_max + 1):
            lab = labels[k]
            order = np.argsort(lab, kind="stable")
            bounds = np.searchsorted(lab[order], np.arange(len(centers[k]) + 1))
            gen = []
            for r, c in enumerate(centers[k]):
                gen.append(DyadicCube((k, r), k, int(c), order[bounds[r]:bounds[r + 1]], self.ell(k)))
            self.cubes[k] = gen
        for k in range(self.k_min + 1, self.k_max + 1):
            for Q in self.cubes[k]:
                pr = int(labels[k - 1][Q.members[0]])
                Q.parent = (k - 1, pr)
                self.cubes[k - 1][pr].children.append(Q.id)
        self.C = None
        self.eps = None
        self.inner_ratio = None

    def ell(self, k):
        return self.L * self.delta ** k

    @property
    def generations(self):
        return range(self.k_min, self.k_max + 1)

    def cube(self, cid):
        return self.cubes[cid[0]][cid[1]]

    def __iter__(self):
        for k in self.generations:
            yield from self.cubes[k]

    def __len__(self):
        return sum(len(v) for v in self.cubes.values())

    def measures(self, k):
        return np.bincount(self.labels[k], weights=self.S.weights, minlength=len(self.cubes[k]))

    def measure(self, Q):
        return float(self.S.weights[Q.members].sum())

    def parent(self, Q):
        return None if Q.parent is None else self.cube(Q.parent)

    def ancestors(self, x):
        """Cubes containing point x from the finest generation upward."""
        return [self.cubes[k][self.labels[k][x]] for k in range(self.k_max, self.k_min - 1, -1)]

    def dump(self):
        """Structured text: one line per cube."""
        lines = [f"# dyadic grid delta={self.delta!r} L={self.L!r} C={self.C!r} eps={self.eps!r} "
                 f"k_min={self.k_min} k_max={self.k_max} seed={self.seed} points={self.S.size}",
                 "# k rank center_coords... members parent_k parent_rank"]
        for Q in self:
            coords = " ".join(f"{v:.12g}" for v in self.S.points[Q.center])
            par = f"{Q.parent[0]} {Q.parent[1]}" if Q.parent is not None else "- -"
            lines.append(f"{Q.k} {Q.id[1]} {coords} {Q.size} {par}")
        return "\n".join(lines) + "\n"


def _priority(N, seed):
    if not seed:
        return np.arange(N)
    return np.random.default_rng(seed).permutation(N)


def _nearest(S, queries, targets, chunk=256):
    """Index into targets of the nearest target for each query (ties: first)."""
    out = np.empty(len(queries), dtype=np.int64)
    targets = np.asarray(targets)
    for s in range(0, len(queries), chunk):
        q = np.asarray(queries[s:s + chunk])
        d = S.metric.pair(q[:, None], targets[None, :])
        out[s:s + chunk] = np.argmin(d, axis=1)
    return out


def _generation_range(S, delta, order):
    r0 = float(np.max(S.metric.row(int(order[0]))))
    if r0 <= 0:
        raise ResolutionError("cloud has a single point")
    k_min = math.floor(math.log(r0) / math.log(delta))
    while delta ** k_min <= r0:
        k_min -= 1
    while delta ** (k_min + 1) > r0:
        k_min += 1
    lo = S.min_scale()
    k_max = k_min
    while delta ** (k_max + 1) >= lo:
        k_max += 1
    return k_min, k_max


def _greedy_nets(S, delta, k_min, k_max, order):
    N = S.size
    centers = {}
    parents = {}
    is_center = np.zeros(N, dtype=bool)
    prev = None
    for k in range(k_min, k_max + 1):
        s = delta ** k
        covered = np.zeros(N, dtype=bool)
        new = []
        if prev is not None:
            for c in prev:
                covered[S.metric.ball(int(c), s)] = True
        for p in order:
            if covered[p]:
                continue
            new.append(int(p))
            covered[S.metric.ball(int(p), s)] = True
        cur = np.sort(np.concatenate([prev if prev is not None else np.empty(0, np.int64),
                                      np.array(new, dtype=np.int64)]))
        if cur.size == 0:
            raise ResolutionError(f"empty net at generation {k}")
        par = np.full(N, -1, dtype=np.int64)
        if prev is not None:
            par[prev] = prev
            coarse = delta ** (k - 1)
            for c in new:
                idx, d = S.metric.neighborhood(c, coarse)
                sel = is_center[idx]
                idx, d = idx[sel], d[sel]
                o = np.lexsort((idx, d))
                par[c] = idx[o[0]]
        parents[k] = par
        is_center[cur] = True
        centers[k] = cur
        prev = cur
    return centers, parents


def _explicit_nets(S, centers):
    N = S.size
    ks = sorted(centers)
    if ks != list(range(ks[0], ks[-1] + 1)):
        raise ContractViolation("explicit centers must cover a contiguous generation range")
    out, parents = {}, {}
    prev = None
    for k in ks:
        cur = np.unique(np.asarray(centers[k], dtype=np.int64))
        if cur.size == 0:
            raise ResolutionError(f"empty net at generation {k}")
        par = np.full(N, -1, dtype=np.int64)
        if prev is not None:
            keep = np.isin(cur, prev)
            par[cur[keep]] = cur[keep]
            new = cur[~keep]
            if new.size:
                par[new] = prev[_nearest(S, new, prev)]
        parents[k] = par
        out[k] = cur
        prev = cur
    return out, parents


def _finest_assignment(S, finest, radius=None):
    N = S.size
    if radius is None:
        return finest[_nearest(S, np.arange(N), finest)]
    best = np.full(N, np.inf)
    owner = np.full(N, -1, dtype=np.int64)
    for c in finest:
        idx, d = S.metric.neighborhood(int(c), radius)
        upd = d < best[idx]
        best[idx[upd]] = d[upd]
        owner[idx[upd]] = c
    if np.any(owner < 0):
        missing = np.nonzero(owner < 0)[0]
        owner[missing] = finest[_nearest(S, missing, finest)]
    return owner


def _cube_radii(S, Q, in_gen_labels):
    """(inner radius, outer radius) of Q about its center, exact on the cloud."""
    c = Q.center
    d_mem = S.metric.pair(np.full(Q.size, c), Q.members)
    r_out = float(np.max(d_mem)) if Q.size else 0.0
    idx, d = S.metric.neighborhood(c, r_out)
    out = in_gen_labels[idx] != Q.id[1]
    if np.any(out):
        return float(np.min(d[out])), r_out
    if Q.size == S.size:
        return np.inf, r_out
    row = S.metric.row(c)
    mask = in_gen_labels != Q.id[1]
    return float(np.min(row[mask])), r_out


def measure_constants(G, fixed_L=None):
    """Set G.L (unless fixed), G.C, G.eps and G.inner_ratio from the cloud."""
    radii = {}
    for k in G.generations:
        lab = G.labels[k]
        for Q in G.cubes[k]:
            radii[Q.id] = _cube_radii(G.S, Q, lab)
    inner = min((ri / G.delta ** cid[0] for cid, (ri, _) in radii.items()), default=np.inf)
    if fixed_L is None:
        G.L = float(inner) if np.isfinite(inner) else 1.0
        if G.L <= 0:
            raise ResolutionError("a cube center lies outside its cube")
    for Q in G:
        Q.ell = G.ell(Q.k)
    G.inner_ratio = float(inner / G.L) if np.isfinite(inner) else np.inf
    c_min = max(ro / G.ell(cid[0]) for cid, (_, ro) in radii.items())
    G.C = float(max(c_min * (1 + 1e-12), 1 + 1e-9))
    eps = np.inf
    for k in range(G.k_min + 1, G.k_max + 1):
        mk = G.measures(k)
        mp = G.measures(k - 1)
        par = np.array([Q.parent[1] for Q in G.cubes[k]])
        eps = min(eps, float(np.min(mk / mp[par])))
    G.eps = float(eps) if np.isfinite(eps) else 1.0
    return G


def build_grid(S, delta, seed=0, centers=None, mode="test", max_attempts=8):
    """Build a dyadic grid on S with parameter δ.

    ``mode="theorem"`` enforces δ < 1/100; the default test mode accepts any
    0 < δ < 1. ``centers`` optionally maps generation k to center indices
    (for classical dyadic lattices). Grids with ε < 1e-3 are rebuilt from
    the next seed.
    """
    delta = check_real(delta, "delta", low=0.0, high=1.0, low_open=True, high_open=True)
    if mode == "theorem" and not delta < THEOREM_DELTA:
        raise ContractViolation("theorem mode requires delta < 1/100")
    if mode not in ("test", "theorem"):
        raise ContractViolation(f"unknown grid mode {mode!r}")
    for attempt in range(max_attempts):
        s = seed + attempt
        G = _build_once(S, delta, s, centers, mode)
        if G.eps >= EPS_FLOOR or centers is not None:
            return G
        log.warning("grid seed %d has eps=%.3g < %.0e; rebuilding", s, G.eps, EPS_FLOOR)
    raise ResolutionError(f"no grid with eps >= {EPS_FLOOR} after {max_attempts} seeds")


def _build_once(S, delta, seed, centers, mode):
    N = S.size
    if centers is not None:
        nets, parents = _explicit_nets(S, centers)
        k_max = max(nets)
        owner = _finest_assignment(S, nets[k_max])
    else:
        order = _priority(N, seed)
        k_min, k_max = _generation_range(S, delta, order)
        nets, parents = _greedy_nets(S, delta, k_min, k_max, order)
        owner = _finest_assignment(S, nets[k_max], radius=delta ** k_max)
    labels = {}
    chain = owner
    for k in range(k_max, min(nets) - 1, -1):
        rank = np.full(N, -1, dtype=np.int64)
        rank[nets[k]] = np.arange(nets[k].size)
        lab = rank[chain]
        if np.any(lab < 0):
            raise ContractViolation(f"broken ancestor chain at generation {k}")
        labels[k] = lab
        if k > min(nets):
            chain = parents[k][chain]
    # drop centers whose cube came out empty (explicit mode only)
    for k in list(nets):
        used = np.bincount(labels[k], minlength=nets[k].size) > 0
        if not np.all(used):
            if centers is None:
                raise ContractViolation(f"empty cube at generation {k}")
            remap = np.cumsum(used) - 1
            nets[k] = nets[k][used]
            labels[k] = remap[labels[k]]
    G = DyadicGrid(S, delta, 1.0, nets, labels, seed=seed, mode=mode)
    return measure_constants(G)


def verify_grid(G):
    """Exhaustive check of the six grid axioms; returns a dict of violation counts.

    Works only from member lists and full distance rows, independently of the
    bookkeeping used during construction.
    """
    S = G.S
    N = S.size
    report = {"partition": 0, "nesting": 0, "children": 0, "parent": 0, "mass": 0, "sandwich": 0}
    owner = {}
    for k in G.generations:
        lab = np.full(N, -1)
        cnt = np.zeros(N, dtype=np.int64)
        for Q in G.cubes[k]:
            cnt[Q.members] += 1
            lab[Q.members] = Q.id[1]
        report["partition"] += int(np.sum(cnt != 1))
        owner[k] = lab
    gens = list(G.generations)
    for i, k in enumerate(gens):
        for Q in G.cubes[k]:
            for k2 in gens[:i]:
                if np.unique(owner[k2][Q.members]).size != 1:
                    report["nesting"] += 1
            if k > G.k_min:
                hosts = np.unique(owner[k - 1][Q.members])
                if hosts.size != 1:
                    report["parent"] += 1
                else:
                    P = G.cubes[k - 1][hosts[0]]
                    if S.measure(Q.members) < G.eps * S.measure(P.members) * (1 - 1e-12):
                        report["mass"] += 1
            if k < G.k_max:
                kids = np.unique(owner[k + 1][Q.members])
                if not any(np.all(np.isin(G.cubes[k + 1][c].members, Q.members)) for c in kids):
                    report["children"] += 1
            d = S.metric.row(Q.center)
            inside = np.zeros(N, dtype=bool)
            inside[Q.members] = True
            ell = G.ell(k)
            if np.any((d < ell) & ~inside) or np.any(inside & ~(d < G.C * ell)):
                report["sandwich"] += 1
    report["ok"] = all(v == 0 for v in report.values())
    return report


def containing_cube(G, x, k):
    """The generation-k cube containing point index x."""
    if not G.k_min <= k <= G.k_max:
        raise ContractViolation(f"generation {k} outside [{G.k_min}, {G.k_max}]")
    return G.cubes[k][int(G.labels[k][int(x)])]


def dilate(G, Q, lam):
    """λQ = B(x_c(Q), λ·𝔠·ℓ(Q)) for λ ≥ 1."""
    lam = float(lam)
    if not lam >= 1:
        raise ContractViolation("cube dilation is defined only for lambda >= 1")
    return G.S.metric.ball(Q.center, lam * G.C * G.ell(Q.k))


def scale_shift(delta, w):
    """Integer N with δ^{N+1} < w ≤ δ^N."""
    w = check_real(w, "w", low=0.0, low_open=True)
    r = math.log(w) / math.log(delta)
    n = round(r)
    if abs(r - n) > 1e-9:
        n = math.floor(r)
    return int(n)


def rescaled_grid(G, w):
    """The grid of the dilated system w^d X: metric ρ/w, generation k ↦ k + N_w of G.

    Returns (view, N_w). The view keeps δ, L and ε; its outer constant is
    re-measured exhaustively under ρ/w and stays ≤ 𝔠/δ.
    """
    Nw = scale_shift(G.delta, w)
    S2 = G.S.rescaled(w)
    centers = {k - Nw: np.array([Q.center for Q in G.cubes[k]]) for k in G.generations}
    labels = {k - Nw: G.labels[k] for k in G.generations}
    view = DyadicGrid(S2, G.delta, G.L, centers, labels, seed=G.seed, mode=G.mode)
    measure_constants(view, fixed_L=G.L)
    view.eps = G.eps
    return view, Nw


@dataclass
class AdjacentFamily:
    grids: list
    c_tilde: float
    bound: float
    failures: int
    ratios: np.ndarray
    balls: list


def adjacent_grids(S, delta, seeds=ADJACENT_SEEDS, n_balls=200, ball_seed=0, c_tilde=None, kappa=None):
    """Adjacent grids from several seeds plus an empirical ball-cover check.

    For each sampled ball B(x, r) the smallest cube containing it across all
    grids is found; 𝔠̃ is the largest resulting ℓ(Q)/r. A ball fails when no
    cube with ℓ(Q) ≤ bound·r contains it (default bound 𝔠/δ).
    """
    kappa = S.kappa if kappa is None else kappa
    if 96 * kappa ** 6 * delta > 1:
        raise ContractViolation("adjacent grids require 96 kappa^6 delta <= 1")
    grids = [build_grid(S, delta, seed=s) for s in seeds]
    bound = c_tilde if c_tilde is not None else max(G.C for G in grids) / delta
    rng = np.random.default_rng(ball_seed)
    lo, hi = S.min_scale(), S.diameter()
    xs = rng.integers(0, S.size, n_balls)
    rs = np.exp(rng.uniform(np.log(lo), np.log(hi), n_balls))
    ratios = np.empty(n_balls)
    balls = []
    for b, (x, r) in enumerate(zip(xs, rs)):
        B = S.metric.ball(int(x), r)
        best, where = np.inf, None
        for gi, G in enumerate(grids):
            for k in range(G.k_max, G.k_min - 1, -1):
                lab = G.labels[k]
                if np.all(lab[B] == lab[x]):
                    if G.ell(k) < best:
                        best, where = G.ell(k), (gi, k, int(lab[x]))
                    break
        ratios[b] = best / r
        balls.append((int(x), float(r), where))
    return AdjacentFamily(grids, float(np.max(ratios)), float(bound),
                          int(np.sum(ratios > bound)), ratios, balls)
