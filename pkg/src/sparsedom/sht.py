"""Discretized spaces of homogeneous type on lattice point clouds."""
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from ._validation import check_int, check_real
from .errors import ContractViolation, ResolutionError


# metrics


class Metric:
    """Distance handle on a fixed point array. Subclasses provide ``row``."""

    kappa = 1.0
    name = "metric"

    def bind(self, points, axes=None):
        self.points = points
        self.axes = axes
        return self

    def row(self, i):
        raise NotImplementedError

    def pair(self, i, j):
        i = np.asarray(i)
        j = np.asarray(j)
        return self._pair(self.points[i], self.points[j])

    def _pair(self, a, b):
        raise NotImplementedError

    def candidates(self, i, r):
        return np.arange(self.points.shape[0])

    def ball(self, i, r):
        cand = self.candidates(i, r)
        d = self._pair(self.points[i][None, :], self.points[cand])
        return cand[d < r]

    def closed_ball(self, i, r):
        cand = self.candidates(i, r * (1 + 1e-12))
        d = self._pair(self.points[i][None, :], self.points[cand])
        return cand[d <= r]

    def neighborhood(self, i, r):
        """(indices, distances) of points with ρ(x_i, ·) ≤ r."""
        cand = self.candidates(i, r * (1 + 1e-12))
        d = self._pair(self.points[i][None, :], self.points[cand])
        keep = d <= r
        return cand[keep], d[keep]

    def dist_to_set(self, mask, query=None, chunk=512):
        """min_{y in mask} ρ(x, y) for x in query (default: all points)."""
        mask = np.asarray(mask, dtype=bool)
        query = np.arange(self.points.shape[0]) if query is None else np.asarray(query)
        out = np.full(query.size, np.inf)
        ys = self.points[mask]
        if ys.size == 0:
            return out
        for s in range(0, query.size, chunk):
            q = self.points[query[s:s + chunk]]
            best = np.full(q.shape[0], np.inf)
            for t in range(0, ys.shape[0], 4096):
                d = self._pair(q[:, None, :], ys[None, t:t + 4096, :])
                best = np.minimum(best, d.min(axis=1))
            out[s:s + chunk] = best
        return out

    def diameter(self, idx, chunk=2048):
        idx = np.asarray(idx)
        if idx.size < 2:
            return 0.0
        pts = self.points[idx]
        best = 0.0
        for s in range(0, pts.shape[0], chunk):
            d = self._pair(pts[s:s + chunk, None, :], pts[None, :, :])
            best = max(best, float(d.max()))
        return best


class EuclideanMetric(Metric):
    name = "euclidean"

    def _pair(self, a, b):
        return np.sqrt(np.sum((a - b) ** 2, axis=-1))

    def row(self, i):
        return self._pair(self.points[i][None, :], self.points)

    def candidates(self, i, r):
        return _box_candidates(self, i, np.full(self.points.shape[1], r))

    def dist_to_set(self, mask, query=None, chunk=512):
        if self.axes is None:
            return super().dist_to_set(mask, query, chunk)
        shape = tuple(len(a) for a in self.axes)
        h = [a[1] - a[0] if len(a) > 1 else 1.0 for a in self.axes]
        m = np.asarray(mask, dtype=bool).reshape(shape)
        if not m.any():
            d = np.full(m.size, np.inf)
        else:
            d = ndimage.distance_transform_edt(~m, sampling=h).ravel()
        return d if query is None else d[np.asarray(query)]

    def diameter(self, idx, chunk=2048):
        idx = np.asarray(idx)
        pts = self.points[idx]
        if pts.shape[0] > 64 and pts.shape[1] > 1:
            try:
                hull = ConvexHull(pts)
                pts = pts[hull.vertices]
            except QhullError:
                pass
        elif pts.shape[1] == 1 and pts.shape[0] > 1:
            return float(pts.max() - pts.min())
        if pts.shape[0] < 2:
            return 0.0
        d = self._pair(pts[:, None, :], pts[None, :, :])
        return float(d.max())


class AnisotropicMetric(Metric):
    """ρ(x, y) = max_a |x_a − y_a|^{1/α_a} with α_a ≥ 1 (a genuine metric).

    α = (1, 2) is the parabola metric; α = (1, …, 1) is the max norm.
    """

    def __init__(self, powers):
        self.powers = np.asarray(powers, dtype=float)
        if np.any(self.powers < 1):
            raise ContractViolation("anisotropic powers must be >= 1")
        self.name = "anisotropic" + str(tuple(float(p) for p in self.powers))

    def _pair(self, a, b):
        return np.max(np.abs(a - b) ** (1.0 / self.powers), axis=-1)

    def row(self, i):
        return self._pair(self.points[i][None, :], self.points)

    def candidates(self, i, r):
        return _box_candidates(self, i, r ** self.powers)

    def diameter(self, idx, chunk=2048):
        idx = np.asarray(idx)
        if idx.size < 2:
            return 0.0
        pts = self.points[idx]
        ext = pts.max(axis=0) - pts.min(axis=0)
        return float(np.max(ext ** (1.0 / self.powers)))

    def dist_to_set(self, mask, query=None, chunk=512):
        if self.axes is None:
            return super().dist_to_set(mask, query, chunk)
        return _anisotropic_dist_to_set(self, np.asarray(mask, dtype=bool), query)


class HeisenbergMetric(Metric):
    """Korányi gauge |q^{-1} p| for (x, y, t) with t-law t + t' + 2(x y' − y x')."""

    name = "heisenberg"

    def _pair(self, a, b):
        dx = a[..., 0] - b[..., 0]
        dy = a[..., 1] - b[..., 1]
        dt = a[..., 2] - b[..., 2] - 2 * (b[..., 0] * a[..., 1] - b[..., 1] * a[..., 0])
        return ((dx * dx + dy * dy) ** 2 + dt * dt) ** 0.25

    def row(self, i):
        return self._pair(self.points[i][None, :], self.points)


class MatrixMetric(Metric):
    """Precomputed symmetric distance matrix (desk scale only)."""

    def __init__(self, D, name="matrix", kappa=1.0):
        self.D = np.asarray(D, dtype=float)
        self.name = name
        self.kappa = kappa

    def pair(self, i, j):
        return self.D[np.asarray(i), np.asarray(j)]

    def _pair(self, a, b):
        raise NotImplementedError("matrix metrics are index based")

    def row(self, i):
        return self.D[i]

    def ball(self, i, r):
        return np.nonzero(self.D[i] < r)[0]

    def closed_ball(self, i, r):
        return np.nonzero(self.D[i] <= r)[0]

    def neighborhood(self, i, r):
        idx = np.nonzero(self.D[i] <= r)[0]
        return idx, self.D[i, idx]

    def dist_to_set(self, mask, query=None, chunk=512):
        mask = np.asarray(mask, dtype=bool)
        query = np.arange(self.D.shape[0]) if query is None else np.asarray(query)
        if not mask.any():
            return np.full(query.size, np.inf)
        return self.D[np.ix_(query, np.nonzero(mask)[0])].min(axis=1)

    def diameter(self, idx, chunk=2048):
        idx = np.asarray(idx)
        if idx.size < 2:
            return 0.0
        return float(self.D[np.ix_(idx, idx)].max())


def _box_candidates(metric, i, half_widths):
    if metric.axes is None:
        return np.arange(metric.points.shape[0])
    shape = tuple(len(a) for a in metric.axes)
    p = metric.points[i]
    slices = []
    for a, ax in enumerate(metric.axes):
        lo = np.searchsorted(ax, p[a] - half_widths[a] * (1 + 1e-12), side="left")
        hi = np.searchsorted(ax, p[a] + half_widths[a] * (1 + 1e-12), side="right")
        slices.append(np.arange(lo, hi))
    mesh = np.meshgrid(*slices, indexing="ij")
    return np.ravel_multi_index(tuple(m.ravel() for m in mesh), shape)


def _anisotropic_dist_to_set(metric, mask, query):
    """Exact distance to a set for max-type metrics via box counts.

    The distance is one of the finitely many values (k h_a)^{1/α_a}; a
    vectorized binary search over that sorted list uses an n-d summed area
    table to test whether the closed box of a given radius meets the set.
    """
    axes = metric.axes
    shape = tuple(len(a) for a in axes)
    n = len(shape)
    h = np.array([a[1] - a[0] if len(a) > 1 else 1.0 for a in axes])
    N = int(np.prod(shape))
    query = np.arange(N) if query is None else np.asarray(query)
    if not mask.any():
        return np.full(query.size, np.inf)
    m = mask.reshape(shape).astype(np.int64)
    sat = m
    for a in range(n):
        sat = np.cumsum(sat, axis=a)
    sat = np.pad(sat, [(1, 0)] * n)
    cand = np.unique(np.concatenate(
        [(np.arange(len(axes[a])) * h[a]) ** (1.0 / metric.powers[a]) for a in range(n)]))
    idx = np.stack(np.unravel_index(query, shape), axis=1)

    def count(radius_vals):
        half = np.floor(radius_vals[:, None] ** metric.powers[None, :] / h[None, :] + 1e-9).astype(np.int64)
        lo = np.clip(idx - half, 0, np.array(shape))
        hi = np.clip(idx + half + 1, 0, np.array(shape))
        total = np.zeros(idx.shape[0], dtype=np.int64)
        for corner in range(2 ** n):
            sel = [(corner >> a) & 1 for a in range(n)]
            coords = tuple(np.where(sel[a], hi[:, a], lo[:, a]) for a in range(n))
            sign = (-1) ** (n - sum(sel))
            total += sign * sat[coords]
        return total

    lo_i = np.zeros(query.size, dtype=np.int64)
    hi_i = np.full(query.size, cand.size - 1, dtype=np.int64)
    # points inside the set have distance 0 = cand[0]
    while np.any(lo_i < hi_i):
        mid = (lo_i + hi_i) // 2
        hit = count(cand[mid]) > 0
        hi_i = np.where(hit, mid, hi_i)
        lo_i = np.where(hit, lo_i, np.minimum(mid + 1, hi_i))
    out = cand[lo_i]
    # guard: a box can be empty at the largest candidate only if the set is empty
    return out


METRICS = {
    "euclidean": lambda **kw: EuclideanMetric(),
    "parabola": lambda **kw: AnisotropicMetric([1, 2]),
    "max": lambda n=2, **kw: AnisotropicMetric([1] * n),
    "anisotropic": lambda powers=(1, 2), **kw: AnisotropicMetric(powers),
    "heisenberg": lambda **kw: HeisenbergMetric(),
}


# clouds


@dataclass
class DiscreteSHT:
    """Point cloud on a uniform lattice with cell-volume weights and a metric."""

    points: np.ndarray
    weights: np.ndarray
    metric: Metric
    kappa: float = 1.0
    axes: list = None
    box: tuple = None
    name: str = "cloud"
    system: object = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.points.shape[0],):
            raise ContractViolation("one weight per point")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise ContractViolation("weights must be positive and finite")
        self.metric.bind(self.points, self.axes)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def n(self):
        return self.points.shape[1]

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes) if self.axes is not None else (self.size,)

    @property
    def spacing(self):
        return np.array([a[1] - a[0] if len(a) > 1 else 1.0 for a in self.axes])

    def measure(self, idx=None):
        if idx is None:
            return float(self.weights.sum())
        idx = np.asarray(idx)
        if idx.dtype == bool:
            return float(self.weights[idx].sum())
        return float(self.weights[idx].sum())

    def integral(self, f):
        return float(np.sum(self.weights * f))

    def distances_from(self, i):
        return self.metric.row(i)

    def axis_scale(self, steps=1):
        """Largest metric distance spanned by ``steps`` lattice steps along one axis."""
        if self.axes is None:
            return 0.0
        shape = self.shape
        center = tuple(s // 2 for s in shape)
        c = np.ravel_multi_index(center, shape)
        out = 0.0
        for a in range(self.n):
            if shape[a] < 2:
                continue
            nb = list(center)
            nb[a] = min(center[a] + steps, shape[a] - 1)
            if nb[a] == center[a]:
                nb[a] = max(center[a] - steps, 0)
            out = max(out, float(self.metric.pair(c, np.ravel_multi_index(tuple(nb), shape))))
        return out

    def neighbor_scale(self):
        return self.axis_scale(1)

    def min_scale(self):
        """Smallest resolvable radius: 4 lattice spacings along every axis.

        Clouds without lattice axes use the smallest positive distance seen
        from the first 64 points.
        """
        if self.axes is None:
            best = np.inf
            for i in range(min(self.size, 64)):
                d = self.metric.row(i)
                d = d[d > 0]
                if d.size:
                    best = min(best, float(d.min()))
            return best if np.isfinite(best) else 0.0
        return self.axis_scale(4)

    def diameter(self):
        return self.metric.diameter(np.arange(self.size))

    def rescaled(self, factor):
        """Same cloud with metric ρ/factor."""
        return DiscreteSHT(self.points, self.weights, ScaledMetric(self.metric, factor), self.kappa,
                           self.axes, self.box, f"{self.name}/w", self.system, dict(self.info))


class ScaledMetric(Metric):
    def __init__(self, base, factor):
        self.base = base
        self.factor = float(factor)
        self.kappa = base.kappa
        self.name = f"{base.name}/{factor:g}"

    def bind(self, points, axes=None):
        self.points = points
        self.axes = axes
        return self

    def pair(self, i, j):
        return self.base.pair(i, j) / self.factor

    def _pair(self, a, b):
        return self.base._pair(a, b) / self.factor

    def row(self, i):
        return self.base.row(i) / self.factor

    def ball(self, i, r):
        return self.base.ball(i, r * self.factor)

    def closed_ball(self, i, r):
        return self.base.closed_ball(i, r * self.factor)

    def neighborhood(self, i, r):
        idx, d = self.base.neighborhood(i, r * self.factor)
        return idx, d / self.factor

    def dist_to_set(self, mask, query=None, chunk=512):
        return self.base.dist_to_set(mask, query, chunk) / self.factor

    def diameter(self, idx, chunk=2048):
        return self.base.diameter(idx, chunk) / self.factor


def lattice_axes(box_lower, box_upper, resolution):
    """Cell-centred axes: resolution[a] points per axis."""
    axes = []
    for lo, hi, m in zip(box_lower, box_upper, resolution):
        m = check_int(int(m), "resolution", low=1)
        h = (hi - lo) / m
        axes.append(lo + h * (np.arange(m) + 0.5))
    return axes


def lattice_cloud(box_lower, box_upper, resolution, metric="euclidean", name=None, **metric_kw):
    """Build a DiscreteSHT on a cell-centred lattice.

    ``metric`` is a closed-form name (euclidean, parabola, max, anisotropic,
    heisenberg), a Metric instance, or ``cc:<system>`` for a precomputed
    discrete CC distance matrix of a named graded system.
    """
    box_lower = [float(v) for v in box_lower]
    box_upper = [float(v) for v in box_upper]
    axes = lattice_axes(box_lower, box_upper, resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    cell = np.prod([(hi - lo) / m for lo, hi, m in zip(box_lower, box_upper, resolution)])
    weights = np.full(pts.shape[0], cell)
    system = None
    if isinstance(metric, Metric):
        met = metric
    elif isinstance(metric, str) and metric.startswith("cc:"):
        from .geometry import lattice_cc_matrix, model_system
        from .geometry.fields import Box
        if pts.shape[0] > 2 ** 13:
            raise ResolutionError("pairwise CC matrices are limited to 2^13 points")
        system = model_system(metric[3:], **metric_kw)
        system.box = Box(box_lower, box_upper)
        met = MatrixMetric(lattice_cc_matrix(system, axes), name=metric)
    elif metric in METRICS:
        met = METRICS[metric](n=len(axes), **metric_kw)
    else:
        raise ContractViolation(f"unknown metric {metric!r}")
    return DiscreteSHT(pts, weights, met, met.kappa, axes, (tuple(box_lower), tuple(box_upper)),
                       name or getattr(met, "name", "cloud"), system)


def ball(S, x, r):
    """Indices y with ρ(x, y) < r."""
    check_real(r, "r", low=0.0, low_open=True)
    return S.metric.ball(int(x), r)


def _sample_scales(S, rng, samples, lo, hi):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), samples))


def doubling_estimate(S, samples=200, seed=0, return_witness=False):
    """max over sampled (x, r) of μ(B(x, 2r))/μ(B(x, r)) at resolvable scales."""
    samples = check_int(samples, "samples", low=1)
    rng = np.random.default_rng(seed)
    lo = S.min_scale()
    hi = S.diameter() / 2.0
    if not lo < hi:
        raise ResolutionError("no resolvable scales: cloud too coarse")
    xs = rng.integers(0, S.size, samples)
    rs = _sample_scales(S, rng, samples, lo, hi)
    best, witness = 0.0, None
    for x, r in zip(xs, rs):
        inner = S.measure(S.metric.ball(int(x), r))
        if inner <= 0:
            raise ResolutionError(f"empty ball at resolvable scale r={r}")
        ratio = S.measure(S.metric.ball(int(x), 2 * r)) / inner
        if ratio > best:
            best, witness = ratio, (int(x), float(r))
    return (best, witness) if return_witness else best


def uniform_perfectness_check(S, A=3.0, samples=200, seed=0):
    """Check that each sampled annulus {r/A ≤ ρ(x,·) ≤ r} is nonempty.

    Returns (ok, worst) where worst = (x, r, annulus count) of the sparsest annulus.
    """
    A = check_real(A, "A", low=1.0)
    rng = np.random.default_rng(seed)
    lo = S.min_scale()
    hi = S.diameter()
    if not lo < hi:
        return True, None
    xs = rng.integers(0, S.size, samples)
    rs = _sample_scales(S, rng, samples, lo, hi * (1 - 1e-9))
    worst = None
    for x, r in zip(xs, rs):
        d = S.metric.row(int(x))
        cnt = int(np.sum((d >= r / A) & (d <= r)))
        if worst is None or cnt < worst[2]:
            worst = (int(x), float(r), cnt)
    return worst[2] > 0, worst


def perfectness_constant(S, samples=200, seed=0):
    """Smallest A making every sampled annulus {r/A ≤ ρ(x,·) ≤ r} nonempty.

    For each sample this is r / max{ρ(x, y) : 0 < ρ(x, y) ≤ r}; the result is
    the maximum over samples (CC metrics use the fixed value 3 instead).
    """
    rng = np.random.default_rng(seed)
    lo = S.min_scale()
    hi = S.diameter()
    if not lo < hi:
        return 1.0
    xs = rng.integers(0, S.size, samples)
    rs = _sample_scales(S, rng, samples, lo, hi * (1 - 1e-9))
    best = 1.0
    for x, r in zip(xs, rs):
        d = S.metric.row(int(x))
        inner = d[(d > 0) & (d <= r)]
        best = max(best, float(r / inner.max()) if inner.size else np.inf)
    return best


def quasi_triangle_constant(S, samples=20000, seed=0):
    """Empirical sup ρ(x,y)/(ρ(x,z)+ρ(z,y)) over sampled distinct triples."""
    rng = np.random.default_rng(seed)
    i, j, k = rng.integers(0, S.size, (3, samples))
    ok = (i != j)
    i, j, k = i[ok], j[ok], k[ok]
    num = S.metric.pair(i, j)
    den = S.metric.pair(i, k) + S.metric.pair(k, j)
    return float(np.max(num / den))


def check_ball_nesting(S, samples=2000, seed=0, factor=3.0):
    """Count violations of: B(x1,d1)∩B(x2,d2)≠∅, d1≤d2 ⇒ B(x1,d1) ⊂ B(x2, factor·d2)."""
    rng = np.random.default_rng(seed)
    lo = S.min_scale()
    hi = S.diameter()
    bad = 0
    for _ in range(samples):
        x1, x2 = rng.integers(0, S.size, 2)
        d1, d2 = np.sort(_sample_scales(S, rng, 2, lo, hi))
        r1, r2 = S.metric.row(int(x1)), S.metric.row(int(x2))
        if not np.any((r1 < d1) & (r2 < d2)):
            continue
        if np.any((r1 < d1) & ~(r2 < factor * d2)):
            bad += 1
    return bad



COMPARISON_MARGIN = 0.25


def _comparison_ratios(S, rng, samples, max_degree):
    i, j = rng.integers(0, S.size, (2, samples))
    keep = i != j
    i, j = i[keep], j[keep]
    rho = S.metric.pair(i, j)
    e = np.linalg.norm(S.points[i] - S.points[j], axis=1)
    return rho / e, rho / e ** (1.0 / max_degree)


def metric_comparison(S, max_degree=None, samples=20000, seed=0, margin=COMPARISON_MARGIN):
    """Fit C₁, C₂ with C₁|x − y| ≤ ρ(x, y) ≤ C₂|x − y|^{1/d̃} over sampled pairs.

    d̃ defaults to the largest degree of the cloud's field system (1 without
    one). The constants are the extreme ratios over the sampled pairs, so the
    bounds hold on every sampled pair; a fresh pair set (seed + 1) is checked
    against C₁/(1 + margin) and (1 + margin)C₂ to show the fit generalises.
    """
    if max_degree is None:
        max_degree = S.system.max_degree if S.system is not None else 1
    lower, upper = _comparison_ratios(S, np.random.default_rng(seed), samples, max_degree)
    C1, C2 = float(np.min(lower)), float(np.max(upper))
    lo2, up2 = _comparison_ratios(S, np.random.default_rng(seed + 1), samples, max_degree)
    fresh = int(np.sum(lo2 < C1 / (1 + margin)) + np.sum(up2 > C2 * (1 + margin)))
    return {"C1": C1, "C2": C2, "exponent": 1.0 / max_degree, "pairs": int(lower.size),
            "fresh_violations": fresh, "ok": bool(C1 > 0 and np.isfinite(C2) and fresh == 0)}
