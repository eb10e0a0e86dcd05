"""Carnot–Carathéodory distances by discrete reachability.

Paths are compositions of single-field flows e^{tX_i}. A segment of time
|t| = δ^{d_i}·c spends the fraction c of the unit budget, so at scale δ the
cost of a path is Σ_i T_i δ^{-d_i}, where T_i is the total time spent on
fields of degree i. The point y is δ-reachable from x when some path of cost
≤ 1 lands on y (up to the snapping resolution).

Two engines share this model:

* ``cc_distance`` bisects on δ with a bucketed (Dial) search over continuous
  states deduplicated on an anisotropic cell grid;
* ``lattice_cc_matrix`` builds one reachability graph on a lattice, runs
  Dijkstra for a ladder of δ values and tracks per-degree times along the
  shortest-path trees, which gives the exact threshold δ of each tree path.
"""
import logging

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .._validation import as_point, check_real
from ..errors import DisconnectedError

log = logging.getLogger(__name__)

BUDGET_UNITS = 64
MENU_DEPTH = 6


def _flow_mixed(system, field_idx, times, pts, substeps=4):
    """RK4 flow where row r follows field field_idx[r] for time times[r]."""
    y = pts.copy()
    h = (times / substeps)[:, None]
    groups = [np.nonzero(field_idx == i)[0] for i in range(system.q)]

    def vel(p):
        out = np.empty_like(p)
        for i, rows in enumerate(groups):
            if rows.size:
                out[rows] = system.fields[i](p[rows])
        return out

    for _ in range(substeps):
        k1 = vel(y)
        k2 = vel(y + 0.5 * h * k1)
        k3 = vel(y + 0.5 * h * k2)
        k4 = vel(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def _menu(system, delta):
    fidx, times, cost = [], [], []
    for i, d in enumerate(system.degrees):
        for m in range(MENU_DEPTH + 1):
            t = delta ** d * 2.0 ** (-m)
            for sgn in (1.0, -1.0):
                fidx.append(i)
                times.append(sgn * t)
                cost.append(2 ** (MENU_DEPTH - m))
    return np.array(fidx), np.array(times), np.array(cost)


def reachable(system, x, y, delta, resolution=32, max_states=400_000):
    """True when y is δ-reachable from x in the discrete model."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    vals = np.abs(np.stack([X(x) for X in system.fields]))
    ext = np.max(vals * (delta ** np.array(system.degrees, dtype=float))[:, None], axis=0)
    cell = np.maximum(np.maximum(ext, np.abs(y - x)) / resolution, 1e-14)
    if np.all(np.abs(x - y) <= cell / 2):
        return True
    fidx, times, cost = _menu(system, delta)
    lo = np.array(system.box.lower) - 1e-9
    hi = np.array(system.box.upper) + 1e-9
    best = {}
    buckets = [[] for _ in range(BUDGET_UNITS + 1)]
    key0 = tuple(np.round((x - y) / cell).astype(np.int64))
    best[key0] = 0
    buckets[0].append(x)
    seen = 1
    for b in range(BUDGET_UNITS):
        if not buckets[b]:
            continue
        states = np.array(buckets[b])
        buckets[b] = []
        ok = cost + b <= BUDGET_UNITS
        f, t, c = fidx[ok], times[ok], cost[ok]
        m = states.shape[0]
        P = np.repeat(states, f.size, axis=0)
        F = np.tile(f, m)
        T = np.tile(t, m)
        C = np.tile(c, m) + b
        Q = _flow_mixed(system, F, T, P)
        inside = np.all((Q >= lo) & (Q <= hi), axis=1)
        Q, C = Q[inside], C[inside]
        if Q.size == 0:
            continue
        rel = (Q - y) / cell
        if np.any(np.all(np.abs(rel) <= 0.5, axis=1)):
            return True
        keys = np.round(rel).astype(np.int64)
        order = np.lexsort((C,) + tuple(keys.T[::-1]))
        keys, C, Q = keys[order], C[order], Q[order]
        first = np.ones(len(keys), dtype=bool)
        first[1:] = np.any(keys[1:] != keys[:-1], axis=1)
        for kk, cc, qq in zip(map(tuple, keys[first]), C[first], Q[first]):
            old = best.get(kk)
            if old is None or cc < old:
                best[kk] = int(cc)
                buckets[int(cc)].append(qq)
                seen += 1
        if seen > max_states:
            log.warning("reachability search truncated at %d states", seen)
            return False
    return False


def cc_distance(system, x, y, tol=1e-2, resolution=32, delta_max=1e3):
    """Discrete CC distance: infimal reachable δ, symmetrized by max.

    ``tol`` is relative to the returned value (absolute below 1e-12). Target
    snapping adds a relative error of at most 1/resolution, so the result is
    accurate to about tol + 1/resolution.
    """
    x = as_point(x, system.n, "x")
    y = as_point(y, system.n, "y")
    check_real(tol, "tol", low=0.0, low_open=True)
    if np.array_equal(x, y):
        return 0.0
    return max(_one_way(system, x, y, tol, resolution, delta_max),
               _one_way(system, y, x, tol, resolution, delta_max))


def _one_way(system, x, y, tol, resolution, delta_max):
    dmax = system.max_degree
    guess = max(float(np.max(np.abs(x - y))) ** (1.0 / dmax), 1e-12)
    hi = guess
    while not reachable(system, x, y, hi, resolution):
        hi *= 2.0
        if hi > delta_max:
            raise DisconnectedError("target not reachable within the largest scale")
    lo = hi / 2.0
    while reachable(system, x, y, lo, resolution):
        hi = lo
        lo /= 2.0
        if lo < 1e-14:
            return 0.0
    while hi - lo > tol * hi:
        mid = np.sqrt(lo * hi)
        if reachable(system, x, y, mid, resolution):
            hi = mid
        else:
            lo = mid
    return float(hi)


# lattice engine


def _lattice_edges(system, axes, ks=(1, 2, 4)):
    """Directed edges (u, v, T per degree) of the lattice reachability graph."""
    shape = tuple(len(a) for a in axes)
    h = np.array([a[1] - a[0] if len(a) > 1 else 1.0 for a in axes])
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    N = pts.shape[0]
    idx = np.arange(N)
    dmax = system.max_degree
    us, vs, Ts = [], [], []
    origin = np.array([a[0] for a in axes])
    for i, X in enumerate(system.fields):
        v = X(pts)
        ratio = np.abs(v) / h
        dom = np.argmax(ratio, axis=1)
        speed = ratio[idx, dom]
        live = speed > 1e-12
        for k in ks:
            for sgn in (1.0, -1.0):
                t = np.zeros(N)
                t[live] = sgn * k / speed[live]
                q = _flow_mixed(system, np.full(N, i), t, pts, substeps=max(2, k))
                cell = np.round((q - origin) / h).astype(np.int64)
                ok = live & np.all((cell >= 0) & (cell < np.array(shape)), axis=1)
                tgt = np.ravel_multi_index(tuple(cell[ok].T), shape) if np.any(ok) else np.array([], dtype=np.int64)
                src = idx[ok]
                keep = tgt != src
                src, tgt = src[keep], tgt[keep]
                T = np.zeros((src.size, dmax))
                T[:, system.degrees[i] - 1] = np.abs(t[ok][keep])
                us.append(src)
                vs.append(tgt)
                Ts.append(T)
    u = np.concatenate(us)
    v = np.concatenate(vs)
    T = np.concatenate(Ts)
    # undirected: add reversed copies
    return np.concatenate([u, v]), np.concatenate([v, u]), np.vstack([T, T]), pts


def _threshold_delta(S, degrees_used):
    """Solve Σ_d S_d δ^{-d} = 1 for δ (vectorized over rows of S)."""
    out = np.zeros(S.shape[0])
    pos = np.any(S > 0, axis=1)
    if not np.any(pos):
        return out
    Sp = S[pos]
    if set(degrees_used) <= {1, 2}:
        s1 = Sp[:, 0]
        s2 = Sp[:, 1] if Sp.shape[1] > 1 else np.zeros_like(s1)
        out[pos] = 0.5 * (s1 + np.sqrt(s1 * s1 + 4.0 * s2))
        return out
    # Newton on u = 1/δ for the convex increasing f(u) = Σ S_d u^d − 1,
    # started to the right of the root
    with np.errstate(divide="ignore"):
        u = np.min(np.where(Sp > 0, Sp ** (-1.0 / np.arange(1, Sp.shape[1] + 1)), np.inf), axis=1)
    for _ in range(60):
        f = sum(Sp[:, d - 1] * u ** d for d in degrees_used) - 1.0
        df = sum(d * Sp[:, d - 1] * u ** (d - 1) for d in degrees_used)
        step = f / df
        u = u - step
        if np.max(np.abs(step) / u) < 1e-15:
            break
    out[pos] = 1.0 / u
    return out


def _tree_sums(pred, Te):
    """Sum edge values along predecessor trees by pointer jumping.

    pred: (s, V) predecessor indices (-9999 for roots/unreached);
    Te: (s, V, D) value of the edge (pred[v], v).
    """
    acc = Te.copy()
    anc = pred.copy()
    rows = np.arange(pred.shape[0])[:, None]
    while np.any(anc >= 0):
        has = anc >= 0
        safe = np.where(has, anc, 0)
        acc = acc + np.where(has[..., None], acc[rows, safe], 0.0)
        anc = np.where(has, anc[rows, safe], -9999)
    return acc


def lattice_cc_matrix(system, axes, ks=(1, 2, 4), ladder_ratio=1.6, chunk=64):
    """Pairwise discrete CC distances between all nodes of a tensor lattice.

    Coordinates on which no field depends are treated as translation
    symmetries: distances are computed once per orbit on an extended lattice.
    Returns an (N, N) symmetric matrix in C order of the lattice.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    shape = tuple(len(a) for a in axes)
    n = len(axes)
    spacing = np.array([a[1] - a[0] if len(a) > 1 else 1.0 for a in axes])
    uniform = [len(a) < 2 or np.allclose(np.diff(a), spacing[i]) for i, a in enumerate(axes)]
    inv = [i for i in system.invariant_axes() if uniform[i] and len(axes[i]) > 1]
    ext_axes = []
    for i, a in enumerate(axes):
        if i in inv:
            m = len(a)
            ext_axes.append(a[0] + spacing[i] * np.arange(-(m - 1), m) + 0.0)
        else:
            ext_axes.append(a)
    ext_shape = tuple(len(a) for a in ext_axes)
    u, v, T, _ = _lattice_edges(system, ext_axes, ks)
    V = int(np.prod(ext_shape))
    dmax = system.max_degree
    degrees_used = sorted(set(system.degrees))

    # cloud node -> (source node on the extended lattice, offset map)
    cloud_idx = np.stack(np.unravel_index(np.arange(int(np.prod(shape))), shape), axis=1)
    ext_of = cloud_idx.copy()
    for i in inv:
        ext_of[:, i] = cloud_idx[:, i] + (shape[i] - 1)
    src_multi = ext_of.copy()
    for i in inv:
        src_multi[:, i] = shape[i] - 1
    src_nodes, src_of = np.unique(np.ravel_multi_index(tuple(src_multi.T), ext_shape), return_inverse=True)

    diam_guess = float(np.max(T.sum(axis=1))) * 4 + 1.0
    e_small = float(np.min(spacing))
    lo_delta = 0.5 * e_small ** (1.0 / max(1, min(system.degrees)))
    deltas = []
    d = lo_delta
    span = float(np.max([a[-1] - a[0] for a in ext_axes]))
    top = 4.0 * max(span, span ** (1.0 / dmax)) + 1.0
    while d < top:
        deltas.append(d)
        d *= ladder_ratio
    deltas.append(d)
    best = np.full((src_nodes.size, V), np.inf)
    for start in range(0, src_nodes.size, chunk):
        srcs = src_nodes[start:start + chunk]
        bb = np.full((srcs.size, V), np.inf)
        for delta in deltas:
            w = (T / delta ** np.arange(1, dmax + 1)).sum(axis=1)
            order = np.lexsort((w, v, u))
            uu, vv, ww = u[order], v[order], w[order]
            first = np.ones(uu.size, dtype=bool)
            first[1:] = (uu[1:] != uu[:-1]) | (vv[1:] != vv[:-1])
            eidx = order[first]
            G = coo_matrix((ww[first], (uu[first], vv[first])), shape=(V, V)).tocsr()
            E = coo_matrix((eidx + 1.0, (uu[first], vv[first])), shape=(V, V)).tocsr()
            dist, pred = dijkstra(G, directed=True, indices=srcs, return_predecessors=True)
            has = pred >= 0
            pe = np.zeros(pred.shape, dtype=np.int64)
            if np.any(has):
                r, c = np.nonzero(has)
                pe[r, c] = np.asarray(E[pred[r, c], c]).ravel().astype(np.int64) - 1
            Te = np.where(has[..., None], T[pe], 0.0)
            S = _tree_sums(pred, Te)
            ds = _threshold_delta(S.reshape(-1, dmax), degrees_used).reshape(srcs.size, V)
            ds[~np.isfinite(dist)] = np.inf
            ds[np.arange(srcs.size), srcs] = 0.0
            bb = np.minimum(bb, ds)
        best[start:start + srcs.size] = bb

    N = cloud_idx.shape[0]
    D = np.empty((N, N))
    for p in range(N):
        tgt = cloud_idx.copy()
        for i in inv:
            tgt[:, i] = cloud_idx[:, i] - cloud_idx[p, i] + (shape[i] - 1)
        D[p] = best[src_of[p], np.ravel_multi_index(tuple(tgt.T), ext_shape)]
    D = np.minimum(D, D.T)
    np.fill_diagonal(D, 0.0)
    if not np.all(np.isfinite(D)):
        raise DisconnectedError("lattice reachability graph is disconnected")
    return D
