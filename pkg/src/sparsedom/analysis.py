"""Empirical operator norms, L^p-improving regions and modulus-of-continuity exponents.

Every estimate here is a maximum of Rayleigh-type quotients ‖Tf‖_s/‖f‖_r over
concrete inputs, so it is a lower bound for the true norm. Boundedness of a
pair (r, s) is judged by whether quotients stay stable as test families
concentrate.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import linregress

from ._validation import check_exponent, check_int
from .errors import ContractViolation, DomainExitError
from .operators import interpolate

GROWTH_TOL = 0.10
LEVEL_CELLS = (16, 8, 4, 2)
REGRESSION_WINDOW = (1e-3, 1e-1)


def lp_norm(S, f, p):
    """(Σ w|f|^p)^{1/p}; p = inf gives max |f|."""
    w = S.weights if hasattr(S, "weights") else np.asarray(S, dtype=float)
    f = np.abs(np.asarray(f))
    if np.isinf(p):
        return float(f.max()) if f.size else 0.0
    return float(np.sum(w * f ** p) ** (1.0 / p))


def quotient(S, f, Tf, r, s):
    den = lp_norm(S, f, r)
    return 0.0 if den == 0 else lp_norm(S, Tf, s) / den


@dataclass
class NormEstimate:
    r: float
    s: float
    estimate: float
    method: str
    samples: int
    seed: int
    quotients: dict = field(default_factory=dict)


def _support_points(S, support):
    if support is None:
        return np.arange(S.size)
    idx = np.nonzero(np.asarray(support))[0]
    if idx.size == 0:
        raise ContractViolation("empty support for test functions")
    return idx


def random_smooth_field(S, rng, support=None, bumps=4):
    """Sum of Gaussian bumps with random centres (in the support) and widths."""
    idx = _support_points(S, support)
    h = float(np.max(S.spacing))
    diam = float(np.max(np.ptp(S.points, axis=0)))
    f = np.zeros(S.size)
    for _ in range(bumps):
        c = S.points[rng.choice(idx)]
        sig = np.exp(rng.uniform(np.log(2 * h), np.log(diam / 4)))
        f += rng.standard_normal() * np.exp(-np.sum((S.points - c) ** 2, axis=1) / (2 * sig * sig))
    if support is not None:
        f = f * (np.asarray(support) != 0)
    return f


def spike(S, center, radius):
    """Indicator of the max-norm box of half-width ``radius`` around a point."""
    return (np.max(np.abs(S.points - np.asarray(center)), axis=1) < radius).astype(float)


def estimate_norm(apply, S, r, s, budget=64, seed=0, support=None, ascent_steps=None):
    """max of ‖Tf‖_s/‖f‖_r over random smooth fields, spikes and a coordinate ascent.

    Sample i of each family is drawn from its own child seed, so enlarging the
    budget only adds inputs. ``ascent_steps`` defaults to budget // 4.
    """
    r = check_exponent(r, "r")
    s = check_exponent(s, "s")
    budget = check_int(budget, "budget", low=1)
    ascent_steps = budget // 4 if ascent_steps is None else check_int(ascent_steps, "ascent_steps", low=0)
    idx = _support_points(S, support)
    h = float(np.max(S.spacing))
    diam = float(np.max(np.ptp(S.points, axis=0)))
    n_rand = (budget + 1) // 2
    n_spike = budget - n_rand
    best, best_f, method = 0.0, None, "random-function"
    qs = {"random-function": [], "spike-family": [], "power-iteration": []}
    for i in range(n_rand):
        rng = np.random.default_rng([seed, 0, i])
        f = random_smooth_field(S, rng, support)
        q = quotient(S, f, apply(f), r, s)
        qs["random-function"].append(q)
        if q > best:
            best, best_f, method = q, f, "random-function"
    for i in range(n_spike):
        rng = np.random.default_rng([seed, 1, i])
        c = S.points[rng.choice(idx)]
        rad = np.exp(rng.uniform(np.log(h), np.log(diam / 8)))
        f = spike(S, c, rad)
        if support is not None:
            f = f * (np.asarray(support) != 0)
        q = quotient(S, f, apply(f), r, s)
        qs["spike-family"].append(q)
        if q > best:
            best, best_f, method = q, f, "spike-family"
    # gradient-free ascent from the best sample
    if best_f is not None and ascent_steps:
        rng = np.random.default_rng([seed, 2])
        f = best_f.copy()
        for _ in range(ascent_steps):
            bump = random_smooth_field(S, rng, support, bumps=1)
            scale = np.max(np.abs(f)) / max(np.max(np.abs(bump)), 1e-300)
            trial = f + 0.5 * rng.standard_normal() * scale * bump
            q = quotient(S, trial, apply(trial), r, s)
            qs["power-iteration"].append(q)
            if q > best:
                best, f, method = q, trial, "power-iteration"
    return NormEstimate(r, s, float(best), method, n_rand + n_spike + ascent_steps, seed, qs)


# L^p improving


def refinement_families(op, x0=None, levels=LEVEL_CELLS):
    """Concentrating test families at the given cell multiples.

    ``spike``: boxes of half-width ε around x0. ``tube``: the ε-neighbourhood
    of the arc {γ_t(x0) : |t| ≤ a}, the Knapp-type example.
    """
    S = op.S
    x0 = np.mean(np.stack(op.inner), axis=0) if x0 is None else np.asarray(x0, dtype=float)
    h = float(np.max(S.spacing))
    ts = np.linspace(-op.a, op.a, 4001)[:, None]
    if op.curve.k > 1:
        ts = np.pad(ts, ((0, 0), (0, op.curve.k - 1)))
    arc = op.curve(ts, np.broadcast_to(x0, (ts.shape[0], S.n)))
    d_arc, _ = cKDTree(arc).query(S.points)
    fams = {"spike": [], "tube": []}
    for c in levels:
        eps = c * h
        fams["spike"].append(spike(S, x0, eps))
        fams["tube"].append((d_arc < eps).astype(float))
    return fams


def family_growth(apply, S, families, r, s, outputs=None):
    """Per family: max_k Q_k / Q_0 over the levels, and the finest quotient."""
    out = {}
    for name, fs in families.items():
        Tfs = outputs[name] if outputs is not None else [apply(f) for f in fs]
        q = np.array([quotient(S, f, Tf, r, s) for f, Tf in zip(fs, Tfs)])
        out[name] = (float(np.max(q[1:]) / q[0]) if q[0] > 0 else np.inf, float(q[-1]))
    return out


@dataclass
class ImprovingRegion:
    points: list                 # (1/r, 1/s, bounded, growth, estimate)
    convex: bool
    frontier: dict               # 1/r -> smallest accepted 1/s
    tol: float = GROWTH_TOL

    def csv(self):
        lines = ["r,s,estimate,verdict,growth"]
        for ir, is_, ok, g, est in self.points:
            r = 1 / ir if ir > 0 else np.inf
            s = 1 / is_ if is_ > 0 else np.inf
            lines.append(f"{r:.6g},{s:.6g},{est:.6g},{'bounded' if ok else 'unbounded'},{g:.6g}")
        return "\n".join(lines) + "\n"


def _apply_families(apply, families):
    return {k: [apply(f) for f in fs] for k, fs in families.items()}


def verdict(apply, S, families, r, s, tol=GROWTH_TOL, outputs=None):
    """(bounded, worst growth, finest quotient) for one exponent pair."""
    g = family_growth(apply, S, families, r, s, outputs)
    worst = max(v[0] for v in g.values())
    est = max(v[1] for v in g.values())
    return bool(worst < 1 + tol), worst, est


def _convex(points, step):
    acc = [(p[0], p[1]) for p in points if p[2]]
    grid = {(round(p[0] / step[0]), round(p[1] / step[1])): p[2] for p in points}
    for i, (x1, y1) in enumerate(acc):
        for x2, y2 in acc[i + 1:]:
            for t in np.linspace(0, 1, 11):
                gx = round((x1 + t * (x2 - x1)) / step[0])
                gy = round((y1 + t * (y2 - y1)) / step[1])
                near = [grid.get((gx + dx, gy + dy), None) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
                if grid.get((gx, gy)) is False and not any(v for v in near if v):
                    return False
    return True


def map_improving_region(op_apply, S, families, inv_r, inv_s, tol=GROWTH_TOL):
    """Verdicts on the grid inv_r × inv_s of (1/r, 1/s) values with 1/s ≤ 1/r."""
    outputs = _apply_families(op_apply, families)
    points = []
    frontier = {}
    for ir in inv_r:
        for is_ in inv_s:
            if is_ > ir + 1e-12:
                continue
            r = 1 / ir if ir > 0 else np.inf
            s = 1 / is_ if is_ > 0 else np.inf
            ok, g, est = verdict(op_apply, S, families, r, s, tol, outputs)
            points.append((float(ir), float(is_), ok, g, est))
            if ok:
                frontier[float(ir)] = min(frontier.get(float(ir), np.inf), float(is_))
    step = (float(np.min(np.diff(np.unique(inv_r)))) if len(inv_r) > 1 else 1.0,
            float(np.min(np.diff(np.unique(inv_s)))) if len(inv_s) > 1 else 1.0)
    return ImprovingRegion(points, _convex(points, step), frontier, tol)


def improving_frontier(op_apply, S, families, r, tol=GROWTH_TOL, iters=14):
    """Smallest accepted 1/s at fixed r, by bisection on [0, 1/r].

    Returns nan when the diagonal s = r itself is rejected.
    """
    r = check_exponent(r, "r")
    outputs = _apply_families(op_apply, families)
    hi = 1.0 / r
    if not verdict(op_apply, S, families, r, r, tol, outputs)[0]:
        return float("nan")
    lo = 0.0
    if verdict(op_apply, S, families, r, np.inf, tol, outputs)[0]:
        return 0.0
    for _ in range(iters):
        mid = (lo + hi) / 2
        if verdict(op_apply, S, families, r, 1 / mid, tol, outputs)[0]:
            hi = mid
        else:
            lo = mid
    return float(hi)


# modulus of continuity


def taylor_flow(curve, order=3, step=0.05):
    """θ_b(x) = exp(Σ_α b^{|α|} X_α)(x) for the Taylor fields of the curve (unit time)."""
    from .geometry import expand_taylor_fields
    from .geometry.fields import combination_field, flow
    fields = expand_taylor_fields(curve, order)

    def theta(b, pts):
        b = float(b)
        pts = np.asarray(pts, dtype=float)
        if b == 0.0:
            return pts.copy()
        X = combination_field([X for _, X in fields], [b ** sum(al) for al, _ in fields])
        return flow(X, 1.0, pts, step=step, box=curve.box)

    return theta


def translation_flow(direction):
    """θ_b(x) = x + b·direction."""
    direction = np.asarray(direction, dtype=float)

    def theta(b, pts):
        return np.asarray(pts, dtype=float) + float(b) * direction

    return theta


@dataclass
class ModulusFit:
    eta: float
    r2: float
    rows: list                   # (|b|, sup difference ratio)
    window: tuple
    noise_floor: float

    def csv(self):
        return "b,difference\n" + "".join(f"{b:.6g},{d:.6g}\n" for b, d in self.rows)


def modulus_exponent(op_apply, S, theta, b_values, f_samples, region=None, window=REGRESSION_WINDOW):
    """Fit η̂ in sup_f ‖Tf − (Tf)∘θ_b‖₂/‖f‖₂ ≈ C|b|^η.

    ``region`` (mask) limits where (Tf)∘θ_b is evaluated; outside it Tf must
    vanish, which holds for the inner-region cutoffs of a RadonOperator.
    Differences below ten times the |b| = 1e-12 response are excluded from the
    fit as interpolation noise.
    """
    idx = np.arange(S.size) if region is None else np.nonzero(np.asarray(region))[0]
    pts = S.points[idx]
    outs = [(f, op_apply(f)) for f in f_samples]

    def diff(b):
        try:
            y = theta(b, pts)
        except DomainExitError:
            raise
        worst = 0.0
        for f, Tf in outs:
            moved = np.zeros(S.size)
            moved[idx] = interpolate(S, Tf, y)
            den = lp_norm(S, f, 2)
            if den > 0:
                worst = max(worst, lp_norm(S, Tf - moved, 2) / den)
        return worst

    noise = diff(1e-12)
    rows = [(float(abs(b)), diff(b)) for b in b_values]
    use = [(b, d) for b, d in rows if window[0] <= b <= window[1] and d > 10 * noise and d > 0]
    if len(use) < 2:
        return ModulusFit(float("nan"), float("nan"), rows, window, noise)
    fit = linregress(np.log([u[0] for u in use]), np.log([u[1] for u in use]))
    return ModulusFit(float(fit.slope), float(fit.rvalue ** 2), rows, window, noise)


def analytic_fields(S, count, seed=0, lower=None, upper=None, bumps=4, widths=(0.05, 0.3)):
    """Resolution-independent random fields: Gaussian bump sums with parameters
    drawn in continuous coordinates, times the indicator of [lower, upper].

    The same (count, seed, box) gives the same functions on every lattice.
    """
    box = S.box if S.axes is not None else (np.min(S.points, axis=0), np.max(S.points, axis=0))
    lo = np.asarray(box[0] if lower is None else lower, dtype=float)
    hi = np.asarray(box[1] if upper is None else upper, dtype=float)
    inside = np.all((S.points >= lo) & (S.points <= hi), axis=1)
    out = []
    for i in range(count):
        rng = np.random.default_rng([seed, 3, i])
        f = np.zeros(S.size)
        for _ in range(bumps):
            c = lo + (hi - lo) * rng.random(S.n)
            sig = np.exp(rng.uniform(np.log(widths[0]), np.log(widths[1])))
            f += rng.standard_normal() * np.exp(-np.sum((S.points - c) ** 2, axis=1) / (2 * sig * sig))
        out.append(f * inside)
    return out
