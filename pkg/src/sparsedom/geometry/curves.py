"""Curve families γ_t(x), their Taylor vector fields and the (C_J) check."""
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, combinations_with_replacement
from math import factorial

import numpy as np

from .._validation import as_points, check_int
from ..errors import InvertibilityError, ResolutionError
from .fields import Box, VectorField, richardson_jacobian
from .polynomial import Polynomial

MAX_TAYLOR_ORDER = 9


@dataclass
class CurveFamily:
    """Smooth family of maps x -> γ(t, x) with γ(0, x) = x.

    ``gamma(t, x)`` is vectorized over rows: t has shape (m, k), x has shape
    (m, n). ``inverse`` is optional; without it γ_t^{-1} is computed by Newton
    iteration when ``invertible`` is set.
    """

    n: int
    k: int
    gamma: object
    a: float = 0.5
    box: Box = None
    invertible: bool = True
    inverse: object = None
    name: str = "curve"
    base_point: tuple = None
    shift: object = None    # set for translations γ_t(x) = x − shift(t)

    def __post_init__(self):
        if self.box is None:
            self.box = Box.cube(self.n)
        if self.base_point is None:
            self.base_point = (0.0,) * self.n

    def __call__(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        m = max(t.reshape(-1, self.k).shape[0], np.atleast_2d(x).shape[0])
        tt = np.broadcast_to(t.reshape(-1, self.k), (m, self.k))
        xx = np.broadcast_to(np.atleast_2d(x), (m, self.n))
        return np.asarray(self.gamma(tt, xx), dtype=float).reshape(m, self.n)

    def inv(self, t, x, tol=1e-13, max_iter=50):
        """γ_t^{-1}(x), rows paired as in __call__."""
        if not self.invertible:
            raise InvertibilityError(f"{self.name}: γ_t not flagged invertible")
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        m = max(t.reshape(-1, self.k).shape[0], np.atleast_2d(x).shape[0])
        tt = np.broadcast_to(t.reshape(-1, self.k), (m, self.k)).copy()
        xx = np.broadcast_to(np.atleast_2d(x), (m, self.n)).copy()
        if self.inverse is not None:
            return np.asarray(self.inverse(tt, xx), dtype=float).reshape(m, self.n)
        y = xx.copy()
        step = self.box.fd_step()
        for _ in range(max_iter):
            r = self(tt, y) - xx
            if np.max(np.abs(r)) < tol:
                break
            jac = richardson_jacobian(lambda p: self(tt, p), y, step)
            try:
                y = y - np.linalg.solve(jac, r[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise InvertibilityError(f"{self.name}: singular x-Jacobian") from exc
        r = self(tt, y) - xx
        if np.max(np.abs(r)) > 1e-9:
            raise InvertibilityError(f"{self.name}: Newton inversion did not converge")
        return y

    def check_identity(self, samples=32, seed=0):
        rng = np.random.default_rng(seed)
        x = self._sample_x(rng, samples)
        return float(np.max(np.abs(self(np.zeros((samples, self.k)), x) - x)))

    def check_inverse(self, samples=32, seed=0):
        rng = np.random.default_rng(seed)
        x = self._sample_x(rng, samples)
        t = (rng.random((samples, self.k)) * 2 - 1) * self.a / np.sqrt(self.k)
        return float(np.max(np.abs(self.inv(t, self(t, x)) - x)))

    def _sample_x(self, rng, m, shrink=0.5):
        lo = np.array(self.box.lower)
        w = self.box.widths
        return lo + w * (0.5 - shrink / 2 + shrink * rng.random((m, self.n)))


# model curves


def _translation_curve(name, n, k, shift, a=0.5):
    def gamma(t, x):
        return x - shift(t)

    def inverse(t, x):
        return x + shift(t)

    return CurveFamily(n=n, k=k, gamma=gamma, inverse=inverse, a=a, name=name, shift=shift)


def monomial_shift(alpha):
    alpha = [float(a) for a in alpha]

    def shift(t):
        s = t[:, 0]
        cols = []
        for a in alpha:
            if float(a).is_integer():
                cols.append(s ** int(a))
            else:
                cols.append(np.abs(s) ** a)
        return np.stack(cols, axis=1)

    return shift


def parabola_curve(a=0.5):
    return _translation_curve("parabola", 2, 1, monomial_shift([1, 2]), a)


def flat_line_curve(a=0.5):
    return _translation_curve("flat_line", 2, 1, lambda t: np.stack([t[:, 0], 0 * t[:, 0]], 1), a)


def translation_curve(a=0.5):
    return _translation_curve("translation", 2, 2, lambda t: t[:, :2].copy(), a)


def monomial_curve(alpha, a=0.5):
    return _translation_curve(
        "monomial" + "".join(str(int(v)) if float(v).is_integer() else str(v) for v in alpha),
        len(alpha), 1, monomial_shift(alpha), a)


def identity_curve(n=2, a=0.5):
    return _translation_curve("identity", n, 1, lambda t: np.zeros((t.shape[0], n)), a)


def grushin_coupled_curve(a=0.5):
    """γ_t(x) = (x1 + t, x2 + t x1)."""

    def gamma(t, x):
        s = t[:, 0]
        return np.stack([x[:, 0] + s, x[:, 1] + s * x[:, 0]], axis=1)

    def inverse(t, x):
        s = t[:, 0]
        y1 = x[:, 0] - s
        return np.stack([y1, x[:, 1] - s * y1], axis=1)

    return CurveFamily(n=2, k=1, gamma=gamma, inverse=inverse, a=a, name="grushin_coupled")


def exponential_curve(a=0.5):
    """γ_t(x) = x − (t, e^t − 1 − t): curved, with an infinite Taylor series."""
    return _translation_curve(
        "exponential", 2, 1, lambda t: np.stack([t[:, 0], np.expm1(t[:, 0]) - t[:, 0]], 1), a)


MODEL_CURVES = {
    "parabola": parabola_curve,
    "flat_line": flat_line_curve,
    "translation": translation_curve,
    "grushin_coupled": grushin_coupled_curve,
    "monomial123": lambda a=0.5: monomial_curve([1, 2, 3], a),
    "identity": identity_curve,
    "exponential": exponential_curve,
}


def model_curve(name, **kw):
    if name.startswith("monomial") and name not in MODEL_CURVES:
        alpha = [float(c) for c in name[len("monomial"):].split("_") if c]
        return monomial_curve(alpha, **kw)
    try:
        return MODEL_CURVES[name](**kw)
    except KeyError as exc:
        raise KeyError(f"unknown model curve {name!r}") from exc


# Taylor expansion of W(t, x)


def multi_indices(k, max_total, min_total=0):
    out = []
    for total in range(min_total, max_total + 1):
        for combo in combinations_with_replacement(range(k), total):
            alpha = [0] * k
            for c in combo:
                alpha[c] += 1
            out.append(tuple(alpha))
    return out


def w_field_values(curve, t, x, eps_step=1e-3):
    """W(t, x) = ∂_ε|_{ε=1} γ_{εt}∘γ_t^{-1}(x), rows paired."""
    t = np.atleast_2d(np.asarray(t, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = curve.inv(t, x)

    def central(h):
        return (curve((1 + h) * t, y) - curve((1 - h) * t, y)) / (2 * h)

    return (4 * central(eps_step / 2) - central(eps_step)) / 3


def _vandermonde(tpts, alphas):
    return np.stack([np.prod(tpts ** np.array(al), axis=1) for al in alphas], axis=1)


def _t_nodes(k, radius, per_axis):
    nodes = radius * np.cos(np.pi * (np.arange(per_axis) + 0.5) / per_axis)
    grids = np.meshgrid(*([nodes] * k), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def taylor_coefficients(curve, x, order, radius=None):
    """Coefficients c_α(x) of W(t, x) ≈ Σ t^α c_α(x) for 0 < |α| < order.

    Returns (alphas, array of shape (len(alphas), m, n)).
    """
    x = as_points(x, curve.n)
    k = curve.k
    fit_deg = min(order + 6, 14) if k == 1 else min(order + 4, 9)
    radius = radius if radius is not None else min(0.25, 0.5 * curve.a)
    per_axis = fit_deg + 3 if k == 1 else fit_deg + 2
    tpts = _t_nodes(k, radius, per_axis)
    fit_alphas = multi_indices(k, fit_deg)
    V = _vandermonde(tpts / radius, fit_alphas)
    m = x.shape[0]
    T = np.repeat(tpts, m, axis=0)
    Xr = np.tile(x, (tpts.shape[0], 1))
    W = w_field_values(curve, T, Xr).reshape(tpts.shape[0], m * curve.n)
    coef, *_ = np.linalg.lstsq(V, W, rcond=None)
    keep = [i for i, al in enumerate(fit_alphas) if 0 < sum(al) < order]
    alphas = [fit_alphas[i] for i in keep]
    scale = np.array([radius ** sum(al) for al in alphas])
    out = coef[keep] / scale[:, None]
    return alphas, out.reshape(len(alphas), m, curve.n)


def _rationalize(c, tol=1e-8, max_den=64):
    frac = Fraction(c).limit_denominator(max_den)
    if abs(float(frac) - c) <= tol * max(1.0, abs(c)):
        return int(frac) if frac.denominator == 1 else frac
    return None


def fit_polynomial_field(func, n, box, max_degree=4, samples=200, seed=0, tol=1e-8):
    """Try to represent a vectorized field exactly by small-rational polynomials."""
    rng = np.random.default_rng(seed)
    lo = np.array(box.lower)
    pts = lo + box.widths * (0.25 + 0.5 * rng.random((samples, n)))
    vals = func(pts)
    exps = multi_indices(n, max_degree)
    V = _vandermonde(pts, exps)
    coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
    polys = []
    for i in range(n):
        terms = {}
        for e, c in zip(exps, coef[:, i]):
            if abs(c) < tol:
                continue
            r = _rationalize(float(c))
            if r is None:
                return None
            terms[e] = r
        polys.append(Polynomial(n, terms))
    field = VectorField(n, polys=polys)
    if np.max(np.abs(field(pts) - vals)) > 1e-7 * max(1.0, float(np.max(np.abs(vals)))):
        return None
    return field


def expand_taylor_fields(curve, order, fit_polynomials=True):
    """Taylor vector fields X_α of W(t, x) ~ Σ t^α X_α for 0 < |α| < order.

    Each X_α carries a generic evaluator and, when an exact small-rational
    polynomial fit exists on the box, a polynomial representation.
    """
    order = check_int(order, "order", low=1)
    if not curve.invertible:
        raise InvertibilityError(f"{curve.name}: Taylor fields need invertible γ_t")
    if order > MAX_TAYLOR_ORDER:
        raise ResolutionError(f"order {order} exceeds the stable finite-difference limit {MAX_TAYLOR_ORDER}")
    alphas = [al for al in multi_indices(curve.k, order - 1) if sum(al) > 0]
    out = []
    for idx, al in enumerate(alphas):
        def func(pts, idx=idx):
            _, coef = taylor_coefficients(curve, pts, order)
            return coef[idx]

        X = None
        if fit_polynomials:
            X = fit_polynomial_field(func, curve.n, curve.box)
        if X is None:
            X = VectorField(curve.n, func=func)
        else:
            X = VectorField(curve.n, func=func, polys=X.polys)
        X.name = "X_" + "".join(str(a) for a in al)
        out.append((al, X))
    return out


def taylor_remainder(curve, order, ts, samples=6, seed=0, step=None):
    """Defect |exp(W(t))x − exp(Σ_{|α|<N} t^α X_α)x| at small t.

    Returns (ts, defects, fitted log-log exponent).
    """
    from .fields import flow

    fields = expand_taylor_fields(curve, order, fit_polynomials=False)
    rng = np.random.default_rng(seed)
    x = curve._sample_x(rng, samples, shrink=0.3)
    direction = np.ones(curve.k) / np.sqrt(curve.k)
    defects = []
    for t in ts:
        tv = t * direction
        W = VectorField(curve.n, func=lambda p, tv=tv: w_field_values(curve, np.tile(tv, (p.shape[0], 1)), p))

        def trunc(p, tv=tv):
            acc = np.zeros_like(p)
            for al, X in fields:
                acc += np.prod(tv ** np.array(al)) * X(p)
            return acc

        Wt = VectorField(curve.n, func=trunc)
        h = step or 0.25
        d = np.max(np.linalg.norm(flow(W, 1.0, x, h) - flow(Wt, 1.0, x, h), axis=1))
        defects.append(d)
    ts = np.asarray(ts, dtype=float)
    defects = np.asarray(defects)
    good = defects > 1e-15
    slope = np.nan
    if np.sum(good) >= 2:
        slope = float(np.polyfit(np.log(ts[good]), np.log(defects[good]), 1)[0])
    return ts, defects, slope


# curvature condition (C_J)


def iterated_map(curve, x, tau):
    """Γ^n(x, τ) with τ rows of length k·n, composing γ n times."""
    tau = np.atleast_2d(tau)
    y = np.broadcast_to(np.atleast_2d(x), (tau.shape[0], curve.n)).copy()
    for j in range(curve.n):
        y = curve(tau[:, j * curve.k:(j + 1) * curve.k], y)
    return y


@dataclass
class CurvatureWitness:
    xi: tuple
    beta: tuple
    magnitude: float


def curvature_cj_check(curve, M_max, radius=0.05, threshold=1e-6, seed=0):
    """Search for a nonvanishing Taylor coefficient of a minor J_ξ(0, τ).

    Returns a CurvatureWitness (smallest |β| first, then largest magnitude,
    then lexicographic ξ) or None.
    """
    M_max = check_int(M_max, "M_max", low=0)
    n, k = curve.n, curve.k
    d = n * k
    x0 = np.asarray(curve.base_point, dtype=float)
    fit_deg = M_max + 2
    alphas = multi_indices(d, fit_deg)
    rng = np.random.default_rng(seed)
    m = max(4 * len(alphas), 64)
    tau = radius * (2 * rng.random((m, d)) - 1)
    step = 1e-3
    jac = richardson_jacobian(lambda s: iterated_map(curve, x0, s), tau, step)
    scale = float(np.max(np.abs(jac))) or 1.0
    if not np.all(np.isfinite(jac)):
        raise ResolutionError("non-finite Jacobian of the iterated map")
    V = _vandermonde(tau / radius, alphas)
    best = None
    for xi in combinations(range(d), n):
        J = np.linalg.det(jac[:, :, list(xi)])
        coef, *_ = np.linalg.lstsq(V, J, rcond=None)
        for al, c in zip(alphas, coef):
            order = sum(al)
            if order > M_max:
                continue
            deriv = abs(c) / radius ** order * np.prod([factorial(a) for a in al])
            if deriv <= threshold * max(1.0, scale ** n):
                continue
            key = (order, -deriv, xi, al)
            if best is None or key < best[0]:
                best = (key, CurvatureWitness(tuple(i + 1 for i in xi), tuple(al), float(deriv)))
    return None if best is None else best[1]
