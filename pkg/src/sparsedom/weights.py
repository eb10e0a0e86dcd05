"""Muckenhoupt and reverse-Hölder constants over dyadic grids, and weighted norm checks."""
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_real, conjugate, grid_function
from .errors import ContractViolation

CLAMP = 1e-30
# frozen calibration constant for weighted_norm_check (set from the first run)
C_CAL = 1.0


@dataclass
class Weight:
    """Strictly positive grid function with a finite integral."""

    values: np.ndarray
    grid_id: str = None
    name: str = "weight"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ContractViolation("weight must be finite")
        if np.any(v <= 0):
            raise ContractViolation("weight must be strictly positive")
        self.values = v

    def __len__(self):
        return self.values.size


def _values(w):
    return w.values if isinstance(w, Weight) else grid_function(w, np.asarray(w).size, "w")


def power_weight(S, beta, axis=None):
    """|x|^β (Euclidean norm) or |x_axis|^β."""
    x = S.points if axis is None else S.points[:, [axis]]
    return Weight(np.linalg.norm(x, axis=1) ** beta, name=f"power({beta})")


def product_weight(S, betas):
    """Π_a |x_a|^{β_a}."""
    v = np.ones(S.size)
    for a, b in enumerate(betas):
        v = v * np.abs(S.points[:, a]) ** b
    return Weight(v, name=f"product({tuple(betas)})")


def constant_weight(S, c=1.0):
    return Weight(np.full(S.size, float(c)), name=f"constant({c})")


WEIGHT_FAMILIES = {"constant": constant_weight, "power": power_weight, "product": product_weight}


def make_weight(S, spec):
    """Weight from a spec dict: {family: constant|power|product, ...params}."""
    spec = dict(spec)
    fam = spec.pop("family", "constant")
    if fam not in WEIGHT_FAMILIES:
        raise ContractViolation(f"unknown weight family {fam!r}")
    return WEIGHT_FAMILIES[fam](S, **spec)


def _clamped_power(v, e):
    if np.any(v < CLAMP):
        warnings.warn("weight clamped at 1e-30 before taking negative powers", RuntimeWarning)
        v = np.maximum(v, CLAMP)
    return v ** e


def _means(G, f, k):
    w = G.S.weights
    lab = G.labels[k]
    m = len(G.cubes[k])
    return np.bincount(lab, weights=w * f, minlength=m) / np.bincount(lab, weights=w, minlength=m)


def cube_products(G, w, p):
    """⟨w⟩_Q ⟨w^{1−p′}⟩_Q^{p−1} for every cube, keyed by generation."""
    p = check_real(p, "p", low=1.0, low_open=True)
    v = _values(w)
    sig = _clamped_power(v, 1.0 - conjugate(p))
    return {k: _means(G, v, k) * _means(G, sig, k) ** (p - 1.0) for k in G.generations}


def a_p_constant(w, p, G):
    """[w]_{A_p} = sup over grid cubes of ⟨w⟩_Q ⟨w^{1−p′}⟩_Q^{p−1}."""
    return float(max(np.max(v) for v in cube_products(G, w, p).values()))


def rh_constant(w, p, G):
    """[w]_{RH_p} = sup over grid cubes of ⟨w⟩_{Q,p} / ⟨w⟩_Q."""
    p = check_real(p, "p", low=1.0, low_open=True)
    v = _values(w)
    best = 0.0
    for k in G.generations:
        best = max(best, float(np.max(_means(G, v ** p, k) ** (1.0 / p) / _means(G, v, k))))
    return best


def alpha_exponent(r, p, s):
    """α = max{1/(p − r), (s − 1)/(s − p)}."""
    if not r < p < s:
        raise ContractViolation("need r < p < s")
    return max(1.0 / (p - r), (s - 1.0) / (s - p))


def weighted_norm(S, f, w, p):
    v = _values(w)
    return float(np.sum(S.weights * v * np.abs(f) ** p) ** (1.0 / p))


@dataclass
class WeightedCheck:
    C_emp: float
    bound: float
    ok: bool
    alpha: float
    a_const: float
    rh_const: float
    C_cal: float

    @property
    def ratio(self):
        return self.C_emp / self.bound if self.bound > 0 else np.inf


def weighted_norm_check(apply, G, w, p, r, s, tests, C_cal=C_CAL):
    """C_emp = max ‖Tf‖_{L^p(w)}/‖f‖_{L^p(w)} against ([w]_{A_{p/r}}[w]_{RH_{(s/p)′}})^α."""
    r = check_real(r, "r", low=1.0)
    p = check_real(p, "p", low=1.0)
    s = check_real(s, "s", low=1.0)
    alpha = alpha_exponent(r, p, s)
    S = G.S
    A = a_p_constant(w, p / r, G)
    RH = rh_constant(w, conjugate(s / p), G)
    bound = (A * RH) ** alpha
    best = 0.0
    for f in tests:
        den = weighted_norm(S, f, w, p)
        if den > 0:
            best = max(best, weighted_norm(S, apply(f), w, p) / den)
    return WeightedCheck(best, bound, bool(best <= C_cal * bound), alpha, A, RH, C_cal)
