"""Volume proxy Λ(x, δ) and the scaling map Φ(u) = exp(u·Z_J0) x0."""
from dataclasses import dataclass, field

import numpy as np

from .._validation import as_point, check_real
from ..errors import SpanError
from .fields import GradedFieldSystem, richardson_jacobian, span_rank


def volume_proxy(system, x, delta):
    """Σ over n-subsets I of |det(X_I)(x)| δ^{d(I)}."""
    delta = check_real(delta, "delta", low=0.0)
    if delta == 0.0:
        return 0.0
    x = as_point(x, system.n)
    vals = system.evaluate(x)
    total = 0.0
    for I in system.subsets():
        det = np.linalg.det(vals[list(I)].T)
        if det != 0.0:
            total += abs(det) * delta ** sum(system.degrees[i] for i in I)
    return float(total)


def exp_combination(fields, U, x0, steps=16):
    """exp(Σ_i U[r, i] fields_i) x0 for each row r of U (RK4, unit time)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    y = np.tile(np.asarray(x0, dtype=float), (U.shape[0], 1))
    h = 1.0 / steps

    def vel(p):
        out = np.zeros_like(p)
        for i, Z in enumerate(fields):
            out += U[:, i:i + 1] * Z(p)
        return out

    for _ in range(steps):
        k1 = vel(y)
        k2 = vel(y + 0.5 * h * k1)
        k3 = vel(y + 0.5 * h * k2)
        k4 = vel(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@dataclass
class ScalingMap:
    x0: np.ndarray
    system: GradedFieldSystem
    scale: float
    J0: tuple
    fields: list
    det0: float
    eta1: float = None
    zeta1: float = None
    comparability: float = None
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, U):
        U = np.asarray(U, dtype=float)
        single = U.ndim == 1
        out = exp_combination(self.fields, np.atleast_2d(U), self.x0)
        if single:
            out = out[0]
            if np.all(U == 0):
                return np.array(self.x0, dtype=float)
        else:
            zero = np.all(U == 0, axis=1)
            out[zero] = self.x0
        return out

    def jacobian(self, U):
        return richardson_jacobian(self.__call__, np.atleast_2d(U), 1e-3)

    def inverse(self, y, tol=1e-11, max_iter=40):
        """Newton solve Φ(u) = y starting at u = 0."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        u = np.zeros_like(y)
        for _ in range(max_iter):
            r = self(u) - y
            if np.max(np.abs(r)) < tol:
                break
            J = self.jacobian(u)
            u = u - np.linalg.solve(J, r[..., None])[..., 0]
        return u


def _ball_samples(rng, m, n, radius):
    g = rng.standard_normal((m, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(m) ** (1.0 / n)
    return g * r[:, None]


def build_scaling_map(system, x0, scale, radius=1.0, samples=128, seed=0):
    """Select J0 maximizing |det Z_J(x0)|, Z_j = scale^{d_j} X_j, and measure Φ.

    Reports the comparability ratio sup/inf |det dΦ(u)| over |u| < radius,
    the injectivity radius η1 (largest radius on a halving menu with constant
    Jacobian sign and a positive sampled bi-Lipschitz bound) and ζ1 (largest
    radius on the menu whose exponential ball lies inside Φ(B(η1))).
    """
    scale = check_real(scale, "scale", low=0.0, low_open=True)
    x0 = as_point(x0, system.n)
    Z = system.scaled_fields(scale)
    vals = np.stack([z(x0) for z in Z])
    if span_rank(vals) < system.n:
        raise SpanError("fields do not span at the base point")
    best, best_det = None, -1.0
    for J in system.subsets():
        d = abs(np.linalg.det(vals[list(J)].T))
        if d > best_det * (1 + 1e-12):
            best, best_det = J, d
    phi = ScalingMap(x0=x0, system=system, scale=scale, J0=tuple(i + 1 for i in best),
                     fields=[Z[i] for i in best], det0=float(best_det))
    rng = np.random.default_rng(seed)
    U = _ball_samples(rng, samples, system.n, radius)
    dets = np.abs(np.linalg.det(phi.jacobian(U)))
    phi.comparability = float(np.max(dets) / np.min(dets)) if np.min(dets) > 0 else np.inf
    phi.diagnostics["det_min"] = float(np.min(dets))
    phi.diagnostics["det_max"] = float(np.max(dets))
    # injectivity radius on a halving menu
    eta = None
    for r in radius * 0.5 ** np.arange(0, 8):
        Ur = _ball_samples(rng, samples, system.n, r)
        signs = np.sign(np.linalg.det(phi.jacobian(Ur)))
        if np.any(signs != signs[0]) or signs[0] == 0:
            continue
        P = phi(Ur)
        du = np.linalg.norm(Ur[:, None] - Ur[None], axis=-1)
        dp = np.linalg.norm(P[:, None] - P[None], axis=-1)
        mask = du > 0
        if np.min(dp[mask] / du[mask]) > 0:
            eta = float(r)
            break
    phi.eta1 = eta
    if eta is not None:
        zeta = None
        for r in radius * 0.5 ** np.arange(0, 10):
            V = _ball_samples(rng, 64, system.q, r) / np.sqrt(system.q)
            pts = exp_combination(Z, V, x0)
            try:
                u = phi.inverse(pts)
            except np.linalg.LinAlgError:
                continue
            ok = np.all(np.linalg.norm(phi(u) - pts, axis=1) < 1e-8) and np.all(np.linalg.norm(u, axis=1) < eta)
            if ok:
                zeta = float(r)
                break
        phi.zeta1 = zeta
    return phi
