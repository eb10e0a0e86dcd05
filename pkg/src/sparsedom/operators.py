"""Calderón–Zygmund kernels, kernel ladders and singular Radon transforms on lattice clouds.

Operators act on grid functions of a lattice ``DiscreteSHT``. Off-lattice values
f(γ_t(x)) come from multilinear interpolation with zero extension outside the
box, and the t-integral is a symmetric composite Gauss–Legendre rule on B^k(a).
Translation curves γ_t(x) = x − shift(t) with ρ ≡ 1 are applied through an
integer-offset stencil; everything else goes through a generic gather/scatter
path. The two routes agree to rounding.
"""
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ._validation import check_int, check_real, grid_function
from .errors import ContractViolation, DomainExitError, InvertibilityError, KernelError

GL_ORDER = 8
EXIT_TOL = 1e-12


# bumps


def smoothstep(x):
    """Quintic smoothstep 6x⁵ − 15x⁴ + 10x³ clamped to [0, 1] (C² at both ends)."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


def plateau(r, inner, outer):
    """Radial bump: 1 for |r| ≤ inner, 0 for |r| ≥ outer, smoothstep in between."""
    r = np.abs(np.asarray(r, dtype=float))
    return 1.0 - smoothstep((r - inner) / (outer - inner))


def box_bump(S, lower, upper, plateau_fraction=0.5):
    """Product bump on the box [lower, upper]: 1 on the centred sub-box of the given
    relative size, 0 on and outside the box boundary."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    c = (lower + upper) / 2
    half = (upper - lower) / 2
    out = np.ones(S.size)
    for a in range(S.n):
        out *= plateau((S.points[:, a] - c[a]) / half[a], plateau_fraction, 1.0)
    return out


def _as_t(t, k):
    t = np.asarray(t, dtype=float)
    if k == 1:
        return t.reshape(-1, 1)
    return t.reshape(-1, k)


def _norm(t):
    return np.sqrt(np.sum(t * t, axis=1)) if t.shape[1] > 1 else np.abs(t[:, 0])


def _gl_rule(edges, order=GL_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    return (mid + half * x).ravel(), (half * w).ravel()


def symmetric_rule(a, panels, order=GL_ORDER, k=1):
    """Composite Gauss–Legendre rule on [−a, a]^k, mirror symmetric about 0.

    Returns nodes of shape (m, k) and weights of shape (m,).
    """
    edges = np.linspace(0.0, a, panels + 1)
    x, w = _gl_rule(edges, order)
    x1 = np.concatenate([-x[::-1], x])
    w1 = np.concatenate([w[::-1], w])
    if k == 1:
        return x1[:, None], w1
    grids = np.meshgrid(*([x1] * k), indexing="ij")
    wgrid = np.ones_like(grids[0])
    for g in np.meshgrid(*([w1] * k), indexing="ij"):
        wgrid = wgrid * g
    return np.stack([g.ravel() for g in grids], axis=1), wgrid.ravel()


# kernels


@dataclass
class CZKernel:
    """Kernel K on B^k(a) \\ {0}; evaluates to 0 outside that set.

    ``func`` maps t of shape (m, k) to (m,). ``constants`` holds the measured
    differential-inequality constants keyed by multi-index.
    """

    func: object
    a: float
    k: int = 1
    t_min: float = 0.0
    name: str = "kernel"
    constants: dict = field(default_factory=dict)

    def __call__(self, t):
        t = _as_t(t, self.k)
        r = _norm(t)
        out = np.zeros(t.shape[0])
        inside = (r > 0) & (r < self.a)
        if inside.any():
            out[inside] = np.asarray(self.func(t[inside]), dtype=float).reshape(-1)
        return out


def hilbert_kernel(a=0.25, plateau_ratio=0.5, t_min=0.0):
    """Truncated Hilbert kernel K(t) = 1/t, smoothly cut off to vanish for |t| ≥ a."""
    a = check_real(a, "a", low=0.0, low_open=True)

    def func(t):
        s = t[:, 0]
        return plateau(s, plateau_ratio * a, a) / s

    return CZKernel(func, a, 1, t_min, "hilbert")


def table_kernel(t, values, a, name="table"):
    """One-dimensional kernel from a table (linear interpolation)."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(t)
    t, values = t[order], values[order]

    def func(u):
        return np.interp(u[:, 0], t, values, left=0.0, right=0.0)

    return CZKernel(func, float(a), 1, 0.0, name)


KERNELS = {"hilbert": hilbert_kernel}


def _partials(K, t, h):
    """Finite-difference partials of K up to order 2 at rows of t (step h per row)."""
    k = t.shape[1]
    out = {(0,) * k: K(t)}
    eye = np.eye(k)
    for i in range(k):
        e = eye[i] * h[:, None]
        fp, fm = K(t + e), K(t - e)
        a1 = tuple(int(v) for v in eye[i])
        out[a1] = (fp - fm) / (2 * h)
        a2 = tuple(2 * int(v) for v in eye[i])
        out[a2] = (fp - 2 * out[(0,) * k] + fm) / (h * h)
        for j in range(i + 1, k):
            f = eye[j] * h[:, None]
            mixed = (K(t + e + f) - K(t + e - f) - K(t - e + f) + K(t - e - f)) / (4 * h * h)
            out[tuple(int(v) for v in eye[i] + eye[j])] = mixed
    return out


def measure_constants(K, samples=400, seed=0):
    """C_α = max over sampled t of |∂^α K(t)|·|t|^{|α|+k} for |α| ≤ 2.

    Samples have |t| log-uniform in [max(t_min, 1e-4 a), 0.95 a]. Stores the
    result on ``K.constants`` and returns it.
    """
    rng = np.random.default_rng(seed)
    lo = max(K.t_min, 1e-4 * K.a)
    r = np.exp(rng.uniform(np.log(lo), np.log(0.95 * K.a), samples))
    d = rng.standard_normal((samples, K.k))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    t = d * r[:, None]
    h = 1e-3 * r
    parts = _partials(K, t, h)
    const = {}
    for alpha, vals in parts.items():
        if not np.all(np.isfinite(vals)):
            raise KernelError(f"{K.name}: derivative {alpha} not finite at sampled t")
        const[alpha] = float(np.max(np.abs(vals) * r ** (sum(alpha) + K.k)))
    K.constants = const
    return const


def cancellation_bumps():
    """Bundled test bumps on [−1, 1]: even, shifted and odd profiles."""
    return [
        lambda u: plateau(u, 0.5, 1.0),
        lambda u: plateau(u - 0.3, 0.2, 0.6),
        lambda u: u * plateau(u, 0.5, 1.0),
    ]


def cancellation_constant(K, radii=None, bumps=None, panels=64):
    """sup over R and bumps φ of |p.v. ∫K(t)φ(Rt)dt| (one-dimensional kernels).

    The principal value pairs t with −t on geometric panels down to 1e-12·a.
    """
    if K.k != 1:
        raise KernelError("cancellation functional is implemented for k = 1")
    radii = 2.0 ** np.arange(0, 16) if radii is None else np.asarray(radii, dtype=float)
    bumps = cancellation_bumps() if bumps is None else bumps
    levels = np.geomspace(K.a * 1e-12, K.a, 13 * 4)
    edges = np.unique(np.concatenate([levels, np.linspace(K.a * 1e-3, K.a, panels + 1)]))
    x, w = _gl_rule(edges)
    Kp, Km = K(x), K(-x)
    best = 0.0
    for R in radii:
        for phi in bumps:
            val = np.sum(w * (Kp * phi(R * x) + Km * phi(-R * x)))
            best = max(best, abs(float(val)))
    return best


# ladder


class KernelLadder:
    """Pieces χ_0..χ_J with K(t) = Σ_{j≤J} δ^{−kj} χ_j(δ^{−j} t) on δ^{J+1}a ≤ |t| ≤ a.

    With ϕ₀ = 1 on B(δa), 0 off B(a), ψ(u) = ϕ₀(u) − ϕ₀(u/δ):
    χ_0 = K·(1 − ϕ₀(·/δ)) and χ_j(u) = δ^{kj} K(δ^j u) ψ(u) for j ≥ 1, then
    the means of the j ≥ 1 pieces are moved onto a fixed bump φ in telescoping
    form so that each corrected piece integrates to zero.
    """

    def __init__(self, kernel, delta, J, panels=1024):
        self.kernel = kernel
        self.delta = float(delta)
        self.J = int(J)
        self.a = float(kernel.a)
        self.k = int(kernel.k)
        if self.k == 1:
            self.nodes, self.weights = symmetric_rule(self.a, panels)
        else:
            self.nodes, self.weights = symmetric_rule(self.a, max(8, panels // 16), 4, self.k)
        self._phi_mass = 1.0
        self._phi_mass = float(np.sum(self.weights * self.phi(self.nodes)))
        self.raw_means = np.array([float(np.sum(self.weights * self._raw(j, self.nodes)))
                                   for j in range(self.J + 1)])
        tail = np.concatenate([np.cumsum(self.raw_means[::-1])[::-1], [0.0]])
        tail[0] = 0.0  # the j = 0 piece keeps its mean
        self.tails = tail  # tails[j] = Σ_{i ≥ j} m_i for j ≥ 1

    def phi0(self, u):
        return plateau(_norm(_as_t(u, self.k)), self.delta * self.a, self.a)

    def psi(self, u):
        u = _as_t(u, self.k)
        return self.phi0(u) - self.phi0(u / self.delta)

    def phi(self, u):
        """Correction bump with unit integral, supported in B(a/2)."""
        return plateau(_norm(_as_t(u, self.k)), self.a / 4, self.a / 2) / self._phi_mass

    def _raw(self, j, u):
        u = _as_t(u, self.k)
        if j == 0:
            return self.kernel(u) * (1.0 - self.phi0(u / self.delta))
        d = self.delta ** j
        return d ** self.k * self.kernel(d * u) * self.psi(u)

    def piece(self, j, u):
        """Corrected piece χ_j evaluated at u."""
        u = _as_t(u, self.k)
        out = self._raw(j, u)
        if j >= 1:
            out = out - self.tails[j] * self.phi(u)
        if j + 1 <= self.J:
            out = out + self.tails[j + 1] * self.delta ** (-self.k) * self.phi(u / self.delta)
        return out

    __call__ = piece

    @property
    def pieces(self):
        return [lambda u, j=j: self.piece(j, u) for j in range(self.J + 1)]

    def integral(self, j):
        return float(np.sum(self.weights * self.piece(j, self.nodes)))

    def integrals(self):
        return np.array([self.integral(j) for j in range(self.J + 1)])

    def partial_sum(self, t, J=None):
        """Σ_{j ≤ J} δ^{−kj} χ_j(δ^{−j} t)."""
        J = self.J if J is None else J
        t = _as_t(t, self.k)
        out = np.zeros(t.shape[0])
        for j in range(J + 1):
            d = self.delta ** j
            out += d ** (-self.k) * self.piece(j, t / d)
        return out

    def reconstruction_error(self, samples=4001):
        """sup |K − partial sum| on δ^J a ≤ |t| ≤ a (one-dimensional sampling)."""
        r = np.geomspace(self.delta ** self.J * self.a, self.a, samples)
        if self.k == 1:
            t = np.concatenate([-r, r])[:, None]
        else:
            t = np.zeros((r.size, self.k))
            t[:, 0] = r
        return float(np.max(np.abs(self.kernel(t) - self.partial_sum(t))))

    def norms(self, samples=20001):
        """(C⁰, C¹) sup norms of every piece, sampled along the first axis."""
        u1 = np.linspace(-self.a, self.a, samples)
        u = np.zeros((samples, self.k))
        u[:, 0] = u1
        c0, c1 = [], []
        for j in range(self.J + 1):
            v = self.piece(j, u)
            g = np.gradient(v, u1)
            c0.append(float(np.max(np.abs(v))))
            c1.append(float(np.max(np.abs(v)) + np.max(np.abs(g))))
        return np.array(c0), np.array(c1)


def split_kernel(K, delta, J):
    """Dyadic ladder of K with ratio δ^{-1} and pieces j = 0..J."""
    delta = check_real(delta, "delta", low=0.0, high=1.0, low_open=True, high_open=True)
    J = check_int(J, "J", low=1)
    r = np.geomspace(delta ** (J + 1) * K.a, K.a, 257)
    t = np.concatenate([-r, r])[:, None] if K.k == 1 else np.pad(r[:, None], ((0, 0), (0, K.k - 1)))
    try:
        vals = K(t)
    except Exception as exc:
        raise KernelError(f"{K.name}: evaluation failed on the annulus") from exc
    if not np.all(np.isfinite(vals)):
        raise KernelError(f"{K.name}: not finite on the annulus")
    return KernelLadder(K, delta, J)


# interpolation


def _lattice(S):
    if S.axes is None:
        raise ContractViolation("operators need a lattice cloud")
    lo = np.array([ax[0] for ax in S.axes])
    h = S.spacing
    return lo, h, np.array(S.shape)


def interp_weights(S, y):
    """Multilinear interpolation of lattice data at rows of y with zero extension.

    Returns (idx, w) of shape (m, 2^n); out-of-range corners get weight 0.
    """
    lo, h, shape = _lattice(S)
    pos = (y - lo) / h
    # snap rounding noise so lattice points interpolate to their own value
    near = np.rint(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    i0 = np.floor(pos).astype(np.int64)
    fr = pos - i0
    n = y.shape[1]
    idx = np.zeros((y.shape[0], 2 ** n), dtype=np.int64)
    w = np.ones((y.shape[0], 2 ** n))
    strides = np.array([int(np.prod(shape[a + 1:])) for a in range(n)])
    for c, bits in enumerate(product((0, 1), repeat=n)):
        ok = np.ones(y.shape[0], dtype=bool)
        flat = np.zeros(y.shape[0], dtype=np.int64)
        for a, b in enumerate(bits):
            ia = i0[:, a] + b
            ok &= (ia >= 0) & (ia < shape[a])
            flat += np.clip(ia, 0, shape[a] - 1) * strides[a]
            w[:, c] *= fr[:, a] if b else 1.0 - fr[:, a]
        w[~ok, c] = 0.0
        idx[:, c] = flat
    return idx, w


def interpolate(S, g, y):
    """g evaluated at off-lattice rows y (zero outside the box)."""
    idx, w = interp_weights(S, np.atleast_2d(y))
    return np.sum(w * g[idx], axis=1)


def _shifted(arr, off):
    """out[i] = arr[i + off] on an n-d array, zero where i + off is outside."""
    out = np.zeros_like(arr)
    src, dst = [], []
    for o, m in zip(off, arr.shape):
        o = int(o)
        if abs(o) >= m:
            return out
        if o >= 0:
            src.append(slice(o, m))
            dst.append(slice(0, m - o))
        else:
            src.append(slice(0, m + o))
            dst.append(slice(-o, m))
    out[tuple(dst)] = arr[tuple(src)]
    return out


@dataclass
class Stencil:
    """Integer lattice offsets with weights: (S g)[i] = Σ w_o g[i + o]."""

    offsets: np.ndarray
    weights: np.ndarray

    def apply(self, g, shape, adjoint=False):
        arr = np.asarray(g).reshape(shape)
        out = np.zeros(arr.shape, dtype=np.result_type(arr, float))
        sign = -1 if adjoint else 1
        for off, w in zip(self.offsets, self.weights):
            if w != 0.0:
                out += w * _shifted(arr, sign * off)
        return out.ravel()

    def __add__(self, other):
        return _merge_stencil(np.concatenate([self.offsets, other.offsets]),
                              np.concatenate([self.weights, other.weights]))


def _merge_stencil(offsets, weights):
    if offsets.shape[0] == 0:
        return Stencil(offsets, weights)
    uniq, inv = np.unique(offsets, axis=0, return_inverse=True)
    return Stencil(uniq, np.bincount(inv.ravel(), weights=weights, minlength=uniq.shape[0]))


def translation_stencil(S, shifts, coeffs):
    """Stencil of g ↦ Σ_m c_m g(x − shift_m) under multilinear interpolation."""
    lo, h, shape = _lattice(S)
    n = S.n
    pos = -np.asarray(shifts, dtype=float) / h
    i0 = np.floor(pos).astype(np.int64)
    fr = pos - i0
    offs, ws = [], []
    for bits in product((0, 1), repeat=n):
        w = np.asarray(coeffs, dtype=float).copy()
        for a, b in enumerate(bits):
            w *= fr[:, a] if b else 1.0 - fr[:, a]
        offs.append(i0 + np.array(bits))
        ws.append(w)
    return _merge_stencil(np.concatenate(offs), np.concatenate(ws))


# operators


class RadonOperator:
    """T f(x) = ψ₁(x) Σ_j ∫ (fψ₂)(γ_{δ^j t}(x)) ρ(δ^j t, x) χ_j(t) dt on a lattice cloud.

    ``psi1``/``psi2`` default to a bump on the inner box, which is the cloud box
    shrunk by the largest curve displacement over |t| ≤ a plus two cells.
    ``on_exit`` is "raise" (default) or "extend" (silently zero-extend).
    """

    def __init__(self, S, curve, ladder, psi1=None, psi2=None, rho=None, n_t=256,
                 inner=None, on_exit="raise", name=None):
        if curve.n != S.n:
            raise ContractViolation("curve dimension does not match the cloud")
        if ladder.k != curve.k:
            raise ContractViolation("kernel dimension does not match the curve parameter")
        if on_exit not in ("raise", "extend"):
            raise ContractViolation("on_exit must be 'raise' or 'extend'")
        self.S = S
        self.curve = curve
        self.ladder = ladder
        self.rho = rho
        self.on_exit = on_exit
        self.name = name or f"{curve.name}/{ladder.kernel.name}"
        self.a = ladder.a
        self.delta = ladder.delta
        self.J = ladder.J
        n_t = check_int(n_t, "n_t", low=2 * GL_ORDER)
        panels = max(1, n_t // (2 * GL_ORDER))
        if curve.k == 1:
            self.t_nodes, self.t_weights = symmetric_rule(self.a, panels)
        else:
            self.t_nodes, self.t_weights = symmetric_rule(self.a, max(1, panels // 2), 4, curve.k)
        lo, hi = (np.asarray(v, dtype=float) for v in S.box)
        if inner is None:
            disp = self._max_displacement()
            inner = (lo + disp + 2 * S.spacing, hi - disp - 2 * S.spacing)
        self.inner = tuple(np.asarray(v, dtype=float) for v in inner)
        if np.any(self.inner[0] >= self.inner[1]):
            raise ContractViolation("inner region is empty: kernel support too large for the box")
        default = box_bump(S, *self.inner) if psi1 is None or psi2 is None else None
        self.psi1 = default if psi1 is None else grid_function(psi1, S.size, "psi1")
        self.psi2 = default if psi2 is None else grid_function(psi2, S.size, "psi2")
        self._fast = curve.shift is not None and rho is None
        self._cache = {}

    def _max_displacement(self):
        rng = np.random.default_rng(0)
        lo, hi = (np.asarray(v, dtype=float) for v in self.S.box)
        x = lo + (hi - lo) * (0.25 + 0.5 * rng.random((16, self.S.n)))
        out = np.zeros(self.S.n)
        for t in self.t_nodes:
            y = self.curve(np.broadcast_to(t, (x.shape[0], self.curve.k)), x)
            out = np.maximum(out, np.max(np.abs(y - x), axis=0))
        return out

    def check_supports(self):
        """True iff supp ψ₁ and supp ψ₂ lie in the inner region."""
        lo, hi = self.inner
        ok = True
        for psi in (self.psi1, self.psi2):
            pts = self.S.points[psi != 0]
            ok &= bool(np.all((pts >= lo - EXIT_TOL) & (pts <= hi + EXIT_TOL)))
        return ok

    # node coefficients

    def coefficients(self, chi, target=None):
        """Quadrature coefficients c_m = w_m χ(t_m); with ``target`` the discrete
        moment is matched to it by a multiple of an even bump."""
        c = self.t_weights * np.asarray(chi(self.t_nodes), dtype=float).reshape(-1)
        if target is not None:
            b = self.t_weights * plateau(_norm(self.t_nodes), self.a / 4, self.a / 2)
            c = c + (target - c.sum()) * b / b.sum()
        return c

    def _piece_coefficients(self, j):
        key = ("c", j)
        if key not in self._cache:
            target = self.ladder.integral(j) if j >= 1 else None
            self._cache[key] = self.coefficients(lambda u: self.ladder.piece(j, u), target)
        return self._cache[key]

    # transport g ↦ ∫ g(γ_{st}(x)) ρ(st, x) c(t)

    def _check_exit(self, rows, y):
        lo, hi = (np.asarray(v, dtype=float) for v in self.S.box)
        if self.on_exit == "raise" and rows.size:
            if np.any(y < lo - EXIT_TOL) or np.any(y > hi + EXIT_TOL):
                raise DomainExitError(f"{self.name}: γ_t(x) leaves the box for x in supp ψ₁")

    def _fast_exit(self, shifts):
        rows = np.nonzero(self.psi1)[0]
        if self.on_exit != "raise" or rows.size == 0 or shifts.shape[0] == 0:
            return
        pts = self.S.points[rows]
        ymin = pts.min(axis=0) - shifts.max(axis=0)
        ymax = pts.max(axis=0) - shifts.min(axis=0)
        self._check_exit(rows, np.stack([ymin, ymax]))

    def transport(self, g, coeffs, scale=1.0, adjoint=False, key=None):
        """Σ_m c_m ρ(s t_m, x) g(γ_{s t_m}(x)) (or its W-adjoint), rows in supp ψ₁."""
        S = self.S
        if self._fast:
            if key is not None and ("s",) + key in self._cache:
                st, shifts = self._cache[("s",) + key]
            else:
                active = coeffs != 0
                shifts = self.curve.shift(self.t_nodes[active] * scale)
                st = translation_stencil(S, shifts, coeffs[active])
                if key is not None:
                    self._cache[("s",) + key] = (st, shifts)
            self._fast_exit(shifts)
            if adjoint:
                return st.apply(S.weights * g, S.shape, adjoint=True) / S.weights
            return st.apply(g, S.shape)
        return self._generic(g, coeffs, scale, adjoint)

    def _generic(self, g, coeffs, scale, adjoint):
        S = self.S
        rows = np.nonzero(self.psi1)[0]
        x = S.points[rows]
        out = np.zeros(S.size, dtype=np.result_type(g, float))
        if adjoint:
            gw = S.weights[rows] * g[rows]
        for t, c in zip(self.t_nodes, coeffs):
            if c == 0:
                continue
            tt = np.broadcast_to(t * scale, (rows.size, self.curve.k))
            y = self.curve(tt, x)
            self._check_exit(rows, y)
            idx, w = interp_weights(S, y)
            fac = c if self.rho is None else c * np.asarray(self.rho(tt, x), dtype=float)
            if adjoint:
                contrib = (w * (fac * gw)[:, None]).ravel()
                if np.iscomplexobj(contrib):
                    out += np.bincount(idx.ravel(), contrib.real, S.size) + \
                        1j * np.bincount(idx.ravel(), contrib.imag, S.size)
                else:
                    out += np.bincount(idx.ravel(), contrib, S.size)
            else:
                out[rows] += fac * np.sum(w * g[idx], axis=1)
        if adjoint:
            out /= S.weights
        return out

    def pieces_for(self, ell=None):
        """Indices j with δ^j ≤ ell (all pieces when ell is None or ell ≥ 1)."""
        if ell is None or ell >= 1:
            return list(range(self.J + 1))
        return [j for j in range(self.J + 1) if self.delta ** j <= ell * (1 + 1e-12)]


def radon_operator(S, curve, kernel="hilbert", a=0.25, delta=0.25, J=10, **kw):
    """Convenience constructor from names: curve name or CurveFamily, kernel name or CZKernel."""
    from .geometry import model_curve
    if isinstance(kernel, str):
        if kernel not in KERNELS:
            raise ContractViolation(f"unknown kernel {kernel!r}")
        kernel = KERNELS[kernel](a=a)
    if isinstance(curve, str):
        curve = model_curve(curve, a=kernel.a)
    ladder = split_kernel(kernel, delta, J)
    return RadonOperator(S, curve, ladder, **kw)


def _apply(op, g, coeffs, scale, key=None):
    f2 = op.psi2 * g
    return op.psi1 * op.transport(f2, coeffs, scale, key=key)


def apply_single_scale(op, chi, f):
    """𝒯_χ f(x) = ψ₁(x)∫(fψ₂)(γ_t(x))ρ(t,x)χ(t)dt; χ is a ladder index or a callable."""
    f = grid_function(f, op.S.size)
    if isinstance(chi, (int, np.integer)):
        return apply_dilated(op, int(chi), 0, f)
    return _apply(op, f, op.coefficients(chi), 1.0)


def apply_dilated(op, j, i, f):
    """𝒯_j^{(i)} f: the j-th ladder piece with t replaced by δ^i t."""
    f = grid_function(f, op.S.size)
    j = check_int(j, "j", low=0)
    i = check_int(i, "i", low=0)
    if j > op.J:
        raise ContractViolation(f"piece index {j} exceeds J={op.J}")
    return _apply(op, f, op._piece_coefficients(j), op.delta ** i, key=(j, i))


def apply_full(op, f):
    """T f = Σ_{j=0..J} 𝒯_j^{(j)} f."""
    return apply_truncated(op, f, None)


def apply_truncated(op, f, ell):
    """Σ over pieces with δ^j ≤ ℓ of 𝒯_j^{(j)} f (the whole sum when ℓ ≥ 1 or None)."""
    f = grid_function(f, op.S.size)
    js = op.pieces_for(ell)
    if op._fast:
        key = ("full", tuple(js))
        if key not in op._cache:
            st, shifts = None, []
            for j in js:
                c = op._piece_coefficients(j)
                active = c != 0
                sh = op.curve.shift(op.t_nodes[active] * op.delta ** j)
                part = translation_stencil(op.S, sh, c[active])
                st = part if st is None else st + part
                shifts.append(sh)
            op._cache[key] = (st, np.concatenate(shifts))
        st, shifts = op._cache[key]
        op._fast_exit(shifts)
        return op.psi1 * st.apply(op.psi2 * f, op.S.shape)
    out = np.zeros(op.S.size, dtype=np.result_type(f, float))
    for j in js:
        out += apply_dilated(op, j, j, f)
    return out


def adjoint_apply(op, j, i, g):
    """W-adjoint of 𝒯_j^{(i)}: ⟨𝒯f, g⟩ = ⟨f, 𝒯*g⟩ for the weighted pairing."""
    if not op.curve.invertible:
        raise InvertibilityError(f"{op.curve.name}: adjoint needs invertible γ_t")
    g = grid_function(g, op.S.size)
    j = check_int(j, "j", low=0)
    i = check_int(i, "i", low=0)
    coeffs = op._piece_coefficients(j)
    return op.psi2 * op.transport(op.psi1 * g, coeffs, op.delta ** i, adjoint=True, key=(j, i))


def adjoint_single_scale(op, chi, g):
    """W-adjoint of apply_single_scale with a callable piece."""
    if not op.curve.invertible:
        raise InvertibilityError(f"{op.curve.name}: adjoint needs invertible γ_t")
    g = grid_function(g, op.S.size)
    return op.psi2 * op.transport(op.psi1 * g, op.coefficients(chi), 1.0, adjoint=True)


def adjoint_full(op, g):
    g = grid_function(g, op.S.size)
    out = np.zeros(op.S.size, dtype=np.result_type(g, float))
    for j in range(op.J + 1):
        out += adjoint_apply(op, j, j, g)
    return out


def pairing(f, g, S):
    """⟨f, g⟩ = Σ w_i f_i g_i (bilinear; ``S`` is a cloud or a weight array)."""
    w = S.weights if hasattr(S, "weights") else np.asarray(S, dtype=float)
    return np.sum(w * np.asarray(f) * np.asarray(g))


def hilbert_monomial(S, alpha, f, a=0.25, t_min=None, panels=64):
    """Truncated p.v. ∫_{t_min<|t|<a} f(x − γ(t)) dt/t for γ(t) = (t^{α₁}, …, t^{αₙ}).

    Nodes come in ±t pairs; the one-sided integral runs over log t with a
    composite Gauss–Legendre rule.
    """
    from .geometry.curves import monomial_shift
    alpha = [float(v) for v in alpha]
    if len(alpha) != S.n:
        raise ContractViolation("one exponent per coordinate")
    if any(v <= 0 for v in alpha) or any(b <= c for c, b in zip(alpha, alpha[1:])):
        raise ContractViolation("exponents must satisfy 0 < α₁ < … < αₙ")
    f = grid_function(f, S.size)
    t_min = a * 1e-6 if t_min is None else float(t_min)
    if not 0 < t_min < a:
        raise ContractViolation("need 0 < t_min < a")
    u, w = _gl_rule(np.linspace(np.log(t_min), np.log(a), panels + 1))
    t = np.exp(u)
    shift = monomial_shift(alpha)
    sp = shift(t[:, None])
    sm = shift(-t[:, None])
    # dt/t = du, so the coefficient of f(x − γ(±t)) is ±w
    st = translation_stencil(S, np.concatenate([sp, sm]), np.concatenate([w, -w]))
    return st.apply(f, S.shape)


# support tracking


def displacement_constant(op, samples=64, seed=0):
    """𝔠* = max over sampled x, t-nodes and dilations i ≤ J of ρ(x, γ_{δ^i t}(x))/δ^i.

    Off-lattice endpoints are snapped to the nearest lattice point when the
    metric has no closed form.
    """
    S = op.S
    rng = np.random.default_rng(seed)
    rows = np.nonzero(op.psi1)[0]
    if rows.size == 0:
        return 0.0
    rows = rng.choice(rows, size=min(samples, rows.size), replace=False)
    x = S.points[rows]
    best = 0.0
    lo, h, shape = _lattice(S)
    for i in range(op.J + 1):
        s = op.delta ** i
        for t in op.t_nodes:
            tt = np.broadcast_to(t * s, (rows.size, op.curve.k))
            y = op.curve(tt, x)
            try:
                d = S.metric._pair(x, y)
            except NotImplementedError:
                snap = np.clip(np.rint((y - lo) / h).astype(np.int64), 0, shape - 1)
                d = S.metric.pair(rows, np.ravel_multi_index(tuple(snap.T), tuple(shape)))
            best = max(best, float(np.max(d)) / s)
    return best


def kappa_prime(op, G, c_star=None):
    """κ′ = 𝔠₁/δ with 𝔠₁ = max(3𝔠, κ(𝔠 + 𝔠*)), 𝔠* from support tracking."""
    c_star = displacement_constant(op) / G.L if c_star is None else c_star
    c1 = max(3 * G.C, G.S.kappa * (G.C + c_star))
    return c1 / G.delta, c1, c_star


def support_check(op, G, cubes, kprime):
    """Count cubes Q whose T_Q(1_Q) support leaves B(x_c(Q), κ′ℓ(Q)).

    Returns (violations, worst ratio max ρ(x_c, y)/ℓ(Q) over the support).
    """
    S = G.S
    bad, worst = 0, 0.0
    for Q in cubes:
        if Q.k is None:
            continue
        ell = G.ell(Q.k)
        f = np.zeros(S.size)
        f[Q.members] = 1.0
        out = apply_truncated(op, f, ell)
        supp = np.nonzero(out)[0]
        if supp.size == 0:
            continue
        d = S.metric.pair(np.full(supp.size, Q.center), supp)
        ratio = float(np.max(d)) / ell
        worst = max(worst, ratio)
        if ratio >= kprime:
            bad += 1
    return bad, worst


def inner_mask(op):
    """Boolean mask of cloud points inside the operator's inner region."""
    lo, hi = op.inner
    return np.all((op.S.points >= lo) & (op.S.points <= hi), axis=1)
