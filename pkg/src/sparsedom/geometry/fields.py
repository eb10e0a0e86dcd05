"""Vector fields, graded field systems, brackets and flows."""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .._validation import as_points
from ..errors import ContractViolation, DomainExitError
from .polynomial import Polynomial

FD_BASE_STEP = 1e-3


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower, upper] in R^n."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise ContractViolation("box bounds must satisfy lower < upper per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, n, radius=1.0):
        return cls((-radius,) * n, (radius,) * n)

    @property
    def n(self):
        return len(self.lower)

    @property
    def widths(self):
        return np.array(self.upper) - np.array(self.lower)

    def contains(self, pts, tol=1e-12):
        pts = np.atleast_2d(pts)
        lo = np.array(self.lower) - tol
        hi = np.array(self.upper) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def fd_step(self):
        return FD_BASE_STEP * float(np.max(self.widths)) / 2.0


def richardson_jacobian(func, pts, step):
    """Jacobian of a vectorized map R^n -> R^m at each row of pts.

    Central differences at steps h and h/2 combined by one Richardson pass.
    Returns an array of shape (len(pts), m, n).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[1]
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0

        def central(h):
            return (np.asarray(func(pts + h * e)) - np.asarray(func(pts - h * e))) / (2 * h)

        d1 = central(step)
        d2 = central(step / 2)
        cols.append((4 * d2 - d1) / 3)
    return np.stack(cols, axis=-1)


class VectorField:
    """First order differential operator Σ c_i(x) ∂_i.

    Either ``polys`` (a list of n Polynomials) or ``func`` (vectorized map
    (m, n) -> (m, n)) must be given. Polynomial fields bracket exactly.
    """

    def __init__(self, n, func=None, polys=None, name=None):
        self.n = int(n)
        if polys is not None:
            polys = [p if isinstance(p, Polynomial) else Polynomial.constant(self.n, p) for p in polys]
            if len(polys) != self.n or any(p.n != self.n for p in polys):
                raise ContractViolation("polynomial field needs n polynomials in n variables")
        if func is None and polys is None:
            raise ContractViolation("vector field needs func or polys")
        self.polys = polys
        self._func = func
        self.name = name

    @classmethod
    def from_polys(cls, polys, name=None):
        return cls(polys[0].n, polys=list(polys), name=name)

    @classmethod
    def coordinate(cls, n, i, scale=1):
        polys = [Polynomial.zero(n) for _ in range(n)]
        polys[i] = Polynomial.constant(n, scale)
        return cls(n, polys=polys)

    @property
    def is_polynomial(self):
        return self.polys is not None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        if self.polys is not None:
            out = np.stack([p(pts) for p in self.polys], axis=1)
        else:
            out = np.asarray(self._func(pts), dtype=float).reshape(pts.shape[0], self.n)
        return out[0] if single else out

    def evaluate_generic(self, x):
        """Evaluate through the non-polynomial path when one exists."""
        if self._func is None:
            return self(x)
        x = np.asarray(x, dtype=float)
        pts = x[None, :] if x.ndim == 1 else x
        out = np.asarray(self._func(pts), dtype=float).reshape(pts.shape[0], self.n)
        return out[0] if x.ndim == 1 else out

    def is_zero(self, box=None, samples=64):
        if self.polys is not None:
            return all(p.is_zero() for p in self.polys)
        box = box or Box.cube(self.n)
        rng = np.random.default_rng(0)
        pts = np.array(box.lower) + rng.random((samples, self.n)) * box.widths
        return bool(np.max(np.abs(self(pts))) < 1e-12)

    def scaled(self, c):
        if self.polys is not None:
            return VectorField(self.n, polys=[c * p for p in self.polys], name=self.name)
        f = self._func
        return VectorField(self.n, func=lambda x: c * f(x), name=self.name)

    def __add__(self, other):
        if self.polys is not None and other.polys is not None:
            return VectorField(self.n, polys=[a + b for a, b in zip(self.polys, other.polys)])
        return VectorField(self.n, func=lambda x: self(x) + other(x))

    def __neg__(self):
        return self.scaled(-1)

    def __sub__(self, other):
        return self + (-other)

    def same_as(self, other, up_to_sign=False):
        if self.polys is None or other.polys is None:
            return False
        if all(a == b for a, b in zip(self.polys, other.polys)):
            return True
        return up_to_sign and all(a == -b for a, b in zip(self.polys, other.polys))

    def depends_on(self, i):
        if self.polys is None:
            return True
        return any(p.depends_on(i) for p in self.polys)

    def to_dict(self):
        if self.polys is None:
            raise ContractViolation("only polynomial fields serialize")
        return {"components": [p.to_list() for p in self.polys]}

    @classmethod
    def from_dict(cls, n, data, name=None):
        return cls(n, polys=[Polynomial.from_list(n, c) for c in data["components"]], name=name)

    def __repr__(self):
        if self.polys is not None:
            parts = [f"({p})d{i + 1}" for i, p in enumerate(self.polys) if not p.is_zero()]
            return " + ".join(parts) if parts else "0"
        return f"VectorField(n={self.n}, {self.name or 'generic'})"


def lie_bracket(X, Y, step=None):
    """[X, Y] = XY - YX as a first order field."""
    if X.n != Y.n:
        raise ContractViolation("fields must share dimension")
    n = X.n
    if X.is_polynomial and Y.is_polynomial:
        comps = []
        for i in range(n):
            c = Polynomial.zero(n)
            for j in range(n):
                c = c + X.polys[j] * Y.polys[i].diff(j) - Y.polys[j] * X.polys[i].diff(j)
            comps.append(c)
        return VectorField(n, polys=comps)
    h = step if step is not None else FD_BASE_STEP

    def func(pts):
        jy = richardson_jacobian(Y, pts, h)
        jx = richardson_jacobian(X, pts, h)
        return np.einsum("mij,mj->mi", jy, X(pts)) - np.einsum("mij,mj->mi", jx, Y(pts))

    return VectorField(n, func=func)


@dataclass
class GradedFieldSystem:
    """Finite list of vector fields with positive integer formal degrees."""

    fields: list
    degrees: list
    box: Box = None
    labels: list = field(default=None)

    def __post_init__(self):
        if not self.fields:
            raise ContractViolation("field list must be nonempty")
        if len(self.fields) != len(self.degrees):
            raise ContractViolation("one degree per field")
        n = self.fields[0].n
        if any(X.n != n for X in self.fields):
            raise ContractViolation("all fields must share dimension")
        self.degrees = [int(d) for d in self.degrees]
        if any(d < 1 for d in self.degrees):
            raise ContractViolation("degrees must be >= 1")
        if self.box is None:
            self.box = Box.cube(n)
        if self.labels is None:
            self.labels = [X.name or f"X{i + 1}" for i, X in enumerate(self.fields)]

    @property
    def n(self):
        return self.fields[0].n

    @property
    def q(self):
        return len(self.fields)

    @property
    def max_degree(self):
        return max(self.degrees)

    @property
    def zero_flags(self):
        return [X.is_zero(self.box) for X in self.fields]

    @property
    def is_polynomial(self):
        return all(X.is_polynomial for X in self.fields)

    def evaluate(self, x):
        """Array of shape (q, n) (single point) or (m, q, n)."""
        x = np.asarray(x, dtype=float)
        vals = [X(x) for X in self.fields]
        return np.stack(vals, axis=-2)

    def scaled_fields(self, scale):
        return [X.scaled(scale ** d) for X, d in zip(self.fields, self.degrees)]

    def invariant_axes(self):
        """Coordinates that no coefficient depends on (translation symmetries)."""
        if not self.is_polynomial:
            return []
        return [i for i in range(self.n) if not any(X.depends_on(i) for X in self.fields)]

    def subsets(self):
        return combinations(range(self.q), self.n)

    def to_dict(self):
        return {
            "dimension": self.n,
            "box": {"lower": list(self.box.lower), "upper": list(self.box.upper)},
            "fields": [
                {"label": lab, "degree": d, **X.to_dict()}
                for X, d, lab in zip(self.fields, self.degrees, self.labels)
            ],
        }

    @classmethod
    def from_dict(cls, data):
        n = int(data["dimension"])
        box = data.get("box")
        box = Box(box["lower"], box["upper"]) if box else Box.cube(n)
        fields, degrees, labels = [], [], []
        for item in data["fields"]:
            fields.append(VectorField.from_dict(n, item, name=item.get("label")))
            degrees.append(int(item["degree"]))
            labels.append(item.get("label") or f"X{len(labels) + 1}")
        return cls(fields, degrees, box, labels)


def flow(X, t, x, step=1e-2, box=None):
    """Integrate φ' = X(φ) from x for time t with classical RK4.

    ``x`` may be a single point or an (m, n) array. Raises DomainExitError if
    any trajectory leaves ``box``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    y = (x[None, :] if single else x).copy()
    t = float(t)
    if t == 0.0:
        return y[0] if single else y
    nsteps = max(1, int(np.ceil(abs(t) / step - 1e-12)))
    h = t / nsteps
    for _ in range(nsteps):
        k1 = X(y)
        k2 = X(y + 0.5 * h * k1)
        k3 = X(y + 0.5 * h * k2)
        k4 = X(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if box is not None and not np.all(box.contains(y, tol=1e-9)):
            raise DomainExitError("flow left the configured box")
    return y[0] if single else y


def flow_many(X, times, pts, step=1e-2):
    """Flow each row of pts for its own time (vectorized RK4, no box check)."""
    pts = as_points(pts)
    times = np.asarray(times, dtype=float).reshape(-1)
    if np.all(times == 0):
        return pts.copy()
    nsteps = max(1, int(np.ceil(np.max(np.abs(times)) / step - 1e-12)))
    h = (times / nsteps)[:, None]
    y = pts.copy()
    for _ in range(nsteps):
        k1 = X(y)
        k2 = X(y + 0.5 * h * k1)
        k3 = X(y + 0.5 * h * k2)
        k4 = X(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def combination_field(fields, coeffs):
    """Σ coeffs_i fields_i as one field (exact for polynomial inputs)."""
    out = fields[0].scaled(coeffs[0])
    for X, c in zip(fields[1:], coeffs[1:]):
        out = out + X.scaled(c)
    return out


def span_rank(vectors, rel_tol=1e-9, abs_tol=1e-12):
    """Numerical rank with the singular-value threshold rel_tol·σ_max."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.size == 0:
        return 0
    s = np.linalg.svd(vectors, compute_uv=False)
    if s.size == 0 or s[0] <= abs_tol:
        return 0
    return int(np.sum(s > max(rel_tol * s[0], abs_tol)))
