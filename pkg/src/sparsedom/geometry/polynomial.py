"""Sparse multivariate polynomials with exact coefficient arithmetic.

Coefficients are plain Python numbers (int, Fraction or float), so integer
and rational inputs stay exact under addition, multiplication and
differentiation.
"""
from fractions import Fraction
from numbers import Number

import numpy as np


def _clean(value):
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value.numerator)
    return value


class Polynomial:
    """Polynomial in n variables stored as {exponent tuple: coefficient}."""

    __slots__ = ("n", "terms")

    def __init__(self, n, terms=None):
        self.n = int(n)
        clean = {}
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.n or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent {exp} for {self.n} variables")
            if c != 0:
                clean[exp] = clean.get(exp, 0) + _clean(c)
        self.terms = {e: c for e, c in clean.items() if c != 0}

    # constructors
    @classmethod
    def constant(cls, n, c):
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n, i):
        exp = [0] * n
        exp[i] = 1
        return cls(n, {tuple(exp): 1})

    @classmethod
    def zero(cls, n):
        return cls(n, {})

    # algebra
    def is_zero(self):
        return not self.terms

    def degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def depends_on(self, i):
        return any(e[i] > 0 for e in self.terms)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Polynomial(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Polynomial(self.n, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, Number):
            other = Polynomial.constant(self.n, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, tuple(sorted(self.terms.items()))))

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.n != self.n:
                raise ValueError("polynomials live in different dimensions")
            return other
        if isinstance(other, Number):
            return Polynomial.constant(self.n, other)
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def diff(self, i):
        out = {}
        for e, c in self.terms.items():
            if e[i] > 0:
                e2 = list(e)
                e2[i] -= 1
                out[tuple(e2)] = out.get(tuple(e2), 0) + c * e[i]
        return Polynomial(self.n, out)

    def max_abs_coefficient(self):
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    # evaluation
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            term = np.full(pts.shape[0], float(c))
            for i, k in enumerate(e):
                if k:
                    term = term * pts[:, i] ** k
            out += term
        return out[0] if single else out

    # serialization
    def to_list(self):
        return [[list(e), _serial_coef(c)] for e, c in sorted(self.terms.items())]

    @classmethod
    def from_list(cls, n, items):
        terms = {}
        for exp, c in items:
            terms[tuple(exp)] = _parse_coef(c)
        return cls(n, terms)

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"x{i + 1}^{k}" if k > 1 else f"x{i + 1}" for i, k in enumerate(e) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


def _serial_coef(c):
    if isinstance(c, Fraction):
        return f"{c.numerator}/{c.denominator}"
    if isinstance(c, int):
        return c
    return float(c)


def _parse_coef(c):
    if isinstance(c, str):
        return _clean(Fraction(c))
    return c
