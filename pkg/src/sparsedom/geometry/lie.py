"""Bracket closure, Hörmander type and graded system generation."""
import numpy as np

from .._validation import as_point, check_int
from ..errors import CurvatureError
from .curves import CurveFamily, MAX_TAYLOR_ORDER, expand_taylor_fields
from .fields import GradedFieldSystem, VectorField, lie_bracket, span_rank


def _as_field_list(source):
    if isinstance(source, GradedFieldSystem):
        return list(source.fields)
    out = []
    for item in source:
        out.append(item[1] if isinstance(item, tuple) else item)
    return out


def bracket_layers(fields, max_length):
    """Right-nested brackets grouped by length: layer m holds [X_i1,[…,X_im]]."""
    layers = [list(fields)]
    for _ in range(max_length - 1):
        nxt = []
        for X in fields:
            for B in layers[-1]:
                C = lie_bracket(X, B)
                if C.is_polynomial and C.is_zero():
                    continue
                nxt.append(C)
        layers.append(nxt)
    return layers


def hormander_type(source, x, M_max):
    """Smallest m ≤ M_max with brackets of length ≤ m spanning R^n at x, else None."""
    M_max = check_int(M_max, "M_max", low=1)
    fields = [X for X in _as_field_list(source) if not (X.is_polynomial and X.is_zero())]
    if not fields:
        return None
    n = fields[0].n
    x = as_point(x, n)
    vecs = []
    layer = list(fields)
    for m in range(1, M_max + 1):
        if m > 1:
            nxt = []
            for X in fields:
                for B in layer:
                    C = lie_bracket(X, B)
                    if C.is_polynomial and C.is_zero():
                        continue
                    nxt.append(C)
            layer = nxt
        vecs.extend(np.atleast_2d(X(x)) for X in layer)
        if vecs and span_rank(np.vstack(vecs)) == n:
            return m
        if not layer:
            return None
    return None


def _is_duplicate(X, d, kept, box):
    for Y, e in kept:
        if e != d:
            continue
        if X.is_polynomial and Y.is_polynomial:
            if X.same_as(Y, up_to_sign=True):
                return True
        else:
            rng = np.random.default_rng(1)
            pts = np.array(box.lower) + box.widths * rng.random((16, X.n))
            a, b = X(pts), Y(pts)
            if np.allclose(a, b, atol=1e-10) or np.allclose(a, -b, atol=1e-10):
                return True
    return False


def _nonzero(X, box):
    return not X.is_zero(box)


def bracket_closure(base, max_degree, box):
    """All iterated brackets of (field, degree) pairs with degree ≤ max_degree."""
    kept = []
    for X, d in base:
        if d <= max_degree and _nonzero(X, box) and not _is_duplicate(X, d, kept, box):
            kept.append((X, d))
    changed = True
    while changed:
        changed = False
        current = list(kept)
        for i, (X, d1) in enumerate(current):
            for Y, d2 in current[i + 1:]:
                if d1 + d2 > max_degree:
                    continue
                C = lie_bracket(X, Y)
                if not _nonzero(C, box) or _is_duplicate(C, d1 + d2, kept, box):
                    continue
                kept.append((C, d1 + d2))
                changed = True
    kept.sort(key=lambda p: p[1])
    return kept


def generate_graded_system(source, m0, base_point=None, box=None):
    """Build a graded system (Steps I–III) from a curve or from graded fields.

    ``source`` is a CurveFamily, a GradedFieldSystem, or a list of
    (VectorField, degree) pairs. Raises CurvatureError when no Hörmander
    type ≤ m0 is detected at the base point.
    """
    m0 = check_int(m0, "m0", low=1)
    if isinstance(source, CurveFamily):
        curve = source
        box = box or curve.box
        x0 = np.asarray(base_point if base_point is not None else curve.base_point, dtype=float)
        taylor = None
        for order in range(2, MAX_TAYLOR_ORDER + 1):
            fields = expand_taylor_fields(curve, order)
            cand = [(X, sum(al)) for al, X in fields if _nonzero(X, box)]
            if cand and hormander_type([X for X, _ in cand], x0, m0) is not None:
                taylor = cand
                break
        if taylor is None:
            raise CurvatureError(f"{curve.name}: no Hörmander type ≤ {m0} at the base point")
        expand = lambda order: [(X, sum(al)) for al, X in expand_taylor_fields(curve, order)]
    else:
        pairs = list(zip(source.fields, source.degrees)) if isinstance(source, GradedFieldSystem) else list(source)
        box = box or (source.box if isinstance(source, GradedFieldSystem) else None)
        n = pairs[0][0].n
        if box is None:
            from .fields import Box
            box = Box.cube(n)
        x0 = np.asarray(base_point if base_point is not None else np.zeros(n), dtype=float)
        taylor = [(X, d) for X, d in pairs if _nonzero(X, box)]
        if not taylor or hormander_type([X for X, _ in taylor], x0, m0) is None:
            raise CurvatureError(f"no Hörmander type ≤ {m0} at the base point")
        expand = None

    # Step I: shortest degree-ordered prefix of type ≤ m0
    taylor.sort(key=lambda p: p[1])
    chosen = []
    for X, d in taylor:
        chosen.append((X, d))
        if hormander_type([Y for Y, _ in chosen], x0, m0) is not None:
            break
    # Step II: commutators of length ≤ m0 with summed degrees
    layer = list(chosen)
    step2 = list(chosen)
    for _ in range(m0 - 1):
        nxt = []
        for X, d in chosen:
            for B, e in layer:
                C = lie_bracket(X, B)
                if _nonzero(C, box):
                    nxt.append((C, d + e))
        layer = nxt
        step2.extend(nxt)
    dmax = max(d for _, d in step2)
    # Step III: everything bracket-generated with degree ≤ dmax
    base = expand(dmax + 1) if expand is not None else taylor
    closed = bracket_closure(list(step2) + list(base), dmax, box)
    fields = [X for X, _ in closed]
    degrees = [d for _, d in closed]
    labels = [X.name or f"Y{i + 1}" for i, X in enumerate(fields)]
    return GradedFieldSystem(fields, degrees, box, labels)
