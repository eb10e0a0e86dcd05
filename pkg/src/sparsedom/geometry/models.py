"""Named graded field systems used by tests and presets."""
from .fields import Box, GradedFieldSystem, VectorField
from .polynomial import Polynomial


def _field(n, comps, name):
    polys = []
    for c in comps:
        if isinstance(c, Polynomial):
            polys.append(c)
        elif isinstance(c, dict):
            polys.append(Polynomial(n, c))
        else:
            polys.append(Polynomial.constant(n, c))
    return VectorField(n, polys=polys, name=name)


def euclidean_system(n=2, radius=1.0):
    fields = [VectorField.coordinate(n, i) for i in range(n)]
    for i, X in enumerate(fields):
        X.name = f"d{i + 1}"
    return GradedFieldSystem(fields, [1] * n, Box.cube(n, radius))


def grushin_system(radius=1.0):
    """{∂x (1), x∂y (1), ∂y (2)} on R²."""
    x = Polynomial.variable(2, 0)
    return GradedFieldSystem(
        [_field(2, [1, 0], "dx"), _field(2, [0, x], "x_dy"), _field(2, [0, 1], "dy")],
        [1, 1, 2], Box.cube(2, radius))


def parabola_system(radius=1.0):
    return GradedFieldSystem([_field(2, [-1, 0], "X1"), _field(2, [0, -2], "X2")], [1, 2], Box.cube(2, radius))


def monomial_system(radius=1.0):
    return GradedFieldSystem(
        [_field(3, [-1, 0, 0], "X1"), _field(3, [0, -2, 0], "X2"), _field(3, [0, 0, -3], "X3")],
        [1, 2, 3], Box.cube(3, radius))


def heisenberg_system(radius=1.0):
    """X = ∂x + 2y∂t, Y = ∂y − 2x∂t (degree 1), T = ∂t (degree 2)."""
    x = Polynomial.variable(3, 0)
    y = Polynomial.variable(3, 1)
    return GradedFieldSystem(
        [_field(3, [1, 0, 2 * y], "X"), _field(3, [0, 1, -2 * x], "Y"), _field(3, [0, 0, 1], "T")],
        [1, 1, 2], Box.cube(3, radius))


MODEL_SYSTEMS = {
    "euclidean": euclidean_system,
    "grushin": grushin_system,
    "parabola": parabola_system,
    "monomial123": monomial_system,
    "heisenberg": heisenberg_system,
}


def model_system(name, **kw):
    try:
        return MODEL_SYSTEMS[name](**kw)
    except KeyError as exc:
        raise KeyError(f"unknown model system {name!r}") from exc
