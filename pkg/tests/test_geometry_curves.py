import numpy as np
import pytest

from sparsedom.errors import CurvatureError, ResolutionError
from sparsedom.geometry import (VectorField, curvature_cj_check, expand_taylor_fields, generate_graded_system,
                                hormander_type, model_curve, taylor_remainder)
from sparsedom.geometry.curves import MAX_TAYLOR_ORDER
from sparsedom.geometry.models import euclidean_system
from sparsedom.geometry.polynomial import Polynomial

MODEL_NAMES = ["parabola", "flat_line", "translation", "grushin_coupled", "monomial123"]


def fields_by_alpha(curve, order):
    return {al: X for al, X in expand_taylor_fields(curve, order)}


@pytest.mark.parametrize("name", MODEL_NAMES + ["exponential"])
def test_curve_identity_and_inverse(name):
    c = model_curve(name)
    assert c.check_identity() <= 1e-12
    assert c.check_inverse() <= 1e-8


class TestTaylorFields:
    def test_identity_curve_gives_zero_fields(self):
        fs = expand_taylor_fields(model_curve("identity"), 3)
        assert all(X.is_zero() for _, X in fs)

    def test_parabola_fields(self):
        fs = fields_by_alpha(model_curve("parabola"), 3)
        assert fs[(1,)].same_as(VectorField.coordinate(2, 0, -1))
        assert fs[(2,)].same_as(VectorField.coordinate(2, 1, -2))

    def test_coupled_curve_has_x_dependent_component(self):
        # γ_{εt}∘γ_t^{-1}(x) differentiated at ε = 1 is (t, t x₁ − t²)
        fs = fields_by_alpha(model_curve("grushin_coupled"), 3)
        x1 = Polynomial.variable(2, 0)
        assert fs[(1,)].same_as(VectorField(2, polys=[Polynomial.constant(2, 1), x1]))
        assert fs[(2,)].same_as(VectorField.coordinate(2, 1, -1))

    def test_order_limit(self):
        with pytest.raises(ResolutionError):
            expand_taylor_fields(model_curve("parabola"), MAX_TAYLOR_ORDER + 1)

    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_remainder_exponent(self, N):
        ts = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
        _, defects, slope = taylor_remainder(model_curve("exponential"), N, ts)
        assert np.all(defects > 0)
        assert slope >= N - 0.2


class TestHormander:
    def test_spanning_coordinates(self):
        assert hormander_type(euclidean_system().fields, [0, 0], 3) == 1

    def test_grushin_pair_needs_one_bracket(self):
        fs = [VectorField.coordinate(2, 0), VectorField(2, polys=[Polynomial.zero(2), Polynomial.variable(2, 0)])]
        assert hormander_type(fs, [0, 0], 3) == 2

    def test_degenerate_line_field(self):
        X = VectorField(1, polys=[Polynomial.variable(1, 0)])
        assert hormander_type([X], [0.0], 5) is None


class TestGradedSystem:
    def test_parabola_system(self):
        S = generate_graded_system(model_curve("parabola"), 2)
        assert S.q == 2
        assert sorted(S.degrees) == [1, 2]
        pairs = dict(zip(S.degrees, S.fields))
        assert pairs[1].same_as(VectorField.coordinate(2, 0, -1))
        assert pairs[2].same_as(VectorField.coordinate(2, 1, -2))

    def test_bracket_closure_adds_dy(self):
        X = VectorField.coordinate(2, 0)
        Y = VectorField(2, polys=[Polynomial.zero(2), Polynomial.variable(2, 0)])
        S = generate_graded_system([(X, 1), (Y, 1)], 2)
        assert any(Z.same_as(VectorField.coordinate(2, 1), up_to_sign=True) and d == 2
                   for Z, d in zip(S.fields, S.degrees))

    def test_identity_curve_raises(self):
        with pytest.raises(CurvatureError):
            generate_graded_system(model_curve("identity"), 3)


class TestCurvature:
    def test_parabola_witness(self):
        w = curvature_cj_check(model_curve("parabola"), 4)
        assert w is not None and w.magnitude > 0

    def test_flat_line_absent(self):
        assert curvature_cj_check(model_curve("flat_line"), 4) is None

    def test_translation_order_zero(self):
        w = curvature_cj_check(model_curve("translation"), 3)
        assert w is not None and sum(w.beta) == 0

    @pytest.mark.parametrize("name", MODEL_NAMES)
    def test_agrees_with_hormander(self, name):
        c = model_curve(name)
        cj = curvature_cj_check(c, 6) is not None
        fields = [X for _, X in expand_taylor_fields(c, 4)]
        h = hormander_type(fields, c.base_point, 4) is not None
        assert cj == h
