import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsedom.dyadic import build_grid
from sparsedom.errors import ContractViolation
from sparsedom.operators import apply_full
from sparsedom.sht import lattice_cloud
from sparsedom.weights import (Weight, a_p_constant, alpha_exponent, constant_weight, make_weight, power_weight,
                               product_weight, rh_constant, weighted_norm_check)


def enumerate_a_p(G, w, p, k_max=None):
    """Oracle: loop over every cube's member list."""
    pp = p / (p - 1)
    best = 0.0
    for Q in G:
        if k_max is not None and Q.k > k_max:
            continue
        m = Q.members
        mu = G.S.weights[m]
        a = np.sum(mu * w[m]) / mu.sum()
        b = np.sum(mu * w[m] ** (1 - pp)) / mu.sum()
        best = max(best, a * b ** (p - 1))
    return best


def enumerate_rh(G, w, p, k_max=None):
    best = 0.0
    for Q in G:
        if k_max is not None and Q.k > k_max:
            continue
        m = Q.members
        mu = G.S.weights[m]
        best = max(best, (np.sum(mu * w[m] ** p) / mu.sum()) ** (1 / p) / (np.sum(mu * w[m]) / mu.sum()))
    return best


@pytest.fixture(scope="module")
def line():
    S = lattice_cloud([-1.0], [1.0], [256])
    return S, build_grid(S, 0.5, seed=0)


class TestConstants:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_unit_weight(self, parabola_grid, p):
        one = constant_weight(parabola_grid.S)
        assert a_p_constant(one, p, parabola_grid) == 1.0
        assert rh_constant(one, p, parabola_grid) == pytest.approx(1.0, rel=1e-14)

    def test_scale_invariance(self, parabola_grid):
        w = power_weight(parabola_grid.S, 0.5, axis=0)
        cw = Weight(7.25 * w.values)
        assert a_p_constant(cw, 2, parabola_grid) == pytest.approx(a_p_constant(w, 2, parabola_grid), rel=1e-12)
        assert rh_constant(cw, 3, parabola_grid) == pytest.approx(rh_constant(w, 3, parabola_grid), rel=1e-12)

    def test_power_on_line_against_enumeration(self, line):
        S, G = line
        w = power_weight(S, 0.5)
        A = a_p_constant(w, 2, G)
        RH = rh_constant(w, 2, G)
        assert A == pytest.approx(enumerate_a_p(G, w.values, 2), rel=1e-12)
        assert RH == pytest.approx(enumerate_rh(G, w.values, 2), rel=1e-12)
        # recorded on first run (256 cells, δ = 1/2, seed 0)
        assert A == pytest.approx(1.3609814998304088, rel=1e-9)
        assert RH == pytest.approx(1.0789787544364389, rel=1e-9)

    @given(st.floats(1.2, 4.0))
    @settings(max_examples=20, deadline=None)
    def test_duality(self, line, p):
        S, G = line
        w = power_weight(S, 0.5)
        pp = p / (p - 1)
        dual = Weight(w.values ** (1 - pp))
        assert a_p_constant(w, p, G) == pytest.approx(a_p_constant(dual, pp, G) ** (p - 1), abs=1e-10)

    def test_reverse_holder_at_least_one(self, parabola_grid, rng):
        w = Weight(np.exp(rng.standard_normal(parabola_grid.S.size)))
        for p in (1.5, 2, 4):
            assert rh_constant(w, p, parabola_grid) >= 1.0

    def test_refinement_is_monotone(self, line):
        S, G = line
        w = power_weight(S, 0.5).values
        a = [enumerate_a_p(G, w, 2, k) for k in G.generations]
        r = [enumerate_rh(G, w, 2, k) for k in G.generations]
        assert all(x <= y for x, y in zip(a, a[1:])) and all(x <= y for x, y in zip(r, r[1:]))
        assert a[-1] == pytest.approx(a_p_constant(Weight(w), 2, G), rel=1e-12)

    def test_clamp_warning(self, line):
        S, G = line
        v = np.full(S.size, 1e-40)
        with pytest.warns(RuntimeWarning):
            a_p_constant(Weight(v), 2, G)


class TestWeightSpecs:
    def test_rejects_nonpositive(self):
        with pytest.raises(ContractViolation):
            Weight(np.array([1.0, 0.0]))
        with pytest.raises(ContractViolation):
            Weight(np.array([1.0, np.inf]))

    def test_families(self, square):
        assert np.all(make_weight(square, {"family": "constant", "c": 2.0}).values == 2.0)
        w = make_weight(square, {"family": "power", "beta": 0.5, "axis": 0})
        assert np.allclose(w.values, np.abs(square.points[:, 0]) ** 0.5)
        p = product_weight(square, [1.0, 2.0])
        assert np.allclose(p.values, np.abs(square.points[:, 0]) * square.points[:, 1] ** 2)
        with pytest.raises(ContractViolation):
            make_weight(square, {"family": "gaussian"})


class TestAlpha:
    def test_quoted_example(self):
        assert alpha_exponent(1, 1.5, 2) == 2.0

    def test_acceptance_exponents(self):
        assert alpha_exponent(1.2, 2, 3) == pytest.approx(2.0)

    def test_order_required(self):
        with pytest.raises(ContractViolation):
            alpha_exponent(2, 1.5, 3)


class TestWeightedNorm:
    def test_unit_weight_bound_is_one(self, parabola_grid, parabola_op, rng):
        one = constant_weight(parabola_grid.S)
        tests = [rng.standard_normal(parabola_grid.S.size) for _ in range(3)]
        chk = weighted_norm_check(lambda f: apply_full(parabola_op, f), parabola_grid, one, 2, 1.2, 3, tests)
        assert chk.bound == 1.0 and np.isfinite(chk.C_emp)

    def test_power_weight_on_parabola(self, parabola_grid, parabola_op):
        from sparsedom.analysis import analytic_fields
        S = parabola_grid.S
        w = power_weight(S, 0.5, axis=0)
        tests = analytic_fields(S, 5, seed=2, lower=parabola_op.inner[0], upper=parabola_op.inner[1])
        chk = weighted_norm_check(lambda f: apply_full(parabola_op, f), parabola_grid, w, 2, 1.2, 3, tests)
        assert chk.alpha == pytest.approx(2.0)
        assert np.isfinite(chk.bound) and 0 < chk.C_emp < np.inf
        assert chk.ok == (chk.C_emp <= chk.C_cal * chk.bound)

    def test_exponent_order(self, parabola_grid):
        with pytest.raises(ContractViolation):
            weighted_norm_check(lambda f: f, parabola_grid, constant_weight(parabola_grid.S), 2, 3, 4, [])
