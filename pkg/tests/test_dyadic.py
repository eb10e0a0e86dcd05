import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsedom.dyadic import (adjacent_grids, build_grid, containing_cube, dilate, rescaled_grid, scale_shift,
                              verify_grid)
from sparsedom.errors import ContractViolation
from sparsedom.sht import lattice_cloud


class TestClassicalInterval:
    def test_standard_dyadic_intervals(self, interval_grid):
        G = interval_grid
        assert (G.k_min, G.k_max) == (0, 6)
        for k in G.generations:
            assert len(G.cubes[k]) == 2 ** k
            w = 2 ** (6 - k)
            for r, Q in enumerate(G.cubes[k]):
                assert np.array_equal(np.sort(Q.members), np.arange(r * w, (r + 1) * w))

    def test_axioms(self, interval_grid):
        assert verify_grid(interval_grid)["ok"]
        assert interval_grid.eps == pytest.approx(0.5)

    def test_generation_measures_sum_to_total(self, interval_grid, parabola_grid):
        for G in (interval_grid, parabola_grid):
            for k in G.generations:
                assert G.measures(k).sum() == pytest.approx(G.S.measure(), rel=1e-12)


class TestBuild:
    def test_parabola_axioms(self, parabola_grid):
        rep = verify_grid(parabola_grid)
        assert rep["ok"], rep
        assert np.isfinite(parabola_grid.C) and parabola_grid.eps >= 1e-3

    def test_parabola_eighth_baseline(self, parabola_cloud):
        G = build_grid(parabola_cloud, 0.125, seed=0)
        assert verify_grid(G)["ok"]
        # recorded on first build
        assert G.C == pytest.approx(1.9843134833004272, rel=1e-9)
        assert G.eps == pytest.approx(0.077880859375, rel=1e-12)

    def test_deterministic(self, square):
        assert build_grid(square, 0.25, seed=4).dump() == build_grid(square, 0.25, seed=4).dump()

    def test_theorem_mode_delta(self, square):
        with pytest.raises(ContractViolation):
            build_grid(square, 0.02, mode="theorem")
        G = build_grid(square, 1 / 128, mode="theorem")
        assert verify_grid(G)["ok"]

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.5])
    def test_delta_range(self, square, delta):
        with pytest.raises(ContractViolation):
            build_grid(square, delta)

    def test_unknown_mode(self, square):
        with pytest.raises(ContractViolation):
            build_grid(square, 0.25, mode="fast")

    def test_dump_has_one_line_per_cube(self, square_grid):
        lines = square_grid.dump().splitlines()
        assert len(lines) == len(square_grid) + 2
        assert lines[0].startswith("# dyadic grid")


class TestQueries:
    def test_dilate_one_contains_cube(self, parabola_grid):
        for Q in list(parabola_grid)[:40]:
            assert np.all(np.isin(Q.members, dilate(parabola_grid, Q, 1.0)))

    def test_dilate_huge_is_everything(self, parabola_grid):
        Q = parabola_grid.cubes[parabola_grid.k_max][0]
        assert dilate(parabola_grid, Q, 1e6).size == parabola_grid.S.size

    def test_dilate_three_on_interval(self, interval, interval_grid):
        G = interval_grid
        Q = G.cubes[5][10]
        x = interval.points[:, 0]
        expect = np.flatnonzero(np.abs(x - x[Q.center]) < 3 * G.C * G.ell(5))
        got = np.sort(dilate(G, Q, 3.0))
        assert np.array_equal(got, expect)
        # ℓ is a half side here, so the length is 3·𝔠·2^{-5}
        assert abs(np.ptp(x[got]) - 3 * G.C * 2 ** -5) <= 1 / 64

    def test_dilate_below_one(self, interval_grid):
        with pytest.raises(ContractViolation):
            dilate(interval_grid, interval_grid.cubes[1][0], 0.5)

    def test_center_is_in_its_cube(self, parabola_grid):
        for Q in parabola_grid:
            assert containing_cube(parabola_grid, Q.center, Q.k) is Q

    def test_interval_scan(self, interval, interval_grid):
        x = interval.points[:, 0]
        for i in np.random.default_rng(7).integers(0, 64, 20):
            Q = containing_cube(interval_grid, i, 5)
            lo = np.floor(32 * x[i]) / 32
            assert np.array_equal(np.sort(Q.members), np.flatnonzero((x >= lo) & (x < lo + 1 / 32)))

    def test_root_generation(self, parabola_grid):
        G = parabola_grid
        assert containing_cube(G, 17, G.k_min) is G.cubes[G.k_min][G.labels[G.k_min][17]]

    def test_out_of_range(self, parabola_grid):
        with pytest.raises(ContractViolation):
            containing_cube(parabola_grid, 0, parabola_grid.k_max + 1)

    @given(st.integers(0, 4095), st.data())
    @settings(max_examples=40, deadline=None)
    def test_contains_point(self, parabola_grid, x, data):
        k = data.draw(st.integers(parabola_grid.k_min, parabola_grid.k_max))
        assert x in containing_cube(parabola_grid, x, k).members


class TestRescaled:
    def test_scale_shift(self):
        assert scale_shift(0.25, 0.25 ** 3) == 3
        assert scale_shift(0.25, 1.0) == 0
        assert scale_shift(0.25, 0.25 ** 2.5) == 2

    def test_power_shift_is_identical(self, parabola_grid):
        G = parabola_grid
        V, N = rescaled_grid(G, G.delta ** 3)
        assert N == 3
        for k in G.generations:
            assert [Q.center for Q in V.cubes[k - 3]] == [Q.center for Q in G.cubes[k]]
            assert np.array_equal(V.labels[k - 3], G.labels[k])

    def test_unit_is_identity(self, parabola_grid):
        V, N = rescaled_grid(parabola_grid, 1.0)
        assert N == 0 and V.C == pytest.approx(parabola_grid.C)

    def test_fractional_power(self, parabola_grid):
        G = parabola_grid
        V, N = rescaled_grid(G, G.delta ** 2.5)
        assert N == 2
        assert V.delta == G.delta and V.eps == G.eps
        assert V.C <= G.C / G.delta
        assert verify_grid(V)["ok"]


class TestAdjacent:
    def test_hypothesis_holds(self):
        assert 96 * 1 ** 6 / 128 <= 1

    def test_condition_rejected(self, square):
        with pytest.raises(ContractViolation):
            adjacent_grids(square, 0.25, [0, 1])

    def test_inner_ball_is_covered(self, square_grid):
        G = square_grid
        for Q in G.cubes[G.k_max][:20]:
            B = G.S.metric.ball(Q.center, G.ell(Q.k))
            assert np.all(np.isin(B, Q.members))

    def test_parabola_cover(self):
        S = lattice_cloud([-1, -1], [1, 1], [32, 128], "parabola")
        fam = adjacent_grids(S, 1 / 128)
        assert fam.failures == 0
        assert len(fam.balls) == 200 and np.isfinite(fam.c_tilde)
        for x, r, where in fam.balls[:30]:
            gi, k, rank = where
            B = S.metric.ball(x, r)
            assert np.all(np.isin(B, fam.grids[gi].cubes[k][rank].members))
