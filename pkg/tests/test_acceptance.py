"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the verdict lines
are also printed without ``-s``.
"""
import math
import time

import numpy as np
import pytest

from sparsedom import analysis, decomposition, dyadic, operators, sparse, weights
from sparsedom.geometry import curvature_cj_check, expand_taylor_fields, hormander_type, model_curve
from sparsedom.sht import lattice_cloud, metric_comparison, perfectness_constant

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    """Print one verdict line per criterion, then assert every check."""
    def report(n, checks, t0, **info):
        ok = all(checks.values())
        elapsed = time.perf_counter() - t0
        failed = [k for k, v in checks.items() if not v]
        extra = " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in info.items())
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s) {extra}"
                  + (f" failed={','.join(failed)}" if failed else ""))
        assert ok, failed
    return report


def parabola_setup(shape):
    S = lattice_cloud([-1.0, -1.0], [1.0, 1.0], list(shape), "parabola")
    G = dyadic.build_grid(S, 0.25, seed=0)
    op = operators.radon_operator(S, "parabola", a=0.25, delta=0.25, J=10)
    return S, G, op


@pytest.fixture(scope="module")
def clouds():
    return {
        "euclidean": lattice_cloud([0.0, 0.0], [1.0, 1.0], [64, 64]),
        "parabola": lattice_cloud([-1.0, -1.0], [1.0, 1.0], [32, 128], "parabola"),
        "grushin": lattice_cloud([-1.0, -1.0], [1.0, 1.0], [64, 64], "cc:grushin"),
    }


def chi_for(a):
    return lambda u: operators.plateau(np.abs(u[:, 0]), a / 2, a)


@pytest.mark.parametrize("name", ["euclidean", "parabola", "grushin"])
def test_1_dyadic_axioms(clouds, name, verdict):
    S = clouds[name]
    t0 = time.perf_counter()
    G = dyadic.build_grid(S, 0.25, seed=0)
    rep = dyadic.verify_grid(G)
    t = time.perf_counter() - t0
    checks = {k: v == 0 for k, v in rep.items() if k != "ok"}
    checks.update(points=S.size == 4096, C_finite=math.isfinite(G.C), eps=G.eps >= 1e-3, runtime=t <= 60)
    verdict(f"1[{name}]", checks, t0, C=G.C, eps=G.eps)


def test_2_three_lattice_cover(verdict):
    S = lattice_cloud([0.0, 0.0], [1.0, 1.0], [64, 64])
    t0 = time.perf_counter()
    assert S.kappa == 1.0 and 96 * S.kappa ** 6 / 128 <= 1
    fam = dyadic.adjacent_grids(S, 1 / 128, n_balls=200)
    t = time.perf_counter() - t0
    contained = all(np.all(fam.grids[gi].labels[k][S.metric.ball(x, r)] == rank)
                    for x, r, (gi, k, rank) in fam.balls)
    checks = {"balls": len(fam.balls) == 200, "failures": fam.failures == 0, "contained": contained,
              "runtime": t <= 120}
    verdict(2, checks, t0, c_tilde=fam.c_tilde, bound=fam.bound, grids=len(fam.grids))


def test_3_whitney_bounds(clouds, verdict):
    S = clouds["parabola"]
    t0 = time.perf_counter()
    G = dyadic.build_grid(S, 0.25, seed=0)
    op = operators.radon_operator(S, "parabola", a=0.25, delta=0.25, J=10)
    _, _, c_star = operators.kappa_prime(op, G)
    c_prime = sparse.select_whitney_constant(G, c_star)
    f = analysis.analytic_fields(S, 1, seed=7, lower=op.inner[0], upper=op.inner[1])[0]
    M = decomposition.dyadic_maximal(G, f)
    E = M > 2 * decomposition.set_average(S, f, np.arange(S.size))
    W = decomposition.whitney(G, E, c_prime)
    rep = decomposition.whitney_report(W, perfectness_constant(S))
    t = time.perf_counter() - t0
    checks = {"cover": rep["cover"], "disjoint": rep["disjoint"], "lower": rep["lower_violations"] == 0,
              "upper": rep["upper_violations"] == 0, "runtime": t <= 60}
    verdict(3, checks, t0, c_prime=c_prime, cubes=rep["cubes"], atoms=rep["atoms"],
            upper_violations=rep["upper_violations"])


def test_4_calderon_zygmund(clouds, verdict):
    S = clouds["parabola"]
    t0 = time.perf_counter()
    G = dyadic.build_grid(S, 0.25, seed=0)
    rng = np.random.default_rng(4)
    rec = mean = cx = 0.0
    support = good = True
    for _ in range(50):
        f = rng.standard_normal(S.size) * rng.random(S.size) ** 3
        lam = 4 * float(np.sum(S.weights * np.abs(f)) / S.measure())
        res = decomposition.cz_decompose(G, f, lam)
        b = np.zeros(S.size)
        covered = np.zeros(S.size, dtype=bool)
        for Q, bj in res.bad:
            support &= bj.shape == Q.members.shape and not covered[Q.members].any()
            covered[Q.members] = True
            b[Q.members] += bj
            mean = max(mean, abs(float(np.sum(S.weights[Q.members] * bj))))
        rec = max(rec, float(np.max(np.abs(f - res.g - b))))
        good &= bool(np.all(np.abs(res.g) <= res.C_X * lam * (1 + 1e-12)))
        cx = max(cx, res.C_X)
    t = time.perf_counter() - t0
    checks = {"reconstruction": rec <= 1e-12, "mean_zero": mean <= 1e-10, "support": support,
              "good_bound": good, "C_X": cx <= 10, "runtime": t <= 60}
    verdict(4, checks, t0, reconstruction=rec, max_mean=mean, C_X=cx)


def test_5_kernel_ladder(verdict):
    t0 = time.perf_counter()
    lad = operators.split_kernel(operators.hilbert_kernel(a=0.25), 0.25, 10)
    err = lad.reconstruction_error()
    ints = np.abs(lad.integrals()[1:])
    _, c1 = lad.norms()
    ratio = float(np.max(c1[1:]) / np.min(c1[1:]))
    checks = {"reconstruction": err <= 1e-8, "mean_zero": float(np.max(ints)) <= 1e-12, "c1_ratio": ratio <= 2}
    verdict(5, checks, t0, reconstruction=err, max_integral=float(np.max(ints)), c1_ratio=ratio)


def test_6_sparse_domination(verdict):
    t0 = time.perf_counter()
    max_C = {}
    all_ok = finite = True
    for shape in ((64, 256), (128, 512)):
        S, G, op = parabola_setup(shape)
        kp, _, c_star = operators.kappa_prime(op, G)
        c_prime = sparse.select_whitney_constant(G, c_star)
        fs = analysis.analytic_fields(S, 40, seed=1, lower=op.inner[0], upper=op.inner[1])
        Cs = []
        for f1, f2 in zip(fs[::2], fs[1::2]):
            F, tr = sparse.sparse_select(op, G, f1, f2, 0.5, 2.0, 3.0, kprime=kp, c_prime=c_prime)
            all_ok &= sparse.verify_sparse(F)[0] and tr.sound
            C = sparse.domination_check(op, F, f1, f2, 2.0, 3.0, kp, G)[2]
            finite &= math.isfinite(C)
            Cs.append(C)
        max_C[S.size] = max(Cs)
    lo, hi = max_C[2 ** 14], max_C[2 ** 16]
    drift = max(lo, hi) / min(lo, hi)
    t = time.perf_counter() - t0
    checks = {"verify_sparse": all_ok, "finite": finite, "drift": drift <= 2, "runtime": t <= 600}
    verdict(6, checks, t0, max_C_small=lo, max_C_large=hi, drift=drift)


def test_7_improving_contrast(verdict):
    t0 = time.perf_counter()
    a, r = 0.5, 2.0
    S = lattice_cloud([-1.0, -1.0], [1.0, 1.0], [512, 512])
    gain = {}
    for name in ("parabola", "flat_line"):
        op = operators.radon_operator(S, name, a=a, J=2)
        fr = analysis.improving_frontier(lambda f: operators.apply_single_scale(op, chi_for(a), f), S,
                                         analysis.refinement_families(op), r)
        gain[name] = 1 / r - fr
    gap = gain["parabola"] - gain["flat_line"]
    t = time.perf_counter() - t0
    verdict(7, {"gap": gap >= 0.2, "runtime": t <= 300}, t0, gain_parabola=gain["parabola"],
            gain_flat=gain["flat_line"], gap=gap)


def test_8_modulus(verdict):
    t0 = time.perf_counter()
    a = 0.5
    S = lattice_cloud([-1.0, -1.0], [1.0, 1.0], [256, 256])
    op = operators.radon_operator(S, "parabola", a=a, J=2)
    rng = np.random.default_rng(0)
    fs = [analysis.random_smooth_field(S, rng, op.psi2) for _ in range(3)]
    fs.append(rng.standard_normal(S.size) * op.psi2)
    bs = list(np.geomspace(1e-3, 1e-1, 9)) + [0.0]
    fit = analysis.modulus_exponent(lambda f: operators.apply_single_scale(op, chi_for(a), f), S,
                                    analysis.taylor_flow(op.curve), bs, fs, region=operators.inner_mask(op))
    zero = [d for b, d in fit.rows if b == 0.0][0]
    t = time.perf_counter() - t0
    checks = {"eta": fit.eta >= 0.1, "r2": fit.r2 >= 0.9, "zero": zero == 0.0, "runtime": t <= 300}
    verdict(8, checks, t0, eta=fit.eta, r2=fit.r2)


def test_9_weights(verdict):
    t0 = time.perf_counter()
    r, p, s = 1.2, 2.0, 3.0
    pp = p / (p - 1)
    ratios, unit, dual = [], True, 0.0
    for shape in ((32, 128), (64, 256)):
        S, G, op = parabola_setup(shape)
        w = weights.power_weight(S, 0.5, axis=0)
        unit &= weights.a_p_constant(weights.constant_weight(S), p, G) == 1.0
        dual = max(dual, abs(weights.a_p_constant(w, p, G)
                             - weights.a_p_constant(weights.Weight(w.values ** (1 - pp)), pp, G) ** (p - 1)))
        fs = analysis.analytic_fields(S, 20, seed=2, lower=op.inner[0], upper=op.inner[1])
        chk = weights.weighted_norm_check(lambda f: operators.apply_full(op, f), G, w, p, r, s, fs)
        ratios.append(chk.ratio)
    alpha = weights.alpha_exponent(r, p, s)
    drift = max(ratios) / min(ratios)
    t = time.perf_counter() - t0
    checks = {"unit_weight": unit, "duality": dual <= 1e-10, "drift": drift <= 2,
              "alpha": math.isfinite(alpha) and alpha > 0, "runtime": t <= 300}
    verdict(9, checks, t0, ratio_coarse=ratios[0], ratio_fine=ratios[1], alpha=alpha, duality_gap=dual)


def test_10_geometry_cross_check(clouds, verdict):
    t0 = time.perf_counter()
    agree = {}
    for name in ("parabola", "flat_line", "translation", "grushin_coupled", "monomial123"):
        c = model_curve(name)
        cj = curvature_cj_check(c, 6) is not None
        h = hormander_type([X for _, X in expand_taylor_fields(c, 4)], c.base_point, 4) is not None
        agree[name] = cj == h
    comparisons = {name: metric_comparison(S) for name, S in clouds.items()}
    checks = {f"agree.{k}": v for k, v in agree.items()}
    checks.update({f"metric.{k}": v["ok"] for k, v in comparisons.items()})
    verdict(10, checks, t0, **{f"C2_{k}": v["C2"] for k, v in comparisons.items()})
