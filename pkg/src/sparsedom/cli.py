"""Experiment harness: ``sparsedom <subcommand> [--config FILE] [--preset NAME]``.

Each subcommand writes CSV or structured-text reports plus a ``summary``
file of ``key = value`` lines with a pass/fail verdict per invariant. The
summary carries no timings, so identical configs and seeds reproduce it
byte for byte. Exit codes: 0 all invariants pass, 1 some invariant fails,
2 configuration error.
"""
import argparse
import copy
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analysis, decomposition, dyadic, operators, sht, sparse, weights
from .errors import ConfigError, ContractViolation, SparsedomError
from .geometry.curves import MODEL_CURVES

log = logging.getLogger("sparsedom")

SUBCOMMANDS = ("grid", "whitney", "cz", "kernel", "improve", "modulus", "sparse", "weights", "all")

DEFAULTS = {
    "seed": 0,
    "output": "sparsedom-out",
    "cloud": {"box_lower": [-1.0, -1.0], "box_upper": [1.0, 1.0], "resolution": [64, 256],
              "metric": "parabola"},
    "grid": {"delta": 0.25, "mode": "test", "centers": None},
    "operator": {"curve": "parabola", "kernel": "hilbert", "a": 0.25, "delta": 0.25, "J": 10},
    "exponents": {"r": 2.0, "s": 3.0},
    "sigma": 0.5,
    "samples": {"pairs": 20, "cz": 50, "zero_f1": False},
    "whitney": {"level": 2.0, "c_prime": None},
    "cz": {"level": 4.0},
    "kernel": {"a": 0.25, "delta": 0.25, "J": 10},
    "improve": {"resolution": 512, "a": 0.5, "J": 2, "r": 2.0, "curves": ["parabola", "flat_line"],
                "min_gap": 0.2},
    "modulus": {"resolution": 256, "a": 0.5, "J": 2, "curve": "parabola", "fields": 4,
                "b_values": [0.001, 0.00178, 0.00316, 0.00562, 0.01, 0.0178, 0.0316, 0.0562, 0.1]},
    "weights": {"weight": {"family": "power", "beta": 0.5, "axis": 0}, "r": 1.2, "p": 2.0, "s": 3.0,
                "tests": 20},
}

PRESETS = {
    "parabola": {},
    "interval": {
        "cloud": {"box_lower": [0.0], "box_upper": [1.0], "resolution": [64], "metric": "euclidean"},
        "grid": {"delta": 0.5, "centers": "dyadic"},
    },
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _unknown_keys(cfg, ref, prefix=""):
    bad = []
    for k, v in cfg.items():
        if k not in ref:
            bad.append(prefix + k)
        elif isinstance(ref[k], dict) and k != "weight":
            if not isinstance(v, dict):
                bad.append(prefix + k)
            else:
                bad.extend(_unknown_keys(v, ref[k], prefix + k + "."))
    return bad


def load_config(path=None, preset="parabola", seed=None, output=None):
    """Merge defaults, a preset and an optional YAML file, then validate."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    user = {}
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a mapping")
        bad = _unknown_keys(user, DEFAULTS)
        if bad:
            raise ConfigError(f"unknown config keys: {', '.join(bad)}")
    cfg = _merge(_merge(DEFAULTS, PRESETS[preset]), user)
    if seed is not None:
        cfg["seed"] = int(seed)
    if output is not None:
        cfg["output"] = str(output)
    validate(cfg)
    return cfg


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg):
    """Resolve names and check exponent constraints before any work is done."""
    c = cfg["cloud"]
    n = len(c["box_lower"])
    _require(len(c["box_upper"]) == n and len(c["resolution"]) == n, "cloud: box and resolution dimensions differ")
    _require(all(hi > lo for lo, hi in zip(c["box_lower"], c["box_upper"])), "cloud: box_upper must exceed box_lower")
    _require(all(int(m) >= 2 for m in c["resolution"]), "cloud: resolution must be >= 2 per axis")
    m = c["metric"]
    _require(m in sht.METRICS or (isinstance(m, str) and m.startswith("cc:")), f"cloud: unknown metric {m!r}")
    g = cfg["grid"]
    _require(0 < g["delta"] < 1, "grid: delta must lie in (0, 1)")
    _require(g["mode"] in ("test", "theorem"), f"grid: unknown mode {g['mode']!r}")
    _require(g["centers"] in (None, "dyadic"), "grid: centers must be null or 'dyadic'")
    if g["centers"] == "dyadic":
        _require(n == 1 and int(c["resolution"][0]) & (int(c["resolution"][0]) - 1) == 0,
                 "grid: dyadic centers need a 1-D cloud with 2^m points")
    o = cfg["operator"]
    _require(o["curve"] in MODEL_CURVES, f"operator: unknown curve {o['curve']!r}")
    _require(o["kernel"] in operators.KERNELS, f"operator: unknown kernel {o['kernel']!r}")
    _require(0 < o["delta"] < 1 and o["a"] > 0 and int(o["J"]) >= 1, "operator: need 0 < delta < 1, a > 0, J >= 1")
    e = cfg["exponents"]
    _require(1 <= e["r"] and 1 < e["s"], "exponents: need r >= 1 and s > 1")
    _require(0 < cfg["sigma"] < 1, "sigma must lie in (0, 1)")
    _require(int(cfg["samples"]["pairs"]) >= 1 and int(cfg["samples"]["cz"]) >= 1, "samples: counts must be >= 1")
    w = cfg["weights"]
    _require(1 <= w["r"] < w["p"] < w["s"], "weights: need 1 <= r < p < s")
    fam = w["weight"].get("family", "constant") if isinstance(w["weight"], dict) else None
    _require(fam in weights.WEIGHT_FAMILIES, f"weights: unknown weight family {fam!r}")
    for name in cfg["improve"]["curves"]:
        _require(name in MODEL_CURVES, f"improve: unknown curve {name!r}")
    _require(cfg["modulus"]["curve"] in MODEL_CURVES, f"modulus: unknown curve {cfg['modulus']['curve']!r}")
    _require(cfg["improve"]["r"] >= 1, "improve: r must be >= 1")
    return cfg


def _fmt(v):
    if isinstance(v, bool):
        return "pass" if v else "fail"
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.12g}"
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


class Report:
    """Single collector for summary values, invariant verdicts and files."""

    def __init__(self, out):
        self.out = Path(out)
        self.values = []
        self.checks = []

    def value(self, key, v):
        self.values.append((key, v))

    def check(self, key, ok):
        self.checks.append((key, bool(ok)))
        return bool(ok)

    def write(self, name, text):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)

    @property
    def ok(self):
        return all(ok for _, ok in self.checks)

    def summary(self):
        lines = [f"{k} = {_fmt(v)}" for k, v in self.values]
        lines += [f"invariant.{k} = {_fmt(ok)}" for k, ok in self.checks]
        lines.append(f"status = {_fmt(self.ok)}")
        return "\n".join(lines) + "\n"


class Context:
    """Lazily built shared objects (cloud, grid, operator) for one run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._cache = {}

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    @property
    def cloud(self):
        c = self.cfg["cloud"]
        return self._get("cloud", lambda: sht.lattice_cloud(c["box_lower"], c["box_upper"],
                                                            [int(m) for m in c["resolution"]], c["metric"]))

    @property
    def grid(self):
        g = self.cfg["grid"]

        def make():
            centers = _dyadic_centers(int(self.cfg["cloud"]["resolution"][0])) if g["centers"] else None
            return dyadic.build_grid(self.cloud, g["delta"], seed=self.cfg["seed"], centers=centers, mode=g["mode"])
        return self._get("grid", make)

    @property
    def op(self):
        o = self.cfg["operator"]
        return self._get("op", lambda: operators.radon_operator(self.cloud, o["curve"], o["kernel"], a=o["a"],
                                                                delta=o["delta"], J=int(o["J"])))

    @property
    def support(self):
        """(κ′, 𝔠₁, 𝔠*) of the operator on the grid."""
        return self._get("support", lambda: operators.kappa_prime(self.op, self.grid))


def _dyadic_centers(m_points):
    """Classical dyadic intervals on a cell-centred 1-D lattice of 2^m points."""
    m = int(round(math.log2(m_points)))
    out = {}
    for k in range(m + 1):
        w = 2 ** (m - k)
        out[k] = [i * w + max(w // 2 - 1, 0) for i in range(2 ** k)]
    return out


def run_grid(ctx, rep):
    G = ctx.grid
    res = dyadic.verify_grid(G)
    axioms = [k for k in res if k != "ok"]
    passed = sum(res[k] == 0 for k in axioms)
    rep.value("grid.points", ctx.cloud.size)
    rep.value("grid.delta", G.delta)
    rep.value("grid.seed", G.seed)
    rep.value("grid.L", G.L)
    rep.value("grid.C", G.C)
    rep.value("grid.eps", G.eps)
    rep.value("grid.generations", f"{G.k_min}..{G.k_max}")
    rep.value("grid.cubes_per_generation", [len(G.cubes[k]) for k in G.generations])
    for k in axioms:
        rep.value(f"grid.violations.{k}", res[k])
    rep.value("grid.axioms", f"{passed}/{len(axioms)}")
    rep.check("grid.axioms", passed == len(axioms))
    rep.check("grid.C_finite", math.isfinite(G.C))
    rep.check("grid.eps_floor", G.eps >= dyadic.EPS_FLOOR)
    rep.write("grid.txt", G.dump())


def _data_fields(ctx, count, tag):
    lo, hi = ctx.op.inner
    return analysis.analytic_fields(ctx.cloud, count, seed=ctx.cfg["seed"] * 100 + tag, lower=lo, upper=hi)


def run_whitney(ctx, rep):
    S, G = ctx.cloud, ctx.grid
    f = _data_fields(ctx, 1, 7)[0]
    M = decomposition.dyadic_maximal(G, f, 1.0)
    lam = ctx.cfg["whitney"]["level"] * decomposition.set_average(S, f, np.arange(S.size))
    E = M > lam
    kp, c1, c_star = ctx.support
    c_prime = ctx.cfg["whitney"]["c_prime"]
    if c_prime is None:
        c_prime = sparse.select_whitney_constant(G, c_star)
    A = sht.perfectness_constant(S, seed=ctx.cfg["seed"])
    W = decomposition.whitney(G, E, c_prime)
    r = decomposition.whitney_report(W, A)
    rep.value("whitney.omega_points", int(E.sum()))
    rep.value("whitney.c_star", c_star)
    rep.value("whitney.c_prime", c_prime)
    rep.value("whitney.A", A)
    for k in ("cubes", "atoms", "lower_violations", "upper_violations", "lower_factor", "upper_factor"):
        rep.value(f"whitney.{k}", r[k])
    rep.check("whitney.cover", r["cover"])
    rep.check("whitney.disjoint", r["disjoint"])
    rep.check("whitney.lower_bound", r["lower_violations"] == 0)
    rep.check("whitney.upper_bound", r["upper_violations"] == 0)
    rep.write("whitney.txt", W.dump())


def run_cz(ctx, rep):
    S, G = ctx.cloud, ctx.grid
    rng = np.random.default_rng([ctx.cfg["seed"], 4])
    level = ctx.cfg["cz"]["level"]
    rows = ["sample,lambda,cubes,reconstruction,max_mean,C_X"]
    worst = {"rec": 0.0, "mean": 0.0, "cx": 0.0}
    support_ok = True
    for i in range(int(ctx.cfg["samples"]["cz"])):
        f = rng.standard_normal(S.size) * rng.random(S.size) ** 3
        lam = level * float(np.sum(S.weights * np.abs(f)) / S.measure())
        res = decomposition.cz_decompose(G, f, lam)
        b = res.b_total(S.size)
        rec = float(np.max(np.abs(f - res.g - b)))
        means = [abs(float(np.sum(S.weights[Q.members] * bj))) for Q, bj in res.bad]
        mx = max(means, default=0.0)
        for Q, bj in res.bad:
            support_ok &= bj.shape == Q.members.shape
        covered = np.zeros(S.size, dtype=bool)
        for Q, _ in res.bad:
            covered[Q.members] = True
        support_ok &= bool(np.all(b[~covered] == 0))
        worst["rec"] = max(worst["rec"], rec)
        worst["mean"] = max(worst["mean"], mx)
        worst["cx"] = max(worst["cx"], res.C_X)
        rows.append(f"{i},{lam:.12g},{len(res.bad)},{rec:.3e},{mx:.3e},{res.C_X:.12g}")
    rep.value("cz.samples", int(ctx.cfg["samples"]["cz"]))
    rep.value("cz.max_reconstruction", worst["rec"])
    rep.value("cz.max_abs_mean", worst["mean"])
    rep.value("cz.C_X", worst["cx"])
    rep.check("cz.reconstruction", worst["rec"] <= 1e-12)
    rep.check("cz.mean_zero", worst["mean"] <= 1e-10)
    rep.check("cz.support", support_ok)
    rep.check("cz.C_X_bound", worst["cx"] <= 10)
    rep.write("cz.csv", "\n".join(rows) + "\n")


def run_kernel(ctx, rep):
    k = ctx.cfg["kernel"]
    lad = operators.split_kernel(operators.hilbert_kernel(a=k["a"]), k["delta"], int(k["J"]))
    err = lad.reconstruction_error()
    ints = lad.integrals()
    c0, c1 = lad.norms()
    ratio = float(np.max(c1[1:]) / np.min(c1[1:]))
    rep.value("kernel.reconstruction_error", err)
    rep.value("kernel.max_integral", float(np.max(np.abs(ints[1:]))))
    rep.value("kernel.c1_ratio", ratio)
    rep.check("kernel.reconstruction", err <= 1e-8)
    rep.check("kernel.mean_zero", np.max(np.abs(ints[1:])) <= 1e-12)
    rep.check("kernel.c1_uniform", ratio <= 2.0)
    lines = ["j,integral,c0,c1"] + [f"{j},{ints[j]:.6e},{c0[j]:.12g},{c1[j]:.12g}" for j in range(lad.J + 1)]
    rep.write("kernel.csv", "\n".join(lines) + "\n")


def _euclidean_square(res):
    return sht.lattice_cloud([-1.0, -1.0], [1.0, 1.0], [res, res], "euclidean")


def run_improve(ctx, rep):
    c = ctx.cfg["improve"]
    S = _euclidean_square(int(c["resolution"]))
    a = c["a"]

    def chi(u):
        return operators.plateau(np.abs(u[:, 0]), a / 2, a)

    fronts = {}
    lines = ["curve,r,frontier_inv_s,gain"]
    for name in c["curves"]:
        op = operators.radon_operator(S, name, a=a, J=int(c["J"]))
        fam = analysis.refinement_families(op)
        fr = analysis.improving_frontier(lambda f: operators.apply_single_scale(op, chi, f), S, fam, c["r"])
        # gain 1/r − 1/s at the frontier: how far past the diagonal the operator improves
        fronts[name] = 1.0 / c["r"] - fr
        rep.value(f"improve.frontier.{name}", fr)
        rep.value(f"improve.gain.{name}", fronts[name])
        lines.append(f"{name},{c['r']:.6g},{fr:.6g},{fronts[name]:.6g}")
    rep.write("improve.csv", "\n".join(lines) + "\n")
    if "parabola" in fronts and "flat_line" in fronts:
        gap = fronts["parabola"] - fronts["flat_line"]
        rep.value("improve.gap", gap)
        rep.check("improve.contrast", gap >= c["min_gap"])


def run_modulus(ctx, rep):
    c = ctx.cfg["modulus"]
    S = _euclidean_square(int(c["resolution"]))
    a = c["a"]
    op = operators.radon_operator(S, c["curve"], a=a, J=int(c["J"]))

    def chi(u):
        return operators.plateau(np.abs(u[:, 0]), a / 2, a)

    def app(f):
        return operators.apply_single_scale(op, chi, f)

    rng = np.random.default_rng([ctx.cfg["seed"], 5])
    fs = [analysis.random_smooth_field(S, rng, op.psi2) for _ in range(int(c["fields"]) - 1)]
    fs.append(rng.standard_normal(S.size) * op.psi2)
    fit = analysis.modulus_exponent(app, S, analysis.taylor_flow(op.curve), list(c["b_values"]) + [0.0], fs,
                                    region=operators.inner_mask(op))
    zero = [d for b, d in fit.rows if b == 0.0][0]
    rep.value("modulus.eta", fit.eta)
    rep.value("modulus.r2", fit.r2)
    rep.value("modulus.noise_floor", fit.noise_floor)
    rep.value("modulus.difference_at_zero", zero)
    rep.check("modulus.eta_positive", fit.eta >= 0.1)
    rep.check("modulus.fit_quality", fit.r2 >= 0.9)
    rep.check("modulus.zero_at_b0", zero == 0.0)
    rep.write("modulus.csv", fit.csv())


def run_sparse(ctx, rep):
    S, G, op = ctx.cloud, ctx.grid, ctx.op
    e = ctx.cfg["exponents"]
    sigma = ctx.cfg["sigma"]
    kp, c1, c_star = ctx.support
    c_prime = ctx.cfg["whitney"]["c_prime"] or sparse.select_whitney_constant(G, c_star)
    npairs = int(ctx.cfg["samples"]["pairs"])
    fs = _data_fields(ctx, 2 * npairs, 1)
    rows, sel = [], []
    all_ok, finite = True, True
    first = None
    for i in range(npairs):
        f1 = np.zeros(S.size) if ctx.cfg["samples"]["zero_f1"] else fs[2 * i]
        f2 = fs[2 * i + 1]
        F, tr = sparse.sparse_select(op, G, f1, f2, sigma, e["r"], e["s"], kprime=kp, c_prime=c_prime)
        ok, worst, _ = sparse.verify_sparse(F)
        lhs, rhs, C = sparse.domination_check(op, F, f1, f2, e["r"], e["s"], kp, G)
        all_ok &= ok and tr.sound
        finite &= math.isfinite(C)
        rows.append((i, lhs, rhs, C, sparse.family_depth(tr), len(F)))
        sel.extend(tr.csv().splitlines()[1 if sel else 0:])
        if first is None:
            first = F
    Cs = [r[3] for r in rows]
    rep.value("sparse.kappa_prime", kp)
    rep.value("sparse.c_star", c_star)
    rep.value("sparse.c_prime", c_prime)
    rep.value("sparse.sigma", sigma)
    rep.value("sparse.pairs", npairs)
    rep.value("sparse.max_C_emp", max(Cs))
    rep.value("sparse.max_family_size", max(r[5] for r in rows))
    rep.check("sparse.verify_sparse", all_ok)
    rep.check("sparse.C_emp_finite", finite)
    rep.write("domination.csv", sparse.domination_csv(rows))
    rep.write("selection.csv", "\n".join(sel) + "\n")
    rep.write("family.txt", first.dump())


def run_weights(ctx, rep):
    S, G, op = ctx.cloud, ctx.grid, ctx.op
    c = ctx.cfg["weights"]
    w = weights.make_weight(S, c["weight"])
    one = weights.constant_weight(S)
    p = c["p"]
    pp = p / (p - 1)
    lhs = weights.a_p_constant(w, p, G)
    rhs = weights.a_p_constant(weights.Weight(w.values ** (1 - pp)), pp, G) ** (p - 1)
    tests = _data_fields(ctx, int(c["tests"]), 2)
    chk = weights.weighted_norm_check(lambda f: operators.apply_full(op, f), G, w, p, c["r"], c["s"], tests)
    rep.value("weights.family", w.name)
    rep.value("weights.A_one", weights.a_p_constant(one, p, G))
    rep.value("weights.duality_gap", abs(lhs - rhs))
    rep.value("weights.alpha", chk.alpha)
    rep.value("weights.A_p_over_r", chk.a_const)
    rep.value("weights.RH", chk.rh_const)
    rep.value("weights.bound", chk.bound)
    rep.value("weights.C_emp", chk.C_emp)
    rep.value("weights.ratio", chk.ratio)
    rep.value("weights.C_cal", chk.C_cal)
    rep.check("weights.constant_weight", weights.a_p_constant(one, p, G) == 1.0)
    rep.check("weights.duality", abs(lhs - rhs) <= 1e-10)
    rep.check("weights.bound", chk.ok)
    rep.write("weights.csv", "quantity,value\n" + "".join(
        f"{k},{_fmt(v)}\n" for k, v in (("A_p_over_r", chk.a_const), ("RH", chk.rh_const), ("alpha", chk.alpha),
                                        ("bound", chk.bound), ("C_emp", chk.C_emp), ("ratio", chk.ratio))))


RUNNERS = {"grid": run_grid, "whitney": run_whitney, "cz": run_cz, "kernel": run_kernel,
           "improve": run_improve, "modulus": run_modulus, "sparse": run_sparse, "weights": run_weights}


def run(subcommand, cfg):
    """Run one subcommand (or ``all``); returns the Report after writing the summary."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    rep = Report(cfg["output"])
    ctx = Context(cfg)
    rep.value("subcommand", subcommand)
    rep.value("seed", cfg["seed"])
    names = list(RUNNERS) if subcommand == "all" else [subcommand]
    for name in names:
        try:
            RUNNERS[name](ctx, rep)
        except ContractViolation as exc:
            raise ConfigError(f"{name}: {exc}") from exc
        except SparsedomError as exc:
            rep.value(f"{name}.error", f"{type(exc).__name__}: {exc}")
            rep.check(f"{name}.completed", False)
    rep.write("summary", rep.summary())
    return rep


def build_parser():
    ap = argparse.ArgumentParser(prog="sparsedom", description="Dyadic, CZ and sparse-domination experiments.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="YAML config file")
    ap.add_argument("--preset", default="parabola", help=f"base preset ({', '.join(sorted(PRESETS))})")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("-o", "--output", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.preset, args.seed, args.output)
        rep = run(args.subcommand, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(rep.summary())
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())
