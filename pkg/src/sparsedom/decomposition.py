"""Dyadic maximal functions, Whitney covers and Calderón–Zygmund splits on a grid."""
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_real, grid_function
from .dyadic import DyadicCube
from .errors import ContractViolation


def cube_averages(G, f, k, p=1.0):
    """⟨|f|^p⟩_Q^{1/p} for every generation-k cube (as an array by rank)."""
    w = G.S.weights
    num = np.bincount(G.labels[k], weights=w * np.abs(f) ** p, minlength=len(G.cubes[k]))
    avg = num / G.measures(k)
    return avg ** (1.0 / p) if p != 1 else avg


def cube_means(G, f, k):
    """Signed means ⟨f⟩_Q per generation-k cube (complex allowed)."""
    w = G.S.weights
    mu = G.measures(k)
    if np.iscomplexobj(f):
        re = np.bincount(G.labels[k], weights=w * f.real, minlength=len(G.cubes[k]))
        im = np.bincount(G.labels[k], weights=w * f.imag, minlength=len(G.cubes[k]))
        return (re + 1j * im) / mu
    return np.bincount(G.labels[k], weights=w * f, minlength=len(G.cubes[k])) / mu


def dyadic_maximal(G, f, p=1.0):
    """M^D_p f(x) = sup over grid cubes Q ∋ x of ⟨|f|^p⟩_Q^{1/p}."""
    p = check_real(p, "p", low=1.0)
    f = grid_function(f, G.S.size)
    out = np.zeros(G.S.size)
    for k in G.generations:
        out = np.maximum(out, cube_averages(G, f, k, p)[G.labels[k]])
    return out


def set_average(S, f, idx, p=1.0):
    """⟨|f|^p⟩_E^{1/p} over an index set E (0 on empty sets)."""
    idx = np.asarray(idx)
    mu = S.measure(idx)
    if mu == 0:
        return 0.0
    val = float(np.sum(S.weights[idx] * np.abs(f[idx]) ** p) / mu)
    return val ** (1.0 / p)


def atom(x):
    """Single-point cube used below the grid's finest generation."""
    return DyadicCube(("atom", int(x)), None, int(x), np.array([int(x)]), 0.0)


@dataclass
class WhitneyFamily:
    """Disjoint cover of Ω by maximal cubes plus single-point atoms.

    Atoms hold the points of Ω whose distance to Y is below the finest grid
    scale, where no grid cube can be selected.
    """

    cubes: list
    Y: np.ndarray
    c_prime: float
    grid: object
    omega: np.ndarray
    dist_to_Y: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    @property
    def atoms(self):
        return [Q for Q in self.cubes if Q.k is None]

    @property
    def grid_cubes(self):
        return [Q for Q in self.cubes if Q.k is not None]

    def dump(self):
        lines = [f"# whitney c_prime={self.c_prime!r} cubes={len(self.grid_cubes)} atoms={len(self.atoms)} "
                 f"omega={int(self.omega.size)}", "# k rank center members diam dist"]
        S = self.grid.S
        for Q in self.cubes:
            k = "atom" if Q.k is None else Q.k
            rank = Q.id[1]
            lines.append(f"{k} {rank} {Q.center} {Q.size} {S.metric.diameter(Q.members):.12g} "
                         f"{self.distance(Q):.12g}")
        return "\n".join(lines) + "\n"

    def distance(self, Q):
        """dist(Q, Y) as a minimum over members of the point distance to Y."""
        S = self.grid.S
        return float(np.min(S.metric.dist_to_set(self.Y, query=Q.members)))


def whitney(G, omega, c_prime, kappa=None):
    """Whitney decomposition of Ω (index set or boolean mask) with constant 𝔠′.

    Level sets Ω_k = {x ∈ Ω : 𝔠′ℓ_k < dist(x, Y) ≤ 𝔠′ℓ_{k−1}}; the initial
    selection keeps generation-k cubes meeting Ω_k and the output keeps the
    maximal ones. Points of Ω beyond the finest generation become atoms.
    """
    S = G.S
    kappa = S.kappa if kappa is None else kappa
    c_prime = check_real(c_prime, "c_prime", low=0.0, low_open=True)
    if not c_prime > 2 * kappa ** 2 * G.C:
        raise ContractViolation(f"c_prime must exceed 2 kappa^2 C = {2 * kappa ** 2 * G.C:.6g}")
    mask = np.zeros(S.size, dtype=bool)
    omega = np.asarray(omega)
    if omega.dtype == bool:
        mask[:] = omega
    else:
        mask[omega] = True
    idx = np.nonzero(mask)[0]
    Y = ~mask
    if idx.size == 0:
        return WhitneyFamily([], Y, c_prime, G, idx, np.zeros(0))
    if not Y.any():
        # Ω = X: the root cube is the whole space
        root = G.cubes[G.k_min][0]
        return WhitneyFamily([root], Y, c_prime, G, idx, np.full(idx.size, np.inf))
    d = S.metric.dist_to_set(Y, query=idx)
    selected = {}
    # generation of each point: k with c'ℓ_k < d ≤ c'ℓ_{k-1}
    gen = np.full(idx.size, G.k_max + 1)
    for k in range(G.k_max, G.k_min - 1, -1):
        gen = np.where(d > c_prime * G.ell(k), k, gen)
    # points too far for the coarsest generation sit in k_min (the root covers them)
    for k in G.generations:
        hit = idx[gen == k]
        if hit.size:
            for r in np.unique(G.labels[k][hit]):
                selected[(k, int(r))] = True
    chosen = []
    covered = np.zeros(S.size, dtype=bool)
    for k in G.generations:
        for r in sorted(rr for (kk, rr) in selected if kk == k):
            Q = G.cubes[k][r]
            if covered[Q.members].any():
                continue
            chosen.append(Q)
            covered[Q.members] = True
    fringe = idx[(gen == G.k_max + 1) & ~covered[idx]]
    chosen.extend(atom(x) for x in fringe)
    fam = WhitneyFamily(chosen, Y, c_prime, G, idx, d)
    fam.diagnostics["atoms"] = int(fringe.size)
    return fam


def whitney_report(W, A, kappa=None):
    """Exhaustive check of cover, disjointness and both distance bounds.

    Lower: (𝔠′/(2κ²𝔠) − 1)·diam(Q) ≤ dist(Q, Y); upper: dist(Q, Y) ≤ (A𝔠′/δ)·diam(Q).
    """
    G = W.grid
    S = G.S
    kappa = S.kappa if kappa is None else kappa
    cnt = np.zeros(S.size, dtype=np.int64)
    for Q in W.cubes:
        cnt[Q.members] += 1
    omega = np.zeros(S.size, dtype=bool)
    omega[W.omega] = True
    lo_f = W.c_prime / (2 * kappa ** 2 * G.C) - 1
    hi_f = A * W.c_prime / G.delta
    lower_bad, upper_bad = [], []
    for Q in W.cubes:
        diam = S.metric.diameter(Q.members)
        dist = W.distance(Q)
        if not lo_f * diam <= dist:
            lower_bad.append(Q.id)
        if not dist <= hi_f * diam:
            upper_bad.append(Q.id)
    return {
        "cover": bool(np.all((cnt > 0) == omega)),
        "disjoint": bool(np.all(cnt <= 1)),
        "lower_violations": len(lower_bad),
        "upper_violations": len(upper_bad),
        "atoms": len(W.atoms),
        "cubes": len(W.cubes),
        "lower_factor": lo_f,
        "upper_factor": hi_f,
        "ok": bool(np.all((cnt > 0) == omega) and np.all(cnt <= 1) and not lower_bad and not upper_bad),
    }


@dataclass
class CzResult:
    g: np.ndarray
    bad: list               # (cube, b_j) with b_j stored on the cube members
    lam: float
    C_X: float

    def b_total(self, size):
        out = np.zeros(size, dtype=self.g.dtype)
        for Q, b in self.bad:
            out[Q.members] += b
        return out

    def dump(self, S):
        lines = [f"# cz lambda={self.lam!r} C_X={self.C_X!r} cubes={len(self.bad)}",
                 "# k rank center members mean_b"]
        for Q, b in self.bad:
            k = "atom" if Q.k is None else Q.k
            mean = np.sum(S.weights[Q.members] * b) / S.measure(Q.members)
            lines.append(f"{k} {Q.id[1]} {Q.center} {Q.size} {abs(mean):.3e}")
        return "\n".join(lines) + "\n"


def _split(S, f, cubes, lam):
    g = f.astype(np.result_type(f, float), copy=True)
    bad = []
    for Q in cubes:
        m = Q.members
        mean = np.sum(S.weights[m] * f[m]) / np.sum(S.weights[m])
        b = f[m] - mean
        # remove the residual quadrature mean so ∫b = 0 holds to rounding
        b = b - np.sum(S.weights[m] * b) / np.sum(S.weights[m])
        g[m] = f[m] - b
        bad.append((Q, b))
    C_X = float(np.max(np.abs(g)) / lam) if lam > 0 and g.size else 0.0
    return CzResult(g, bad, float(lam), C_X)


def cz_decompose(G, f, lam):
    """Calderón–Zygmund split at height λ over maximal cubes with ⟨|f|⟩_Q > λ."""
    S = G.S
    f = grid_function(f, S.size)
    lam = check_real(lam, "lambda", low=0.0, low_open=True)
    mean_abs = float(np.sum(S.weights * np.abs(f)) / S.measure())
    if not lam > mean_abs:
        raise ContractViolation(f"lambda={lam:.6g} must exceed the global average {mean_abs:.6g}")
    taken = np.zeros(S.size, dtype=bool)
    cubes = []
    for k in G.generations:
        avg = cube_averages(G, f, k)
        for r in np.nonzero(avg > lam)[0]:
            Q = G.cubes[k][r]
            if taken[Q.members[0]]:
                continue
            cubes.append(Q)
            taken[Q.members] = True
    return _split(S, f, cubes, lam)


def cz_decompose_family(G, f, cubes, lam=None):
    """CZ-type split over a prescribed disjoint family: b_Q = 1_Q(f − ⟨f⟩_Q)."""
    S = G.S
    f = grid_function(f, S.size)
    seen = np.zeros(S.size, dtype=bool)
    for Q in cubes:
        if seen[Q.members].any():
            raise ContractViolation("cube family must be pairwise disjoint")
        seen[Q.members] = True
    lam = float(np.max(np.abs(f))) if lam is None else lam
    return _split(S, f, list(cubes), lam if lam > 0 else 1.0)
