"""Sparse families, sparse forms, the recursive sparse selection and domination checks."""
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as sp

from ._validation import check_real, conjugate, grid_function
from .decomposition import dyadic_maximal, set_average, whitney
from .errors import ConstantInfeasibleError, ContractViolation, DominationFailure, SelectionFailure
from .operators import apply_full, kappa_prime, pairing

MIN_POINTS = 64
MAX_DEPTH = 12
MENU_RATIO = 2.0 ** 0.125


@dataclass
class SparseFamily:
    """Cubes with witness sets E(Q) (index arrays) at sparseness σ."""

    cubes: list
    witnesses: list
    sigma: float
    grid_id: str = None
    S: object = None

    def __len__(self):
        return len(self.cubes)

    def dump(self):
        lines = [f"# sparse family sigma={self.sigma!r} grid={self.grid_id} cubes={len(self.cubes)}",
                 "# id generation center mu(Q) mu(E(Q))"]
        for Q, E in zip(self.cubes, self.witnesses):
            k = "atom" if Q.k is None else Q.k
            lines.append(f"{Q.id[0]}:{Q.id[1]} {k} {Q.center} {self.S.measure(Q.members)!r} "
                         f"{self.S.measure(E)!r}")
        return "\n".join(lines) + "\n"


def canonical_witnesses(S, cubes):
    """E(Q) = Q ∖ ⋃{P in the family : P ⊊ Q} for every cube."""
    inc = _incidence(S, cubes)
    strict = _strict_containment(inc, cubes)
    covered = (inc @ strict).tocsc()      # column Q holds points lying in some P ⊊ Q
    covered.eliminate_zeros()
    out = []
    for j, Q in enumerate(cubes):
        m = np.asarray(Q.members)
        hit = covered.indices[covered.indptr[j]:covered.indptr[j + 1]]
        out.append(np.setdiff1d(m, hit))
    return out


def _incidence(S, sets):
    rows = np.concatenate([np.asarray(q.members if hasattr(q, "members") else q) for q in sets]) \
        if sets else np.zeros(0, dtype=np.int64)
    cols = np.concatenate([np.full(len(q.members if hasattr(q, "members") else q), j)
                           for j, q in enumerate(sets)]) if sets else np.zeros(0, dtype=np.int64)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(S.size, len(sets)))


def _strict_containment(inc, cubes):
    """A[P, Q] = 1 iff P ⊊ Q (as point sets)."""
    sizes = np.asarray(inc.sum(axis=0)).ravel()
    inter = (inc.T @ inc).tocoo()
    keep = (inter.data == sizes[inter.row]) & (sizes[inter.row] < sizes[inter.col])
    return sp.csr_matrix((np.ones(int(keep.sum())), (inter.row[keep], inter.col[keep])),
                         shape=(len(cubes), len(cubes)))


def verify_sparse(F, sigma=None):
    """Check both sparseness characterisations exactly.

    Witness form: E(Q) ⊆ Q, pairwise disjoint, σμ(Q) ≤ μ(E(Q)). Union form:
    μ(⋃_{P ⊊ Q} P) ≤ (1 − σ)μ(Q) with canonical witnesses. Returns
    (ok, worst ratio min μ(E(Q))/μ(Q), details).
    """
    S = F.S
    sigma = F.sigma if sigma is None else sigma
    if not F.cubes:
        return True, 1.0, {"witness": True, "union": True}
    cnt = np.zeros(S.size, dtype=np.int64)
    witness_ok = True
    worst = np.inf
    for Q, E in zip(F.cubes, F.witnesses):
        E = np.asarray(E, dtype=np.int64)
        inside = np.zeros(S.size, dtype=bool)
        inside[np.asarray(Q.members)] = True
        if E.size and not inside[E].all():
            witness_ok = False
        cnt[E] += 1
        muQ = S.measure(Q.members)
        muE = S.measure(E) if E.size else 0.0
        worst = min(worst, muE / muQ)
        if not sigma * muQ <= muE:
            witness_ok = False
    if np.any(cnt > 1):
        witness_ok = False
    union_ok = True
    for Q, E in zip(F.cubes, canonical_witnesses(S, F.cubes)):
        muQ = S.measure(Q.members)
        covered = muQ - (S.measure(E) if E.size else 0.0)
        if not covered <= (1 - sigma) * muQ * (1 + 1e-12):
            union_ok = False
    return bool(witness_ok and union_ok), float(worst), {"witness": witness_ok, "union": union_ok}


def dilated_members(F_or_S, Q, kprime, ell):
    """Points of κ′Q = B(x_c(Q), κ′ℓ(Q)) together with Q itself."""
    S = F_or_S.S if hasattr(F_or_S, "cubes") else F_or_S
    m = np.asarray(Q.members)
    if kprime is None or ell <= 0:
        return m
    return np.union1d(m, S.metric.ball(int(Q.center), kprime * ell))


def sparse_form(F, f, g, r=1.0, s=1.0, kprime=None, grid=None):
    """Λ = Σ_Q μ(Q)⟨f⟩_{Q,r}⟨g⟩_{Q or κ′Q, s} (absolute values inside the averages)."""
    S = F.S
    f = np.asarray(f)
    g = np.asarray(g)
    total = 0.0
    for Q in F.cubes:
        mu = S.measure(Q.members)
        a = set_average(S, f, Q.members, r)
        if a == 0:
            continue
        if kprime is not None and grid is not None and Q.k is not None:
            idx = dilated_members(S, Q, kprime, grid.ell(Q.k))
        else:
            idx = Q.members
        total += mu * a * set_average(S, g, idx, s)
    return float(total)


# Whitney constant


def whitney_expressions(c, C, delta, c_star):
    """The three quantities constraining 𝔠′: band expression, growth, reverse band."""
    e1 = (c_star + 2 * C / delta + 12 * C * c / delta ** 2) / ((c * delta / (2 * C) - 1) / 3)
    g = (c / (2 * C) - 1) / 3
    e3 = (g - c_star) / (2 * C / delta + 12 * C * c / delta ** 2)
    return e1, g, e3


def select_whitney_constant(G, c_star, kappa=None, max_steps=2000):
    """Smallest 𝔠′ on a geometric menu meeting the three selection constraints.

    Bands are [L/2, 2L] around the true limits L₁ = 72𝔠²/δ³ and L₃ = δ²/(72𝔠²)
    of the two band expressions; the growth constraint is (𝔠′/(2𝔠) − 1)/3 ≥ 100𝔠*.
    𝔠′ > 2κ²𝔠 is also enforced.
    """
    C, delta = G.C, G.delta
    kappa = G.S.kappa if kappa is None else kappa
    L1 = 72 * C ** 2 / delta ** 3
    L3 = delta ** 2 / (72 * C ** 2)
    c = max(2 * kappa ** 2 * C, 2 * C / delta) * (1 + 1e-9)
    for _ in range(max_steps):
        e1, g, e3 = whitney_expressions(c, C, delta, c_star)
        if L1 / 2 <= e1 <= 2 * L1 and g >= 100 * c_star and L3 / 2 <= e3 <= 2 * L3 and c > 2 * kappa ** 2 * C:
            return float(c)
        c *= MENU_RATIO
    raise ConstantInfeasibleError("no Whitney constant on the menu satisfies all constraints")


# selection


@dataclass
class SelectionTrace:
    rows: list = field(default_factory=list)     # (cube id, depth, D, μ(E)/μ(Q), children)
    kprime: float = None
    c_prime: float = None
    c_star: float = None
    sound: bool = True

    def csv(self):
        lines = ["cube,depth,D,mass_ratio,children"]
        for cid, depth, D, ratio, nch in self.rows:
            lines.append(f"{cid[0]}:{cid[1]},{depth},{D},{ratio:.12g},{nch}")
        return "\n".join(lines) + "\n"


def sparse_select(op, G, f1, f2, sigma, r, s, Q0=None, kprime=None, c_prime=None,
                  min_points=MIN_POINTS, max_depth=MAX_DEPTH, D_max=2.0 ** 40):
    """Recursive sparse selection; returns (SparseFamily, SelectionTrace).

    Level sets use dyadic maximal functions of f₁1_Q at exponent r and of
    f₂1_{κ′Q} at exponent s′; D doubles from 2 until μ(E) ≤ (1 − σ)μ(Q).
    """
    S = G.S
    sigma = check_real(sigma, "sigma", low=0.0, high=1.0, low_open=True, high_open=True)
    f1 = grid_function(f1, S.size, "f1")
    f2 = grid_function(f2, S.size, "f2")
    s_prime = conjugate(s)
    if Q0 is None:
        Q0 = G.cubes[G.k_min][0] if len(G.cubes[G.k_min]) == 1 else None
        if Q0 is None:
            raise ContractViolation("grid has several top cubes; pass Q0")
    inQ0 = np.zeros(S.size, dtype=bool)
    inQ0[Q0.members] = True
    if np.any(f1[~inQ0] != 0) or np.any(f2[~inQ0] != 0):
        raise ContractViolation("f1 and f2 must be supported in Q0")
    trace = SelectionTrace()
    if kprime is None:
        kprime, _, trace.c_star = kappa_prime(op, G)
    if c_prime is None:
        c_star = trace.c_star if trace.c_star is not None else kappa_prime(op, G)[2]
        trace.c_star = c_star
        c_prime = select_whitney_constant(G, c_star)
    trace.kprime, trace.c_prime = float(kprime), float(c_prime)
    cubes, witnesses = [], []

    def recurse(Q, depth):
        members = np.asarray(Q.members)
        pos = len(cubes)
        cubes.append(Q)
        witnesses.append(members)
        terminal = (Q.k is None or Q.size <= min_points or depth >= max_depth or Q.k >= G.k_max
                    or not np.any(f1[members]))
        if terminal:
            return
        inQ = np.zeros(S.size, dtype=bool)
        inQ[members] = True
        g1 = np.where(inQ, f1, 0.0)
        wide = dilated_members(S, Q, kprime, G.ell(Q.k))
        g2 = np.zeros(S.size)
        g2[wide] = f2[wide]
        avg1 = set_average(S, g1, members, r)
        avg2 = set_average(S, g2, wide, s_prime)
        M1 = dyadic_maximal(G, g1, r)
        M2 = dyadic_maximal(G, g2, s_prime) if avg2 > 0 else np.zeros(S.size)
        muQ = S.measure(members)
        D = 2.0
        while True:
            E = inQ & ((M1 > D * avg1) | ((M2 > D * avg2) if avg2 > 0 else False))
            if S.measure(E) <= (1 - sigma) * muQ:
                break
            D *= 2
            if D > D_max:
                raise SelectionFailure(f"no threshold D ≤ {D_max:g} gives μ(E) ≤ (1−σ)μ(Q) at {Q.id}")
        ratio = S.measure(E) / muQ
        if not E.any():
            trace.rows.append((Q.id, depth, D, ratio, 0))
            return
        W = whitney(G, E, c_prime)
        children = list(W.cubes)
        for P in children:
            if not inQ[np.asarray(P.members)].all():
                trace.sound = False
        trace.rows.append((Q.id, depth, D, ratio, len(children)))
        taken = np.zeros(S.size, dtype=bool)
        for P in children:
            taken[np.asarray(P.members)] = True
        witnesses[pos] = members[~taken[members]]
        for P in children:
            recurse(P, depth + 1)

    recurse(Q0, 0)
    F = SparseFamily(cubes, witnesses, sigma, getattr(G, "grid_id", None) or f"delta={G.delta:g},seed={G.seed}", S)
    return F, trace


def domination_check(op, F, f1, f2, r, s, kprime=None, grid=None):
    """(lhs, rhs, C_emp) with lhs = |⟨Tf₁, f₂⟩| and rhs = Λ^{κ′}_{S,r,s′}(f₁, f₂)."""
    S = F.S
    lhs = abs(float(pairing(apply_full(op, f1), f2, S)))
    rhs = sparse_form(F, f1, f2, r, conjugate(s), kprime, grid)
    if rhs == 0:
        if lhs > 0:
            raise DominationFailure(f"⟨Tf1, f2⟩ = {lhs:.3e} against a vanishing sparse form")
        return lhs, rhs, 0.0
    return lhs, rhs, lhs / rhs


def domination_csv(rows):
    """rows: (pair id, lhs, rhs, C_emp, depth, cube count)."""
    lines = ["pair,lhs,rhs,C_emp,depth,cubes"]
    for pid, lhs, rhs, c, depth, n in rows:
        lines.append(f"{pid},{lhs:.12g},{rhs:.12g},{c:.12g},{depth},{n}")
    return "\n".join(lines) + "\n"


def family_depth(trace):
    return max((row[1] for row in trace.rows), default=0) + (1 if trace.rows else 0)

