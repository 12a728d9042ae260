"""Choice tables, their lottery expansion, and the choice-model axioms.

A choice table holds ``P[x, i, j]``, the probability that alternative ``i`` is
chosen over ``j`` in state ``x``.  Mass ``1 - P[x,i,j] - P[x,j,i]`` is
abstention.  Pairs of alternatives ``(i, j)`` mixed with weight ``alpha`` form
lotteries, and the probability one lottery beats another is the bilinear
extension of the table.

Axioms checked on a space of items (alternatives or lotteries):

* bearability: every item ties with itself, ``P[a, a] = 1/2``;
* wedge: if ``a`` is weakly preferred to both ``b`` and ``c`` (or both are
  weakly preferred to ``a``), then ``b`` and ``c`` are comparable;
* path: whenever ``a`` is weakly preferred to ``b`` there is a chain of
  comparable, weakly preferred steps from ``a`` to ``b``;
* monotonicity: for a comparable triangle ``(L1, L2, L3)`` and wedge
  ``(L4, L5, L6)``, ``P[L1,L2] >= P[L4,L5]`` and ``P[L2,L3] >= P[L5,L6]``
  imply that ``L4, L6`` are comparable and ``P[L1,L3] >= P[L4,L6]``.

Two items are comparable (an edge) when ``P[a,b] + P[b,a] = 1`` and ``a`` is
weakly preferred to ``b`` when ``P[a,b] >= 1/2``.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .core_math import logit, sigmoid
from .proper_loss import check_F_condition

DEFAULT_ALPHAS = (0.1, 0.3, 0.5, 0.7, 0.9)
ALL_ALPHAS = tuple(round(k / 10.0, 10) for k in range(1, 10))
EXHAUSTIVE_LIMIT = 12


class NotRepresentableError(ValueError):
    """Order constraints could not be satisfied within tolerance."""


@dataclass
class ChoiceTable:
    probs: np.ndarray
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)

    def __post_init__(self):
        P = np.asarray(self.probs, dtype=float)
        if P.ndim == 2:
            P = P[None]
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ValueError("choice table must have shape (states, n, n)")
        if np.any(~np.isfinite(P)) or np.any(P < 0) or np.any(P > 1):
            raise ValueError("choice probabilities must lie in [0, 1]")
        if np.any(P + P.transpose(0, 2, 1) > 1 + 1e-12):
            x, i, j = np.argwhere(P + P.transpose(0, 2, 1) > 1 + 1e-12)[0]
            raise ValueError(f"P[{x},{i},{j}] + P[{x},{j},{i}] exceeds 1")
        self.probs = P
        if not self.states:
            self.states = [f"x{k}" for k in range(P.shape[0])]
        if not self.actions:
            self.actions = [f"y{k}" for k in range(P.shape[1])]
        if len(self.states) != P.shape[0] or len(self.actions) != P.shape[1]:
            raise ValueError("labels do not match table shape")

    @property
    def m(self) -> int:
        return self.probs.shape[0]

    @property
    def n(self) -> int:
        return self.probs.shape[1]

    def to_json(self) -> dict:
        return {"states": list(self.states), "actions": list(self.actions),
                "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "ChoiceTable":
        return cls(probs=np.asarray(obj["probs"], dtype=float),
                   states=list(obj.get("states", [])), actions=list(obj.get("actions", [])))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "ChoiceTable":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class ItemSpace:
    """Pairwise probabilities over a finite set of items, one matrix per state.

    For a lottery expansion ``alpha`` is set and labels are pairs ``(i, j)``
    meaning ``alpha * i + (1 - alpha) * j``; for the base table ``alpha`` is
    ``None`` and labels are single actions.
    """

    probs: np.ndarray
    labels: list
    alpha: Optional[float] = None

    @property
    def size(self) -> int:
        return self.probs.shape[1]


def lottery_matrix(n: int, alpha: float) -> np.ndarray:
    """Mixing matrix ``A`` with ``A[(i, j), k]`` the weight of ``k`` in lottery ``(i, j)``."""
    A = np.zeros((n * n, n))
    for i in range(n):
        for j in range(n):
            A[i * n + j, i] += alpha
            A[i * n + j, j] += 1.0 - alpha
    return A


def expand(table: ChoiceTable, alpha: float) -> ItemSpace:
    """All ``n^2`` lotteries over pairs of actions at mixing weight ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in the open interval (0, 1)")
    A = lottery_matrix(table.n, alpha)
    P = np.einsum("ak,xkl,bl->xab", A, table.probs, A)
    labels = [(i, j) for i in range(table.n) for j in range(table.n)]
    return ItemSpace(P, labels, alpha)


def base_space(table: ChoiceTable) -> ItemSpace:
    return ItemSpace(table.probs.copy(), [(i,) for i in range(table.n)], None)


@dataclass
class AxiomResult:
    axiom: str
    passed: bool
    alpha: Optional[float] = None
    state: Optional[int] = None
    witness: Optional[tuple] = None
    detail: str = ""
    checked: int = 0

    def to_dict(self) -> dict:
        return {"axiom": self.axiom, "passed": self.passed, "alpha": self.alpha,
                "state": self.state,
                "witness": None if self.witness is None else [list(w) for w in self.witness],
                "detail": self.detail, "checked": self.checked}


def _edges(P, tol):
    return np.abs(P + np.swapaxes(P, -1, -2) - 1.0) <= tol


def _pref(P, tol):
    return P >= 0.5 - tol


def check_bearability(space: ItemSpace, tol: float = 1e-9) -> AxiomResult:
    diag = np.diagonal(space.probs, axis1=1, axis2=2)
    bad = np.argwhere(np.abs(diag - 0.5) > tol)
    if bad.size:
        x, a = bad[0]
        return AxiomResult("bearability", False, space.alpha, int(x), (space.labels[a],),
                           f"P[a,a] = {diag[x, a]:.6g}", diag.size)
    return AxiomResult("bearability", True, space.alpha, checked=diag.size)


def check_wedge_axiom(space: ItemSpace, tol: float = 1e-9) -> AxiomResult:
    """Both wedge orientations, over distinct items ``b != c`` around a centre ``a``."""
    E = _edges(space.probs, tol)
    R = _pref(space.probs, tol) & E
    N = space.size
    eye = np.eye(N, dtype=bool)
    checked = 0
    for x in range(space.probs.shape[0]):
        for a in range(N):
            for side, arms in (("out", R[x, a] & ~eye[a]), ("in", R[x, :, a] & ~eye[a])):
                idx = np.flatnonzero(arms)
                if idx.size < 2:
                    continue
                sub = E[x][np.ix_(idx, idx)] | np.eye(idx.size, dtype=bool)
                checked += idx.size * (idx.size - 1)
                bad = np.argwhere(~sub)
                if bad.size:
                    b, c = idx[bad[0][0]], idx[bad[0][1]]
                    return AxiomResult("wedge", False, space.alpha, x,
                                       (space.labels[b], space.labels[a], space.labels[c]),
                                       f"{side}-wedge arms not comparable", checked)
    return AxiomResult("wedge", True, space.alpha, checked=checked)


def _closure(adj: np.ndarray) -> np.ndarray:
    R = adj.copy()
    for k in range(R.shape[0]):
        R |= R[:, k:k + 1] & R[k:k + 1, :]
    return R


def check_path_axiom(space: ItemSpace, tol: float = 1e-9) -> AxiomResult:
    E = _edges(space.probs, tol)
    W = _pref(space.probs, tol)
    N = space.size
    for x in range(space.probs.shape[0]):
        reach = _closure(W[x] & E[x]) | np.eye(N, dtype=bool)
        bad = np.argwhere(W[x] & ~reach)
        if bad.size:
            a, b = bad[0]
            return AxiomResult("path", False, space.alpha, x, (space.labels[a], space.labels[b]),
                               "weak preference without a comparable path", N * N)
    return AxiomResult("path", True, space.alpha, checked=space.probs.shape[0] * N * N)


def _triangles(E):
    """Index arrays of triangles ``(a, b, c)``: all three pairs comparable."""
    return np.nonzero(E[:, :, None] & E[None, :, :] & E[:, None, :])


def _wedges(E):
    """Index arrays of wedges ``(d, e, f)``: ``d, e`` and ``e, f`` comparable."""
    return np.nonzero(E[:, :, None] & E[None, :, :])


def check_monotonicity(space: ItemSpace, tol: float = 1e-9, mode: str = "auto",
                       samples: int = 200_000, seed: int = 0,
                       chunk: int = 4096) -> AxiomResult:
    """Monotonicity over triangles and wedges of items (repeats allowed).

    The conclusion asks both that the wedge closes (``L4, L6`` comparable) and
    that ``P[L1,L3] >= P[L4,L6]``.  ``mode="exhaustive"`` examines every
    (triangle, wedge) combination and reports the lexicographically smallest violating 6-tuple.  ``"sampled"``
    draws ``samples`` random combinations.  ``"auto"`` is exhaustive up to
    ``EXHAUSTIVE_LIMIT`` items.  The conclusion is checked with ``10 * tol`` slack
    so near-ties in the premises do not register as violations.
    """
    P = space.probs
    N = space.size
    if mode == "auto":
        mode = "exhaustive" if N <= EXHAUSTIVE_LIMIT else "sampled"
    if mode not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown monotonicity mode {mode!r}")
    rng = np.random.default_rng(seed)
    E_all = _edges(P, tol)
    checked = 0
    for x in range(P.shape[0]):
        Px, E = P[x], E_all[x]
        t1, t2, t3 = _triangles(E)
        w4, w5, w6 = _wedges(E)
        if t1.size == 0 or w4.size == 0:
            continue
        if mode == "sampled":
            ti = rng.integers(0, t1.size, size=samples)
            wi = rng.integers(0, w4.size, size=samples)
            prem = (Px[t1[ti], t2[ti]] >= Px[w4[wi], w5[wi]] - tol) & \
                   (Px[t2[ti], t3[ti]] >= Px[w5[wi], w6[wi]] - tol)
            bad = prem & (~E[w4[wi], w6[wi]] | (Px[t1[ti], t3[ti]] < Px[w4[wi], w6[wi]] - 10 * tol))
            checked += samples
            if np.any(bad):
                hits = np.flatnonzero(bad)
                keys = [(t1[ti[h]], t2[ti[h]], t3[ti[h]], w4[wi[h]], w5[wi[h]], w6[wi[h]])
                        for h in hits]
                k = min(keys)
                return _mono_failure(space, x, k, checked)
            continue
        p12, p23, p13 = Px[t1, t2], Px[t2, t3], Px[t1, t3]
        p45, p56, p46 = Px[w4, w5], Px[w5, w6], Px[w4, w6]
        closed = E[w4, w6]
        best = None
        for s in range(0, t1.size, chunk):
            sl = slice(s, s + chunk)
            prem = (p12[sl, None] >= p45[None, :] - tol) & (p23[sl, None] >= p56[None, :] - tol)
            bad = prem & (~closed[None, :] | (p13[sl, None] < p46[None, :] - 10 * tol))
            checked += prem.size
            if np.any(bad):
                ii, jj = np.nonzero(bad)
                ii = ii + s
                keys = np.stack([t1[ii], t2[ii], t3[ii], w4[jj], w5[jj], w6[jj]], axis=1)
                order = np.lexsort(keys.T[::-1])
                k = tuple(int(v) for v in keys[order[0]])
                if best is None or k < best:
                    best = k
        if best is not None:
            return _mono_failure(space, x, best, checked)
    return AxiomResult("monotonicity", True, space.alpha, checked=checked,
                       detail=mode)


def _mono_failure(space, x, k, checked):
    L = [space.labels[i] for i in k]
    P = space.probs[x]
    a, b, c, d, e, f = k
    if abs(P[d, f] + P[f, d] - 1.0) > 1e-6:
        detail = f"wedge (L4, L5, L6) does not close: P[L4,L6] + P[L6,L4] = {P[d, f] + P[f, d]:.6g}"
        return AxiomResult("monotonicity", False, space.alpha, x, tuple(L), detail, checked)
    detail = (f"P[L1,L2]={P[a, b]:.6g} >= P[L4,L5]={P[d, e]:.6g}, "
              f"P[L2,L3]={P[b, c]:.6g} >= P[L5,L6]={P[e, f]:.6g}, "
              f"but P[L1,L3]={P[a, c]:.6g} < P[L4,L6]={P[d, f]:.6g}")
    return AxiomResult("monotonicity", False, space.alpha, x, tuple(L), detail, checked)


@dataclass
class KLSTCertificate:
    passed: bool
    results: list
    alphas: tuple
    alpha_mono: float
    base_results: list = field(default_factory=list)

    def failures(self) -> list:
        return [r for r in self.results if not r.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "alphas": list(self.alphas), "alpha_mono": self.alpha_mono,
                "results": [r.to_dict() for r in self.results],
                "base_results": [r.to_dict() for r in self.base_results]}


def _threads() -> int:
    raw = os.environ.get("PROPERPO_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"PROPERPO_THREADS must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ValueError("PROPERPO_THREADS must be a positive integer")
    return k


def verify_space(space: ItemSpace, tol: float = 1e-9, monotonicity: bool = True,
                 mono_mode: str = "auto") -> list:
    out = [check_bearability(space, tol), check_wedge_axiom(space, tol),
           check_path_axiom(space, tol)]
    if monotonicity:
        out.append(check_monotonicity(space, tol, mode=mono_mode))
    return out


def verify_klst(table: ChoiceTable, alphas: Sequence[float] = DEFAULT_ALPHAS,
                alpha_mono: float = 0.5, tol: float = 1e-9, mono_mode: str = "auto",
                include_base: bool = True) -> KLSTCertificate:
    """Check all axioms on lottery expansions of ``table``.

    Bearability, wedge and path run at every ``alpha`` in ``alphas``;
    monotonicity runs at ``alpha_mono``.  With ``include_base`` the same four
    checks also run on the table itself and are reported separately.
    """
    jobs = [(a, False) for a in alphas]
    if alpha_mono in alphas:
        jobs = [(a, a == alpha_mono) for a in alphas]
    else:
        jobs.append((alpha_mono, True))

    def run(job):
        a, mono = job
        space = expand(table, a)
        res = verify_space(space, tol, monotonicity=mono, mono_mode=mono_mode)
        if mono and a not in alphas:
            res = [r for r in res if r.axiom == "monotonicity"]
        return res

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = [r for chunk in pool.map(run, jobs) for r in chunk]
    base = verify_space(base_space(table), tol, mono_mode="exhaustive") if include_base else []
    return KLSTCertificate(all(r.passed for r in results), results, tuple(alphas), alpha_mono, base)


def generate_from_model(F: Callable, u: np.ndarray, abstention: Optional[Callable] = None,
                        states=None, actions=None) -> ChoiceTable:
    """Table ``P[x,i,j] = (1 - a(z)) F(z)`` with ``z = u[x,i] - u[x,j]``.

    ``F`` must satisfy ``F(z) + F(-z) <= 1``; ``abstention`` is an optional even
    function ``a`` with values in [0, 1) that removes extra mass.
    """
    fc = check_F_condition(F)
    if not fc.passed:
        raise ValueError(f"F violates F(z) + F(-z) <= 1 at z = {fc.worst_z:g}")
    u = np.atleast_2d(np.asarray(u, dtype=float))
    z = u[:, :, None] - u[:, None, :]
    P = np.asarray(F(z), dtype=float)
    if abstention is not None:
        P = (1.0 - np.asarray(abstention(z), dtype=float)) * P
    return ChoiceTable(P, states=list(states or []), actions=list(actions or []))


def btl_table(u: np.ndarray) -> ChoiceTable:
    return generate_from_model(sigmoid, u)


@dataclass
class Representation:
    """Utilities ``u`` (centered per state) and a piecewise-linear ``F``."""

    u: np.ndarray
    knots_z: np.ndarray
    knots_p: np.ndarray
    residual: float
    hinge: float

    def F(self, z):
        return np.interp(np.asarray(z, dtype=float), self.knots_z, self.knots_p)

    def predict(self) -> np.ndarray:
        z = self.u[:, :, None] - self.u[:, None, :]
        return self.F(z)


def fit_representation(table: ChoiceTable, link_inv: Callable = logit, tol: float = 1e-9,
                       margin: float = 1e-9, proximity: float = 1e-3) -> Representation:
    """Fit utilities whose differences order the same way as the choice probabilities.

    A reference fit solves ``link_inv(P[x,i,j]) ~ u[x,i] - u[x,j]`` by least
    squares.  A linear program then finds, per state, centered utilities that
    minimize hinge violations of the order constraints (``P[a] < P[b]`` needs
    ``z[a] + margin <= z[b]``; ties need equal differences) plus a small L1 pull
    toward the reference, which fixes the scale.  ``F`` interpolates the
    observed probabilities at the fitted differences.
    """
    P = table.probs
    m, n = P.shape[0], P.shape[1]
    eps = 1e-12
    U = np.zeros((m, n))
    hinge_total = 0.0
    for x in range(m):
        target = np.asarray(link_inv(np.clip(P[x], eps, 1 - eps)), dtype=float)
        # least squares on u_i - u_j = target_ij with sum(u) = 0
        rows, rhs = [], []
        for i in range(n):
            for j in range(n):
                if i != j and np.isfinite(target[i, j]):
                    r = np.zeros(n); r[i], r[j] = 1.0, -1.0
                    rows.append(r); rhs.append(target[i, j])
        rows.append(np.ones(n)); rhs.append(0.0)
        ref = np.linalg.lstsq(np.asarray(rows), np.asarray(rhs), rcond=None)[0]
        U[x], h = _order_lp(P[x], ref, tol, margin, proximity)
        hinge_total += h
    z = (U[:, :, None] - U[:, None, :]).ravel()
    p = P.ravel()
    order = np.argsort(z, kind="stable")
    z, p = z[order], p[order]
    kz, kp = [], []
    for zi, pi in zip(z, p):
        if kz and abs(zi - kz[-1]) <= 1e-9:
            kp[-1].append(pi)
        else:
            kz.append(zi); kp.append([pi])
    knots_z = np.asarray(kz)
    knots_p = np.asarray([np.mean(v) for v in kp])
    rep = Representation(U, knots_z, knots_p, 0.0, hinge_total)
    rep.residual = float(np.max(np.abs(rep.predict() - P)))
    if hinge_total > 1e3 * tol or np.any(np.diff(knots_p) < -tol):
        raise NotRepresentableError(
            f"not representable at tolerance: hinge {hinge_total:.3g}, residual {rep.residual:.3g}")
    return rep


def _order_lp(Px, ref, tol, margin, proximity):
    n = Px.shape[0]
    pairs = [(i, j) for i in range(n) for j in range(n)]
    cons = []  # (pair_lo, pair_hi, is_tie)
    for a in range(len(pairs)):
        for b in range(len(pairs)):
            if a == b:
                continue
            pa, pb = Px[pairs[a]], Px[pairs[b]]
            if abs(pa - pb) <= tol:
                if a < b:
                    cons.append((a, b, True))
            elif pa < pb:
                cons.append((a, b, False))
    k = len(cons)
    # variables: u (n), slack (k), t (n) with t >= |u - ref|
    nv = n + k + n
    c = np.concatenate([np.zeros(n), np.ones(k), proximity * np.ones(n)])
    A, bvec = [], []

    def diff_row(pair):
        r = np.zeros(nv)
        i, j = pair
        r[i] += 1.0
        r[j] -= 1.0
        return r

    for s, (a, b, tie) in enumerate(cons):
        da, db = diff_row(pairs[a]), diff_row(pairs[b])
        row = da - db
        row[n + s] = -1.0
        A.append(row); bvec.append(0.0 if tie else -margin)
        if tie:
            row = db - da
            row[n + s] = -1.0
            A.append(row); bvec.append(0.0)
    for i in range(n):
        r = np.zeros(nv); r[i] = 1.0; r[n + k + i] = -1.0
        A.append(r); bvec.append(ref[i])
        r = np.zeros(nv); r[i] = -1.0; r[n + k + i] = -1.0
        A.append(r); bvec.append(-ref[i])
    A_eq = np.zeros((1, nv)); A_eq[0, :n] = 1.0
    bounds = [(None, None)] * n + [(0, None)] * k + [(0, None)] * n
    res = linprog(c, A_ub=np.asarray(A), b_ub=np.asarray(bvec), A_eq=A_eq, b_eq=[0.0],
                  bounds=bounds, method="highs")
    if not res.success:
        raise NotRepresentableError(f"order LP failed: {res.message}")
    return res.x[:n], float(np.sum(res.x[n:n + k]))
