"""Preference-optimization pipeline: regularized policy solve, reward
recovery, choice probabilities and the training objective.

Notation: ``G`` is the selection of the multiclass loss ``lb`` (``G = -lb``
unless the loss overrides it).  For a state ``x`` and actions ``i, j`` the
implied reward difference is

    d_ij = G_i(pi_theta) - G_i(pi_ref) - G_j(pi_theta) + G_j(pi_ref).

The surrogate ``psi`` is stored as an increasing function (the conjugate
orientation); a preferred/rejected pair ``(w, l)`` costs ``psi(-d_wl)``.  With
the log loss on both sides ``psi`` is softplus and the objective is DPO.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import catalog
from .constructors import EligiblePotential, phi_po_build, phi_po_multiclass
from .core_math import safe_mul, sigmoid, softplus
from .proper_loss import (BinaryLoss, ConvexPotential, MulticlassLoss, check_F_condition,
                          check_proper, conjugate, numeric_link_inverse, potential_from_loss)

RECIPES = ("pmpo", "pppo", "phi_po")
LENGTH_MODES = ("none", "kl_geometric", "is_harmonic")


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""


@dataclass
class PipelineSpec:
    """Everything needed to evaluate the objective for one recipe.

    ``psi`` must be increasing with derivative ``dpsi``.  ``F`` maps reward
    differences to choice probabilities (used for reporting only in the
    ``pmpo`` recipe).  ``margin = (a, c)`` replaces the binary loss by
    ``(a*l0, a*l1 + c)``, which turns each term into ``a*psi((c - d)/a)``.
    """

    recipe: str
    lb: MulticlassLoss
    psi: Callable
    dpsi: Callable
    F: Optional[Callable] = None
    la: Optional[BinaryLoss] = None
    margin: tuple = (1.0, 0.0)
    length_norm: str = "none"
    name: str = ""

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ValueError(f"unknown recipe {self.recipe!r}")
        if self.length_norm not in LENGTH_MODES:
            raise ValueError(f"unknown length normalization {self.length_norm!r}")
        a, _ = self.margin
        if not a > 0:
            raise ValueError("margin scale a must be positive")

    @property
    def gamma(self) -> float:
        a, c = self.margin
        return c / a

    def term(self, d):
        a, c = self.margin
        return a * np.asarray(self.psi((c - np.asarray(d, dtype=float)) / a), dtype=float)

    def dterm(self, d):
        a, c = self.margin
        return -np.asarray(self.dpsi((c - np.asarray(d, dtype=float)) / a), dtype=float)

    def choice_link(self, d):
        if self.F is None:
            raise ValueError(f"spec {self.name!r} has no link F")
        a, c = self.margin
        return np.asarray(self.F((np.asarray(d, dtype=float) + c) / a), dtype=float)


def _check_increasing(psi, lo=-30.0, hi=30.0, n=6001):
    z = np.linspace(lo, hi, n)
    v = np.asarray(psi(z), dtype=float)
    bad = np.flatnonzero(~(np.diff(v) > 0))
    if bad.size:
        raise ValueError(f"psi is not strictly increasing near z={z[bad[0]]:.4g}")


def pppo_spec(la: BinaryLoss, lb: MulticlassLoss, margin=(1.0, 0.0), length_norm="none",
              certify: bool = True, name: str = "") -> PipelineSpec:
    """Recipe with ``psi`` the conjugate of the Bayes potential of ``la``.

    The derivative of the conjugate is the inverse link, so ``dpsi = F``.
    """
    F = la.link_inv if la.link_inv is not None else numeric_link_inverse(la)
    psi = la.conj
    if psi is None:
        pot = potential_from_loss(la, certify=False)

        def psi(z):
            return conjugate(pot, z)
    if certify:
        cert = check_proper(la, resolution=20)
        if not cert.strict:
            raise ValueError(f"loss {la.name!r} is not strictly proper ({cert.verdict})")
        fc = check_F_condition(F)
        if not fc.passed:
            raise ValueError(f"link of {la.name!r} violates F(z) + F(-z) <= 1 at z={fc.worst_z:g}")
    return PipelineSpec("pppo", lb=lb, psi=psi, dpsi=F, F=F, la=la, margin=tuple(margin),
                        length_norm=length_norm, name=name or f"pppo[{la.name},{lb.name}]")


def pmpo_spec(psi: Callable, dpsi: Callable, lb: MulticlassLoss, F: Optional[Callable] = None,
              margin=(1.0, 0.0), length_norm="none", name: str = "") -> PipelineSpec:
    """Recipe with a user-supplied strictly increasing ``psi``."""
    _check_increasing(psi)
    return PipelineSpec("pmpo", lb=lb, psi=psi, dpsi=dpsi, F=F, margin=tuple(margin),
                        length_norm=length_norm, name=name or f"pmpo[{lb.name}]")


def phi_po_spec(pot: EligiblePotential, margin=(1.0, 0.0), length_norm="none") -> PipelineSpec:
    """Recipe driven by one potential: the binary loss built from it and the
    one-vs-rest lift of its symmetrization."""
    la = phi_po_build(pot).loss
    lb = phi_po_multiclass(pot)
    spec = pppo_spec(la, lb, margin, length_norm, certify=False, name=f"phi_po[{pot.name}]")
    spec.recipe = "phi_po"
    return spec


def dpo_spec(margin=(1.0, 0.0), length_norm="none") -> PipelineSpec:
    log = catalog.get("log")
    return pppo_spec(log.binary, log.multiclass, margin, length_norm, certify=False, name="dpo")


def catalog_spec(la_id: str, lb_id: str, la_params: Optional[dict] = None,
                 lb_params: Optional[dict] = None, margin=(1.0, 0.0),
                 length_norm="none") -> PipelineSpec:
    la = catalog.get(la_id, **(la_params or {}))
    lb = catalog.get(lb_id, **(lb_params or {}))
    return pppo_spec(la.binary, lb.multiclass, margin, length_norm,
                     name=f"pppo[{la_id},{lb_id}]")


PSI_LIBRARY = {
    "softplus": (softplus, sigmoid),
    "identity": (lambda z: np.asarray(z, dtype=float), lambda z: np.ones_like(np.asarray(z, dtype=float))),
    "sine_ramp": (lambda z: np.asarray(z) + 0.4 * np.sin(z), lambda z: 1.0 + 0.4 * np.cos(z)),
    "exp": (np.exp, np.exp),
}


def spec_from_dict(obj: dict) -> PipelineSpec:
    """Build a spec from its JSON form.

    ``{"recipe": "pppo", "la": {"id": "log"}, "lb": {"id": "log"}}``,
    ``{"recipe": "pmpo", "psi": "sine_ramp", "lb": {"id": "log"}}`` or
    ``{"recipe": "phi_po", "potential": "neg_entropy"}``; optional
    ``"margin": [a, c]`` and ``"length_norm"``.
    """
    from .constructors import POTENTIALS

    recipe = obj["recipe"]
    margin = tuple(obj.get("margin", (1.0, 0.0)))
    ln = obj.get("length_norm", "none")

    def entry(key):
        d = dict(obj[key])
        return catalog.get(d.pop("id"), **d)

    if recipe == "pppo":
        la, lb = entry("la"), entry("lb")
        return pppo_spec(la.binary, lb.multiclass, margin, ln,
                         name=f"pppo[{la.binary.name},{lb.multiclass.name}]")
    if recipe == "pmpo":
        psi_name = obj["psi"]
        if psi_name not in PSI_LIBRARY:
            raise KeyError(f"unknown psi {psi_name!r}; known: {sorted(PSI_LIBRARY)}")
        psi, dpsi = PSI_LIBRARY[psi_name]
        lb = entry("lb")
        return pmpo_spec(psi, dpsi, lb.multiclass, margin=margin, length_norm=ln,
                         name=f"pmpo[{psi_name},{lb.multiclass.name}]")
    if recipe == "phi_po":
        name = obj["potential"]
        if name not in POTENTIALS:
            raise KeyError(f"unknown potential {name!r}; known: {sorted(POTENTIALS)}")
        return phi_po_spec(POTENTIALS[name](), margin, ln)
    raise ValueError(f"unknown recipe {recipe!r}")


# ---------------------------------------------------------------- step 1


def neg_entropy_potential() -> ConvexPotential:
    def value(p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sum(safe_mul(p, np.log(p)), axis=-1)

    return ConvexPotential(value=value, grad=lambda p: np.log(p) + 1.0,
                           grad_inv=lambda v: np.exp(v - 1.0),
                           scalar=False, separable=True, name="neg_entropy")


def itakura_saito_potential() -> ConvexPotential:
    def grad_inv(v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(v < 0, -1.0 / np.where(v < 0, v, -1.0), np.inf)

    return ConvexPotential(value=lambda p: -np.sum(np.log(p), axis=-1), grad=lambda p: -1.0 / p,
                           grad_inv=grad_inv, scalar=False, separable=True,
                           name="itakura_saito")


def squared_euclidean_potential() -> ConvexPotential:
    return ConvexPotential(value=lambda p: np.sum(np.asarray(p) ** 2, axis=-1),
                           grad=lambda p: 2.0 * np.asarray(p),
                           grad_inv=lambda v: np.maximum(np.asarray(v) / 2.0, 0.0),
                           scalar=False, separable=True, name="squared_euclidean")


STEP1_POTENTIALS = {"neg_entropy": neg_entropy_potential,
                    "itakura_saito": itakura_saito_potential,
                    "squared_euclidean": squared_euclidean_potential}


@dataclass
class Step1Result:
    pi: np.ndarray
    kkt_residual: float
    iterations: int
    interior: bool
    closed_form_gap: Optional[float] = None


def kl_closed_form(r, pi_ref) -> np.ndarray:
    """``pi* ∝ pi_ref * exp(r)``, the solution for the negative entropy."""
    s = np.log(np.asarray(pi_ref, dtype=float)) + np.asarray(r, dtype=float)
    s = s - s.max()
    e = np.exp(s)
    return e / e.sum()


def kkt_residual(r, pi, pi_ref, pot: ConvexPotential) -> float:
    """Violation of the optimality conditions of the step-1 problem.

    On the support of ``pi`` the quantity ``v = r - G(pi) + G(pi_ref)`` must be
    constant (the normalization multiplier); off the support it must not
    exceed that constant.
    """
    support = pi > 0
    with np.errstate(all="ignore"):
        v = np.asarray(r, dtype=float) - pot.G(pi) + pot.G(pi_ref)
    vs = v[support]
    res = float(vs.max() - vs.min())
    if np.any(~support):
        res = max(res, float(np.max(v[~support]) - vs.max()))
    return res


def _project(theta, grad_inv, tol=1e-15):
    """Bregman projection: ``pi_i = grad_inv(theta_i - lam)`` with ``sum pi = 1``."""
    def total(lam):
        with np.errstate(all="ignore"):
            return float(np.sum(grad_inv(theta - lam)))

    lo, hi = float(np.min(theta)) - 1.0, float(np.max(theta)) + 1.0
    step = 1.0
    while not total(lo) > 1.0:
        step *= 2.0
        lo -= step
        if step > 1e12:
            raise ConvergenceError("cannot bracket the normalization multiplier")
    step = 1.0
    while not total(hi) < 1.0:
        step *= 2.0
        hi += step
        if step > 1e12:
            raise ConvergenceError("cannot bracket the normalization multiplier")
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if total(mid) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    pi = np.asarray(grad_inv(theta - 0.5 * (lo + hi)), dtype=float)
    return pi / pi.sum()


def _simplex_projection(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def _check_convex(pot, n, rng):
    pts = rng.dirichlet(np.ones(n), size=200)
    u, v = pts[:100], pts[100:]
    if np.any(pot((u + v) / 2) > (pot(u) + pot(v)) / 2 + 1e-10):
        raise ValueError(f"potential {pot.name!r} is not convex")


def solve_step1(r, pi_ref, pot: ConvexPotential, eta: float = 0.1, tol: float = 1e-12,
                max_iter: int = 100_000) -> Step1Result:
    """Maximize ``r . pi - D(pi || pi_ref)`` over the simplex.

    With a coordinatewise gradient inverse this is mirror ascent in the
    gradient coordinates, each step followed by a Bregman projection found by
    bisection on the normalization multiplier.  Otherwise projected gradient
    ascent is used.  Steps that do not increase the objective are halved.
    Iteration stops once the KKT residual is below ``tol``.
    """
    r = np.asarray(r, dtype=float)
    pi_ref = np.asarray(pi_ref, dtype=float)
    if np.any(pi_ref <= 0):
        raise ValueError("reference policy must be interior")
    rng = np.random.default_rng(0)
    _check_convex(pot, r.size, rng)
    g_ref = pot.G(pi_ref)
    phi_ref = float(pot(pi_ref))

    def J(pi):
        with np.errstate(all="ignore"):
            d = float(pot(pi)) - phi_ref - float(np.sum(safe_mul(pi - pi_ref, g_ref)))
        return float(r @ pi) - d

    pi = pi_ref.copy()
    step = eta
    it = 0
    res = kkt_residual(r, pi, pi_ref, pot)
    while res > tol and it < max_iter:
        it += 1
        cur = J(pi)
        while True:
            if pot.grad_inv is not None and pot.separable:
                theta = pot.G(pi) + step * (r - pot.G(pi) + g_ref)
                cand = _project(theta, pot.grad_inv)
            else:
                grad = r - pot.G(np.maximum(pi, 1e-300)) + g_ref
                cand = _simplex_projection(pi + step * grad)
            if J(cand) >= cur - 1e-15 * max(1.0, abs(cur)) or step < 1e-12:
                break
            step /= 2.0
        if np.max(np.abs(cand - pi)) == 0.0:
            pi = cand
            break
        pi = cand
        res = kkt_residual(r, pi, pi_ref, pot)
    if res > max(tol, 1e-6):
        raise ConvergenceError(f"step-1 solve stopped at KKT residual {res:.3g} after {it} iterations")
    gap = None
    if pot.name == "neg_entropy":
        gap = float(np.max(np.abs(pi - kl_closed_form(r, pi_ref))))
    return Step1Result(pi, res, it, bool(np.all(pi > 0)), gap)


def recover_reward_diffs(pi_star, pi_ref, G: Callable) -> np.ndarray:
    """``M[i, j] = G_i(pi*) - G_i(pi_ref) - G_j(pi*) + G_j(pi_ref)``."""
    pi_star = np.asarray(pi_star, dtype=float)
    if np.any(pi_star <= 0):
        raise ValueError("reward differences are only identified for interior solutions")
    g = np.asarray(G(pi_star), dtype=float) - np.asarray(G(np.asarray(pi_ref, dtype=float)),
                                                        dtype=float)
    return g[:, None] - g[None, :]


# -------------------------------------------------------- choice and objective


def length_transform(pi, mode: str, lengths=None, alphas=None):
    """Normalized probabilities and their derivative with respect to ``pi``."""
    pi = np.asarray(pi, dtype=float)
    if mode == "none":
        return pi, np.ones_like(pi)
    if lengths is None:
        raise ValueError(f"length normalization {mode!r} needs sequence lengths")
    lengths = np.broadcast_to(np.asarray(lengths, dtype=float), pi.shape)
    if mode == "kl_geometric":
        t = pi ** (1.0 / lengths)
        return t, t / (lengths * pi)
    if mode == "is_harmonic":
        a = np.zeros_like(pi) if alphas is None else np.broadcast_to(np.asarray(alphas, dtype=float), pi.shape)
        scale = np.exp(a * lengths)
        return pi * scale, scale
    raise ValueError(f"unknown length normalization {mode!r}")


def reward_diff(spec: PipelineSpec, pi_theta, pi_ref, x: int, i: int, j: int,
                lengths=None, alphas=None) -> float:
    pt, _ = length_transform(np.atleast_2d(pi_theta), spec.length_norm, lengths, alphas)
    pr, _ = length_transform(np.atleast_2d(pi_ref), spec.length_norm, lengths, alphas)
    g = spec.lb.G(pt[x]) - spec.lb.G(pr[x])
    return float(g[i] - g[j])


def choice_prob(spec: PipelineSpec, pi_theta, pi_ref, x: int, i: int, j: int,
                lengths=None, alphas=None) -> float:
    """Probability that action ``i`` beats ``j`` in state ``x`` under the policy."""
    d = reward_diff(spec, pi_theta, pi_ref, x, i, j, lengths, alphas)
    return float(spec.choice_link(d))


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _diffs(spec, pi_theta, pi_ref, triples, lengths, alphas):
    pt, dpt = length_transform(pi_theta, spec.length_norm, lengths, alphas)
    pr, _ = length_transform(pi_ref, spec.length_norm, lengths, alphas)
    g = spec.lb.G(pt) - spec.lb.G(pr)
    x, w, l = triples[:, 0], triples[:, 1], triples[:, 2]
    return g[x, w] - g[x, l], pt, dpt


def objective(spec: PipelineSpec, pi_theta, pi_ref, triples, weights=None,
              lengths=None, alphas=None) -> float:
    """Weighted mean of ``a*psi((c - d_wl)/a)`` over ``(x, w, l)`` triples."""
    triples = np.asarray(triples, dtype=int).reshape(-1, 3)
    if triples.shape[0] == 0:
        raise ValueError("dataset is empty")
    pi_theta = np.atleast_2d(np.asarray(pi_theta, dtype=float))
    pi_ref = np.atleast_2d(np.asarray(pi_ref, dtype=float))
    d, _, _ = _diffs(spec, pi_theta, pi_ref, triples, lengths, alphas)
    terms = spec.term(d)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise ValueError(f"non-finite loss term at triple {int(bad[0])}: {triples[bad[0]].tolist()}")
    wts = np.ones(terms.shape) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(wts * terms) / np.sum(wts))


def objective_and_grad(spec: PipelineSpec, logits, pi_ref, triples, weights=None,
                       lengths=None, alphas=None) -> tuple[float, np.ndarray]:
    """Objective at ``softmax(logits)`` and its gradient with respect to the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    pi = softmax(logits)
    pi_ref = np.atleast_2d(np.asarray(pi_ref, dtype=float))
    triples = np.asarray(triples, dtype=int).reshape(-1, 3)
    d, pt, dpt = _diffs(spec, pi, pi_ref, triples, lengths, alphas)
    terms = spec.term(d)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise ValueError(f"non-finite loss term at triple {int(bad[0])}: {triples[bad[0]].tolist()}")
    wts = np.ones(terms.shape) if weights is None else np.asarray(weights, dtype=float)
    total = np.sum(wts)
    value = float(np.sum(wts * terms) / total)
    coef = wts * spec.dterm(d) / total
    JG = spec.lb.G_jacobian(pt)  # (m, n, n): dG_i / dpt_k
    x, w, l = triples[:, 0], triples[:, 1], triples[:, 2]
    g_pt = np.zeros_like(pi)
    np.add.at(g_pt, x, coef[:, None] * (JG[x, w] - JG[x, l]))
    v = g_pt * dpt
    grad = pi * (v - np.sum(pi * v, axis=-1, keepdims=True))
    return value, grad


# ------------------------------------------------------- length normalization


@dataclass
class LengthNormResult:
    value: float
    alpha: Optional[float] = None


def length_normalize(factors, mode: str, potential: Optional[tuple] = None) -> LengthNormResult:
    """Probability that minimizes the summed divergence to per-token factors.

    ``kl_geometric`` gives the geometric mean of the factors and
    ``is_harmonic`` the harmonic mean, returned together with the exponent
    ``alpha >= 0`` solving ``mean_l prod_{k != l} f_k = exp(-alpha n)``, so that
    the value equals ``prod_k f_k * exp(alpha n)``.  ``"generalized"`` takes
    ``potential = (dphi, dphi_inv)`` and returns ``dphi_inv(mean dphi(f_k))``.
    """
    f = np.asarray(factors, dtype=float).ravel()
    if f.size == 0:
        raise ValueError("need at least one token factor")
    if np.any(f < 0) or np.any(f > 1):
        raise ValueError("token factors must lie in (0, 1]")
    n = f.size
    if mode == "kl_geometric":
        if np.any(f == 0):
            return LengthNormResult(0.0)
        return LengthNormResult(float(np.exp(np.mean(np.log(f)))))
    if mode == "is_harmonic":
        if np.any(f == 0):
            raise ValueError("harmonic normalization needs nonzero token factors")
        log_prod = float(np.sum(np.log(f)))
        log_gamma = log_prod + float(np.log(np.mean(1.0 / f)))
        alpha = -log_gamma / n
        value = float(np.exp(log_prod + alpha * n))
        return LengthNormResult(value, alpha)
    if mode == "generalized":
        if potential is None:
            raise ValueError("generalized mode needs (dphi, dphi_inv)")
        dphi, dphi_inv = potential
        return LengthNormResult(float(dphi_inv(np.mean(dphi(f)))))
    raise ValueError(f"unknown mode {mode!r}")


def oracle_length_solution(factors, phi: Callable, dphi: Callable) -> float:
    """Minimize ``sum_k D(t || f_k)`` over ``t`` in ``[min f, max f]`` directly.

    A dense grid locates the basin and a bounded scalar minimization refines
    it.  Only ``phi`` and ``dphi`` at the factors are used, so this does not
    rely on any generalized-mean formula.
    """
    f = np.asarray(factors, dtype=float).ravel()
    lo, hi = float(f.min()), float(f.max())
    if hi - lo <= 1e-15:
        return lo
    phi_f = np.asarray(phi(f), dtype=float)
    dphi_f = np.asarray(dphi(f), dtype=float)

    def total(t):
        return float(np.sum(phi(np.array(t)) - phi_f - (t - f) * dphi_f))

    grid = np.linspace(lo, hi, 2001)
    vals = np.array([total(t) for t in grid])
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(total, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-14, "maxiter": 500})
    return float(res.x)


__all__ = ["PipelineSpec", "pppo_spec", "pmpo_spec", "phi_po_spec", "dpo_spec", "catalog_spec",
           "spec_from_dict", "solve_step1", "recover_reward_diffs", "choice_prob", "objective",
           "objective_and_grad", "length_normalize", "oracle_length_solution", "kl_closed_form",
           "STEP1_POTENTIALS"]
