"""Binary and multiclass proper losses together with their potentials and links.

A binary loss is a pair of partial losses ``(l0, l1)``: ``l1(q)`` is paid when
the event happens and ``l0(q)`` when it does not, where ``q`` is the predicted
probability of the event.  Its pointwise risk is ``p*l1(q) + (1-p)*l0(q)``.

A multiclass loss maps a prediction ``q`` on the simplex to the vector of
partial losses ``l(q)``; the pointwise risk is ``p . l(q)``.  Products of a zero
probability with an infinite partial loss count as zero throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core_math import (ScalarFn, check_prob_vector, invert_monotone, safe_mul,
                        simplex_grid)

STRICT_DELTA = 1e-8
EPS_BRACKET = 1e-15


class NotConvexError(ValueError):
    """A potential failed the midpoint convexity test."""

    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


class ImproperLossError(ValueError):
    """A loss that must be proper failed certification."""

    def __init__(self, message, certificate):
        super().__init__(message)
        self.certificate = certificate


@dataclass(frozen=True)
class BinaryLoss:
    """Partial losses of a binary proper loss plus optional closed forms.

    ``link_inv`` is the inverse canonical link ``F = H^{-1}`` and ``conj`` the
    convex conjugate of the Bayes potential, when known in closed form.
    ``dl0``/``dl1`` are derivatives of the partial losses.
    """

    l0: Callable
    l1: Callable
    name: str = ""
    symmetric: bool = False
    dl0: Optional[Callable] = None
    dl1: Optional[Callable] = None
    link_inv: Optional[Callable] = None
    conj: Optional[Callable] = None

    def partial(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.asarray(self.l0(q), dtype=float), np.asarray(self.l1(q), dtype=float)

    def risk(self, p, q):
        """Pointwise risk ``p*l1(q) + (1-p)*l0(q)``."""
        p = np.asarray(p, dtype=float)
        v0, v1 = self.partial(q)
        return safe_mul(p, v1) + safe_mul(1.0 - p, v0)

    def bayes(self, p):
        return self.risk(p, p)

    def potential(self, p):
        """Bayes potential ``phi(p) = -L(p, p)``, convex for proper losses."""
        return -self.bayes(p)

    def link(self, p):
        """Canonical link ``H = l0 - l1``, the derivative of the potential."""
        v0, v1 = self.partial(p)
        with np.errstate(invalid="ignore"):
            return v0 - v1

    def link_derivative(self, p):
        if self.dl0 is None or self.dl1 is None:
            raise ValueError(f"loss {self.name!r} has no partial-loss derivatives")
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(self.dl0(p), dtype=float) - np.asarray(self.dl1(p), dtype=float)

    def as_multiclass(self) -> "MulticlassLoss":
        """Two-class view: class 0 is the event, predicted with probability ``q[0]``."""
        l0, l1, dl0, dl1 = self.l0, self.l1, self.dl0, self.dl1

        def loss(q):
            q0 = np.asarray(q, dtype=float)[..., 0]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                return np.stack([np.broadcast_to(l1(q0), q0.shape),
                                 np.broadcast_to(l0(q0), q0.shape)], axis=-1).astype(float)

        jac = None
        if dl0 is not None and dl1 is not None:
            def jac(q):
                q0 = np.asarray(q, dtype=float)[..., 0]
                out = np.zeros(q0.shape + (2, 2))
                with np.errstate(divide="ignore", invalid="ignore"):
                    out[..., 0, 0] = dl1(q0)
                    out[..., 1, 0] = dl0(q0)
                return out

        return MulticlassLoss(loss=loss, jacobian=jac, name=self.name, n=2)


@dataclass(frozen=True)
class MulticlassLoss:
    """A vector of partial losses on the simplex, with an optional Jacobian.

    ``loss(q)`` maps an array of shape ``(..., n)`` to partial losses of the same
    shape and ``jacobian(q)`` returns ``d loss_i / d q_k`` with shape
    ``(..., n, n)``.  The selection ``G`` defaults to ``-loss``; a loss built
    from a potential may override it.  ``n`` is ``None`` for losses defined in
    every dimension.
    """

    loss: Callable
    jacobian: Optional[Callable] = None
    name: str = ""
    n: Optional[int] = None
    separable: bool = False
    selection: Optional[Callable] = None
    selection_jacobian: Optional[Callable] = None

    def __call__(self, q):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.asarray(self.loss(np.asarray(q, dtype=float)), dtype=float)

    def G(self, q):
        if self.selection is not None:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                return np.asarray(self.selection(np.asarray(q, dtype=float)), dtype=float)
        return -self(q)

    def G_jacobian(self, q):
        if self.selection is not None:
            if self.selection_jacobian is None:
                raise ValueError(f"loss {self.name!r} has no selection Jacobian")
            return np.asarray(self.selection_jacobian(np.asarray(q, dtype=float)), dtype=float)
        if self.jacobian is None:
            raise ValueError(f"loss {self.name!r} has no Jacobian")
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return -np.asarray(self.jacobian(np.asarray(q, dtype=float)), dtype=float)


@dataclass(frozen=True)
class ConvexPotential:
    """A convex function together with a selection of its (sub)gradient.

    For a scalar potential ``value`` and ``grad`` act on probabilities in
    ``domain``; for a vector potential they act on the last axis.  ``grad_inv``
    is the inverse of the gradient map when it is known (for separable vector
    potentials it acts coordinatewise).
    """

    value: Callable
    grad: Callable
    grad_inv: Optional[Callable] = None
    hess: Optional[Callable] = None
    domain: tuple[float, float] = (0.0, 1.0)
    scalar: bool = True
    separable: bool = False
    name: str = ""

    def __call__(self, x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.asarray(self.value(np.asarray(x, dtype=float)), dtype=float)

    def G(self, x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float)


def as_multiclass(L) -> MulticlassLoss:
    return L.as_multiclass() if isinstance(L, BinaryLoss) else L


def pointwise_risk(L, p, q):
    """``L(p, q) = p . l(q)`` with ``0 * inf = 0``."""
    L = as_multiclass(L)
    p = np.asarray(p, dtype=float)
    vals = L(q)
    return np.sum(safe_mul(p, vals), axis=-1)


def bayes_risk(L, p):
    return pointwise_risk(L, p, p)


def _midpoint_convexity(phi, points, rng, n_pairs=400, tol=1e-10):
    """Return a witness ``(u, v)`` violating midpoint convexity, or ``None``."""
    if len(points) < 2:
        return None
    i = rng.integers(0, len(points), size=n_pairs)
    j = rng.integers(0, len(points), size=n_pairs)
    u, v = points[i], points[j]
    with np.errstate(invalid="ignore"):
        lhs = phi((u + v) / 2.0)
        rhs = (phi(u) + phi(v)) / 2.0 + tol
    bad = np.flatnonzero(lhs > rhs)
    if bad.size:
        k = bad[0]
        return (u[k], v[k])
    return None


def potential_from_loss(L, certify: bool = True, n: int = 3, resolution: int = 12,
                        seed: int = 0) -> ConvexPotential:
    """Bayes potential ``phi(p) = -L(p, p)`` with selection ``G = -l``.

    A binary loss gives a scalar potential whose derivative is the canonical
    link.  With ``certify`` the midpoint convexity test runs on sampled pairs.
    """
    rng = np.random.default_rng(seed)
    if isinstance(L, BinaryLoss):
        pot = ConvexPotential(value=L.potential, grad=L.link,
                              grad_inv=L.link_inv, scalar=True,
                              name=f"phi[{L.name}]")
        pts = np.linspace(0.0, 1.0, 101)
    else:
        dim = L.n or n

        def value(p):
            return -bayes_risk(L, p)

        pot = ConvexPotential(value=value, grad=L.G, scalar=False,
                              separable=L.separable, name=f"phi[{L.name}]")
        pts = simplex_grid(dim, resolution)
    if certify:
        w = _midpoint_convexity(pot, pts, rng)
        if w is not None:
            raise NotConvexError(f"potential of {L.name!r} is not convex", w)
    return pot


def canonical_link(loss: BinaryLoss) -> ScalarFn:
    """The canonical link ``H = l0 - l1`` as a :class:`ScalarFn` on [0, 1]."""
    return ScalarFn(loss.link, domain=(0.0, 1.0), monotone="increasing",
                    deriv=(loss.link_derivative if loss.dl0 is not None else None),
                    name=f"H[{loss.name}]")


def numeric_link_inverse(loss: BinaryLoss, tol: float = 1e-13) -> ScalarFn:
    """``F = H^{-1}`` by bisection, saturating at 0 and 1 outside the range of ``H``."""
    H = loss.link
    with np.errstate(all="ignore"):
        h0, h1 = (float(v) for v in H(np.array([0.0, 1.0])))

    def F(z):
        z = np.asarray(z, dtype=float)
        zz = np.atleast_1d(z)
        out = np.empty_like(zz)
        low, high = zz <= h0, zz >= h1
        out[low], out[high] = 0.0, 1.0
        mid = ~(low | high)
        if np.any(mid):
            out[mid] = invert_monotone(H, zz[mid], (0.0, 1.0), tol=tol)
        return out.reshape(z.shape) if z.ndim else float(out[0])

    return ScalarFn(F, monotone="increasing", name=f"F[{loss.name}]")


def conjugate_argmax(pot: ConvexPotential, z, grid: int = 4001):
    """Maximizer ``t*`` of ``z t - phi(t)`` over the potential's domain.

    Returns ``(t, at_boundary)``.  When ``grad_inv`` is available it is used
    directly; otherwise the gradient is inverted by bisection between the
    grid points that bracket ``z``.  A target outside the range of the
    gradient means the supremum sits at an endpoint of the domain.
    """
    lo, hi = pot.domain
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    t = np.empty_like(z_arr)
    boundary = np.zeros(z_arr.shape, dtype=bool)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        if pot.grad_inv is None:
            raise ValueError("unbounded domain needs a closed-form gradient inverse")
        t = np.asarray(pot.grad_inv(z_arr), dtype=float)
        return t, boundary
    xs = np.linspace(lo, hi, grid)
    g = pot.G(xs)
    for k, zk in enumerate(z_arr):
        if zk <= g[0]:
            t[k], boundary[k] = lo, not np.isclose(zk, g[0], rtol=0, atol=1e-15)
            continue
        if zk >= g[-1]:
            t[k], boundary[k] = hi, not np.isclose(zk, g[-1], rtol=0, atol=1e-15)
            continue
        if pot.grad_inv is not None:
            t[k] = float(pot.grad_inv(zk))
            continue
        j = int(np.searchsorted(g, zk))
        a, b = xs[max(j - 1, 0)], xs[min(j, grid - 1)]
        t[k] = invert_monotone(pot.G, zk, (a, b), tol=1e-14)
    return t, boundary


def conjugate(pot: ConvexPotential, z, return_boundary: bool = False):
    """Convex conjugate ``phi*(z) = sup_t z t - phi(t)`` of a scalar potential.

    When the supremum is only reached at an end of the domain, the boundary
    value is returned and, with ``return_boundary``, flagged.
    """
    z_arr = np.asarray(z, dtype=float)
    t, boundary = conjugate_argmax(pot, z_arr)
    vals = np.atleast_1d(z_arr) * t - pot(t)
    vals = vals.reshape(z_arr.shape) if z_arr.ndim else float(vals[0])
    if return_boundary:
        return vals, (boundary.reshape(z_arr.shape) if z_arr.ndim else bool(boundary[0]))
    return vals


def bregman(pot: ConvexPotential, u, v):
    """``D(u || v) = phi(u) - phi(v) - (u - v) . G(v)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    diff = u - v
    g = pot.G(v)
    inner = safe_mul(diff, g)
    if not pot.scalar:
        inner = np.sum(inner, axis=-1)
    return pot(u) - pot(v) - inner


def loss_from_potential(pot: ConvexPotential, name: str = "") -> MulticlassLoss:
    """Savage representation ``l_i(q) = -phi(q) - G_i(q) + q . G(q)``.

    The resulting loss satisfies ``L(p, q) - L(p, p) = D(p || q)``.
    """
    def loss(q):
        q = np.asarray(q, dtype=float)
        g = pot.G(q)
        inner = np.sum(safe_mul(q, g), axis=-1, keepdims=True)
        return -pot(q)[..., None] - g + inner

    return MulticlassLoss(loss=loss, name=name or f"savage[{pot.name}]")


@dataclass
class ProperCertificate:
    """Outcome of a grid search for properness violations.

    ``margin`` is the smallest regret ``L(p, q) - L(p, p)`` over pairs with
    ``p != q``; ``worst_pair`` is where it is attained.  ``strict_margin`` is
    the smallest value of ``regret - delta * |p - q|^2`` over interior pairs.
    """

    loss_id: str
    n: int
    resolution: int
    tol: float
    verdict: str
    worst_pair: tuple
    margin: float
    strict_margin: float
    pairs_checked: int

    @property
    def proper(self) -> bool:
        return self.verdict in ("proper", "strictly proper")

    @property
    def strict(self) -> bool:
        return self.verdict == "strictly proper"

    def to_dict(self) -> dict:
        p, q = self.worst_pair
        return {
            "loss_id": self.loss_id,
            "n": self.n,
            "resolution": self.resolution,
            "tol": self.tol,
            "verdict": self.verdict,
            "worst_pair": {"p": [float(x) for x in p], "q": [float(x) for x in q]},
            "margin": float(self.margin),
            "strict_margin": float(self.strict_margin),
            "pairs_checked": int(self.pairs_checked),
        }


def regret_matrix(L, targets: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """``R[a, b] = L(targets[a], preds[b])`` computed with the zero-mass convention."""
    L = as_multiclass(L)
    vals = L(preds)
    if np.any(np.isnan(vals)):
        k = int(np.argwhere(np.isnan(vals))[0][0])
        raise ValueError(f"loss {L.name!r} is NaN at q={preds[k].tolist()}")
    inf = np.isinf(vals)
    if np.any(vals == -np.inf):
        raise ValueError(f"loss {L.name!r} takes the value -inf")
    finite = np.where(inf, 0.0, vals)
    R = targets @ finite.T
    blown = (targets > 0).astype(float) @ inf.T.astype(float)
    return np.where(blown > 0, np.inf, R)


def check_proper(L, n: Optional[int] = None, resolution: int = 20, tol: float = 1e-10,
                 delta: float = STRICT_DELTA, loss_id: Optional[str] = None,
                 targets: Optional[np.ndarray] = None,
                 preds: Optional[np.ndarray] = None) -> ProperCertificate:
    """Search a simplex grid for targets ``p`` and predictions ``q`` with
    ``L(p, q) < L(p, p) - tol``.

    Strictness is judged on interior pairs only: every interior ``p != q``
    must satisfy ``L(p, q) - L(p, p) >= delta * |p - q|^2``.  ``targets`` and
    ``preds`` override the grid, for restricted searches.
    """
    L = as_multiclass(L)
    n = L.n or n
    if n is None:
        raise ValueError("dimension n is required for a dimension-free loss")
    grid = simplex_grid(n, resolution)
    P = grid if targets is None else np.asarray(targets, dtype=float)
    Q = grid if preds is None else np.asarray(preds, dtype=float)
    R = regret_matrix(L, P, Q)
    diag = bayes_risk(L, P)
    if np.any(~np.isfinite(diag)):
        k = int(np.flatnonzero(~np.isfinite(diag))[0])
        raise ValueError(f"Bayes risk of {L.name!r} is not finite at p={P[k].tolist()}")
    with np.errstate(invalid="ignore"):
        gap = R - diag[:, None]
    dist2 = np.sum((P[:, None, :] - Q[None, :, :]) ** 2, axis=-1)
    off = dist2 > 1e-24
    gap_off = np.where(off, gap, np.inf)
    a, b = np.unravel_index(int(np.argmin(gap_off)), gap_off.shape)
    margin = float(gap_off[a, b])
    interior = (np.all(P > 0, axis=1)[:, None]) & (np.all(Q > 0, axis=1)[None, :]) & off
    strict_gap = np.where(interior, gap - delta * dist2, np.inf)
    strict_margin = float(np.min(strict_gap)) if np.any(interior) else np.inf
    if margin < -tol:
        verdict = "improper"
    elif strict_margin > 0:
        verdict = "strictly proper"
    else:
        verdict = "proper"
    if verdict != "improper" and strict_margin <= 0 and np.any(interior):
        a, b = np.unravel_index(int(np.argmin(strict_gap)), strict_gap.shape)
    return ProperCertificate(loss_id=loss_id or L.name, n=n, resolution=resolution, tol=tol,
                             verdict=verdict, worst_pair=(P[a].copy(), Q[b].copy()),
                             margin=margin, strict_margin=strict_margin,
                             pairs_checked=int(np.count_nonzero(off)))


@dataclass
class FConditionResult:
    """Result of testing ``F(z) + F(-z) <= 1`` on a sample of ``z``.

    ``debreu`` reports equality everywhere (no abstention mass).
    """

    passed: bool
    debreu: bool
    worst_z: float
    worst_sum: float
    F_at_worst: float

    def to_dict(self):
        return {"passed": self.passed, "debreu": self.debreu, "worst_z": self.worst_z,
                "worst_sum": self.worst_sum, "F_at_worst": self.F_at_worst}


def check_F_condition(F: Callable, sample=None, tol: float = 1e-12) -> FConditionResult:
    """Test the choice-probability condition ``F(z) + F(-z) <= 1``."""
    if sample is None:
        sample = np.concatenate([np.linspace(-20.0, 20.0, 4001), [0.0]])
    z = np.unique(np.abs(np.asarray(sample, dtype=float)))
    with np.errstate(all="ignore"):
        s = np.asarray(F(z), dtype=float) + np.asarray(F(-z), dtype=float)
    if np.any(np.isnan(s)):
        raise ValueError("F returned NaN on the sample")
    k = int(np.argmax(s))
    return FConditionResult(passed=bool(s[k] <= 1.0 + tol),
                            debreu=bool(np.all(np.abs(s - 1.0) <= tol)),
                            worst_z=float(z[k]), worst_sum=float(s[k]),
                            F_at_worst=float(np.asarray(F(np.array([z[k]])))[0]))


def one_vs_rest_lift(loss: BinaryLoss, certify: bool = True, resolution: int = 20,
                     tol: float = 1e-10) -> MulticlassLoss:
    """One-vs-rest multiclass loss built from a binary proper loss.

    ``lift_i(q) = l1(q_i) + sum_{j != i} l0(q_j)``, so that
    ``L(p, q) = sum_j [p_j l1(q_j) + (1 - p_j) l0(q_j)]`` is a sum of binary
    risks and inherits properness coordinatewise.  For the log loss this is
    the binary-entropy loss.
    """
    if certify:
        cert = check_proper(loss, resolution=resolution, tol=tol)
        if not cert.proper:
            raise ImproperLossError(f"cannot lift improper loss {loss.name!r}", cert)
    l0, l1, dl0, dl1 = loss.l0, loss.l1, loss.dl0, loss.dl1

    def lifted(q):
        q = np.asarray(q, dtype=float)
        v0 = np.asarray(l0(q), dtype=float)
        v1 = np.asarray(l1(q), dtype=float)
        n = q.shape[-1]
        others = np.where(np.eye(n, dtype=bool), 0.0, v0[..., None, :])
        return v1 + others.sum(axis=-1)

    jac = None
    if dl0 is not None and dl1 is not None:
        def jac(q):
            q = np.asarray(q, dtype=float)
            n = q.shape[-1]
            d0 = np.asarray(dl0(q), dtype=float)
            d1 = np.asarray(dl1(q), dtype=float)
            eye = np.eye(n, dtype=bool)
            out = np.where(eye, 0.0, d0[..., None, :])
            return out + eye * d1[..., None, :]

    return MulticlassLoss(loss=lifted, jacobian=jac, name=f"ovr[{loss.name}]")


def separable_loss(ell: Callable, dell: Optional[Callable] = None, name: str = "") -> MulticlassLoss:
    """Multiclass loss ``l_i(q) = ell(q_i)``."""
    def loss(q):
        return np.asarray(ell(np.asarray(q, dtype=float)), dtype=float)

    jac = None
    if dell is not None:
        def jac(q):
            q = np.asarray(q, dtype=float)
            d = np.asarray(dell(q), dtype=float)
            return d[..., :, None] * np.eye(q.shape[-1])

    return MulticlassLoss(loss=loss, jacobian=jac, name=name, separable=True)


@dataclass
class MarginTransform:
    """A binary loss rescaled and shifted as ``(a*l0, a*l1 + c)``."""

    loss: BinaryLoss
    a: float
    c: float
    link_inv: Callable
    conj: Callable
    klst_compliant: bool
    f_condition: FConditionResult

    @property
    def gamma(self) -> float:
        return self.c / self.a


def margin_transform(loss: BinaryLoss, a: float, c: float) -> MarginTransform:
    """Apply ``(l0, l1) -> (a*l0, a*l1 + c)`` and report KLST compliance.

    The new link inverse is ``z -> F((z + c)/a)`` and the new conjugate is
    ``z -> a*phi*((z + c)/a)``.  Compliance means the new link inverse still
    satisfies ``F(z) + F(-z) <= 1``; it is measured, not assumed.
    """
    if not a > 0:
        raise ValueError("scale a must be positive")
    F = loss.link_inv if loss.link_inv is not None else numeric_link_inverse(loss)
    base_conj = loss.conj
    if base_conj is None:
        pot = potential_from_loss(loss, certify=False)

        def base_conj(z):
            return conjugate(pot, z)

    def l0(q):
        return a * np.asarray(loss.l0(q), dtype=float)

    def l1(q):
        return a * np.asarray(loss.l1(q), dtype=float) + c

    dl0 = (lambda q: a * np.asarray(loss.dl0(q), dtype=float)) if loss.dl0 else None
    dl1 = (lambda q: a * np.asarray(loss.dl1(q), dtype=float)) if loss.dl1 else None

    def F_new(z):
        return F((np.asarray(z, dtype=float) + c) / a)

    def conj_new(z):
        return a * np.asarray(base_conj((np.asarray(z, dtype=float) + c) / a))

    new = BinaryLoss(l0=l0, l1=l1, name=f"margin[{loss.name},a={a:g},c={c:g}]",
                     symmetric=loss.symmetric and c == 0, dl0=dl0, dl1=dl1,
                     link_inv=F_new, conj=conj_new)
    fc = check_F_condition(F_new)
    return MarginTransform(loss=new, a=a, c=c, link_inv=F_new, conj=conj_new,
                           klst_compliant=fc.passed, f_condition=fc)


@dataclass
class SeparabilityResult:
    """Outcome of testing a separable loss ``l_i(q) = ell(q_i)`` in dimension n.

    ``passed`` means the loss was found proper on full-support targets and
    ``ell`` matches ``-K1 log z + K2`` with ``K1 > 0``.
    """

    passed: bool
    proper: bool
    log_form: bool
    K1: float
    K2: float
    log_fit_residual: float
    certificate: ProperCertificate

    @property
    def consistent(self) -> bool:
        """A separable proper loss must be of log form."""
        return (not self.proper) or self.log_form


def check_separability_implies_log(ell: Callable, n: int = 3, resolution: int = 15,
                                   tol: float = 1e-10, fit_tol: float = 1e-8,
                                   name: str = "") -> SeparabilityResult:
    """Check a separable loss in dimension ``n >= 3`` against the log family."""
    if n < 3:
        raise ValueError("the separability check needs n >= 3")
    L = separable_loss(ell, name=name or "separable")
    grid = simplex_grid(n, resolution)
    full = grid[np.all(grid > 0, axis=1)]
    cert = check_proper(L, n=n, resolution=resolution, tol=tol, targets=full, preds=grid,
                        loss_id=name or "separable")
    z1, z2 = 0.25, 0.75
    e1, e2 = float(ell(np.array(z1))), float(ell(np.array(z2)))
    K1 = (e1 - e2) / (np.log(z2) - np.log(z1))
    K2 = e1 + K1 * np.log(z1)
    zs = np.linspace(0.01, 0.99, 99)
    resid = float(np.max(np.abs(np.asarray(ell(zs), dtype=float) - (-K1 * np.log(zs) + K2))))
    log_form = bool(resid <= fit_tol * max(1.0, abs(K1)) and K1 > 0)
    return SeparabilityResult(passed=cert.proper and log_form, proper=cert.proper,
                              log_form=log_form, K1=float(K1), K2=float(K2),
                              log_fit_residual=resid, certificate=cert)


def symmetric_gap(loss: BinaryLoss, grid=None) -> float:
    """Largest ``|l1(p) - l0(1 - p)|`` on a grid; zero for symmetric losses."""
    if grid is None:
        grid = np.linspace(0.01, 0.99, 99)
    v1 = np.asarray(loss.l1(grid), dtype=float)
    v0 = np.asarray(loss.l0(1.0 - grid), dtype=float)
    return float(np.max(np.abs(v1 - v0)))


def with_name(loss, name: str):
    return replace(loss, name=name)
