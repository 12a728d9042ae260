"""Builders that turn potentials or surrogate/link pairs into proper losses.

Two constructions are provided.

* From a strictly convex potential ``phi`` on [0, 1] with invertible
  derivative ``H``: ``l1 = -phi - (1-p) H`` and ``l0 = -phi + p H``.  The
  partial losses equal ``D(1||p) - phi(1)`` and ``D(0||p) - phi(0)``.
* From an increasing ``l0``: ``l1(p) = K - (int_a^p l0(t)/t^2 dt + (1-p)/p l0(p))``.
  Pairing a surrogate ``psi`` with a link ``F`` takes ``l0 = psi o F^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core_math import (ScalarFn, invert_monotone, logit, quad, safe_mul, sigmoid,
                        simplex_grid)
from .proper_loss import (BinaryLoss, FConditionResult, MulticlassLoss,
                          ProperCertificate, check_F_condition, check_proper,
                          one_vs_rest_lift)


class EligibilityError(ValueError):
    """A potential failed one of the eligibility tests; ``witness`` says where."""

    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


class FConditionError(ValueError):
    """A link ``F`` violates ``F(z) + F(-z) <= 1``."""

    def __init__(self, message, result: FConditionResult):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class EligiblePotential:
    """A scalar potential on [0, 1] with its derivative and optional extras.

    ``H`` is the derivative of ``phi``; ``H_inv`` its inverse when known in
    closed form and ``d2phi`` the second derivative.
    """

    phi: Callable
    H: Callable
    H_inv: Optional[Callable] = None
    d2phi: Optional[Callable] = None
    name: str = ""
    symmetric: bool = False

    def certify(self, n_grid: int = 201, tol: float = 1e-9) -> None:
        """Raise :class:`EligibilityError` unless ``phi`` is strictly convex,
        ``H(1/2 + d) + H(1/2 - d) >= 0`` and ``H_inv`` inverts ``H``."""
        x = np.linspace(0.0, 1.0, n_grid)
        with np.errstate(all="ignore"):
            u, v = np.meshgrid(x, x, indexing="ij")
            u, v = u.ravel(), v.ravel()
            mask = np.abs(u - v) > 1e-12
            u, v = u[mask], v[mask]
            mid = self.phi((u + v) / 2.0)
            avg = (self.phi(u) + self.phi(v)) / 2.0
        margin = avg - mid - 1e-10 * (u - v) ** 2
        bad = np.flatnonzero(~(margin > 0))
        if bad.size:
            k = bad[0]
            raise EligibilityError(f"{self.name}: not strictly convex", (float(u[k]), float(v[k])))
        d = np.linspace(0.0, 0.5, 101)[:-1]
        with np.errstate(all="ignore"):
            s = self.H(0.5 + d) + self.H(0.5 - d)
        bad = np.flatnonzero(s < -tol)
        if bad.size:
            raise EligibilityError(f"{self.name}: H(1/2+d) + H(1/2-d) < 0", float(d[bad[0]]))
        xs = np.linspace(0.01, 0.99, 99)
        h = self.H(xs)
        if np.any(np.diff(h) <= 0):
            k = int(np.flatnonzero(np.diff(h) <= 0)[0])
            raise EligibilityError(f"{self.name}: H is not strictly increasing", float(xs[k]))
        if self.H_inv is not None:
            err = np.abs(np.asarray(self.H_inv(h), dtype=float) - xs)
            if np.max(err) > tol:
                k = int(np.argmax(err))
                raise EligibilityError(f"{self.name}: H_inv does not invert H", float(xs[k]))

    def link_inverse(self) -> Callable:
        if self.H_inv is not None:
            return self.H_inv
        h0, h1 = (float(v) for v in self.H(np.array([0.0, 1.0])))

        def F(z):
            z = np.asarray(z, dtype=float)
            zz = np.clip(np.atleast_1d(z), h0, h1)
            out = invert_monotone(self.H, zz, (0.0, 1.0), tol=1e-13)
            return out.reshape(z.shape) if z.ndim else float(out[0])

        return F

    def d2(self, p):
        if self.d2phi is not None:
            return self.d2phi(np.asarray(p, dtype=float))
        p = np.asarray(p, dtype=float)
        h = 1e-6
        return (self.H(p + h) - self.H(p - h)) / (2 * h)


def _xlogx(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def neg_entropy() -> EligiblePotential:
    return EligiblePotential(phi=lambda p: _xlogx(p) + _xlogx(1.0 - p), H=logit, H_inv=sigmoid,
                             d2phi=lambda p: 1.0 / (p * (1.0 - p)), name="neg_entropy",
                             symmetric=True)


def quadratic() -> EligiblePotential:
    return EligiblePotential(phi=lambda p: p * p - p, H=lambda p: 2.0 * p - 1.0,
                             H_inv=lambda z: (np.asarray(z) + 1.0) / 2.0,
                             d2phi=lambda p: 2.0 + 0.0 * p, name="quadratic", symmetric=True)


def root_potential() -> EligiblePotential:
    """``-sqrt(p(1-p))``; its link inverse is the Matsushita link with mu = 1."""
    def H(p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (2.0 * p - 1.0) / (2.0 * np.sqrt(p * (1.0 - p)))

    return EligiblePotential(phi=lambda p: -np.sqrt(p * (1.0 - p)), H=H,
                             H_inv=lambda z: 0.5 * (1.0 + z / np.sqrt(np.asarray(z) ** 2 + 1.0)),
                             d2phi=lambda p: 0.25 / (p * (1.0 - p)) ** 1.5, name="root",
                             symmetric=True)


def cubic() -> EligiblePotential:
    """Asymmetric ``p^2 - p + p^3/3``."""
    return EligiblePotential(phi=lambda p: p * p - p + p ** 3 / 3.0,
                             H=lambda p: 2.0 * p - 1.0 + p * p,
                             H_inv=lambda z: -1.0 + np.sqrt(2.0 + np.asarray(z)),
                             d2phi=lambda p: 2.0 + 2.0 * p, name="cubic")


def exponential() -> EligiblePotential:
    """Asymmetric ``exp(p)``."""
    return EligiblePotential(phi=np.exp, H=np.exp, H_inv=np.log, d2phi=np.exp,
                             name="exponential")


def tsallis(q: float = 1.5) -> EligiblePotential:
    """``(p^q + (1-p)^q - 1)/(q-1)``; the link is inverted numerically."""
    if not q > 1:
        raise ValueError("tsallis potential needs q > 1")
    c = q / (q - 1.0)
    return EligiblePotential(
        phi=lambda p: (p ** q + (1.0 - p) ** q - 1.0) / (q - 1.0),
        H=lambda p: c * (p ** (q - 1.0) - (1.0 - p) ** (q - 1.0)),
        d2phi=lambda p: q * (p ** (q - 2.0) + (1.0 - p) ** (q - 2.0)),
        name=f"tsallis(q={q:g})", symmetric=True)


POTENTIALS = {"neg_entropy": neg_entropy, "quadratic": quadratic, "root": root_potential,
              "cubic": cubic, "exponential": exponential, "tsallis": tsallis}


@dataclass
class BuiltLoss:
    """A constructed binary loss with the certificate that accompanied it."""

    loss: BinaryLoss
    certificate: ProperCertificate


def phi_po_build(pot: EligiblePotential, certify: bool = True,
                 resolution: int = 50) -> BuiltLoss:
    """Binary proper loss ``l1 = -phi - (1-p) H``, ``l0 = -phi + p H``.

    Its canonical link is ``H`` and the conjugate of its Bayes potential is
    ``z * H^{-1}(z) - phi(H^{-1}(z))`` on the range of ``H``.
    """
    if certify:
        pot.certify()
    phi, H = pot.phi, pot.H
    F = pot.link_inverse()
    h0, h1 = (float(v) for v in np.asarray(H(np.array([0.0, 1.0])), dtype=float))
    phi0, phi1 = (float(v) for v in np.asarray(phi(np.array([0.0, 1.0])), dtype=float))

    def l1(p):
        p = np.asarray(p, dtype=float)
        return -phi(p) - safe_mul(1.0 - p, H(p))

    def l0(p):
        p = np.asarray(p, dtype=float)
        return -phi(p) + safe_mul(p, H(p))

    def dl1(p):
        p = np.asarray(p, dtype=float)
        return -(1.0 - p) * pot.d2(p)

    def dl0(p):
        p = np.asarray(p, dtype=float)
        return p * pot.d2(p)

    def conj(z):
        z = np.asarray(z, dtype=float)
        zc = np.clip(z, h0, h1)
        t = np.asarray(F(zc), dtype=float)
        inside = z * t - phi(t)
        # outside the range of H the supremum sits at an endpoint of [0, 1]
        return np.where(z < h0, -phi0, np.where(z > h1, z - phi1, inside))

    def link_inv(z):
        # saturate at 0 and 1 outside the range of H, matching the conjugate's slope
        return F(np.clip(np.asarray(z, dtype=float), h0, h1))

    loss = BinaryLoss(l0=l0, l1=l1, name=f"phi_po[{pot.name}]", symmetric=pot.symmetric,
                      dl0=dl0, dl1=dl1, link_inv=link_inv, conj=conj)
    cert = check_proper(loss, resolution=resolution, tol=1e-9, loss_id=loss.name)
    if certify and not cert.strict:
        raise EligibilityError(f"{loss.name}: built loss failed strict properness",
                               cert.worst_pair)
    return BuiltLoss(loss, cert)


def phi_po_symmetrize(pot: EligiblePotential) -> BinaryLoss:
    """Symmetric loss ``l1(p) = (-phi(p) - phi(1-p) - (1-p)(H(p) - H(1-p)))/2``
    with ``l0(p) = l1(1-p)``.

    This is the potential construction applied to ``(phi(p) + phi(1-p))/2``,
    so it only needs ``phi`` convex.
    """
    phi, H = pot.phi, pot.H

    def l1(p):
        p = np.asarray(p, dtype=float)
        with np.errstate(invalid="ignore"):
            dh = H(p) - H(1.0 - p)
        return (-phi(p) - phi(1.0 - p) - safe_mul(1.0 - p, dh)) / 2.0

    def dl1(p):
        p = np.asarray(p, dtype=float)
        return -(1.0 - p) * (pot.d2(p) + pot.d2(1.0 - p)) / 2.0

    def l0(p):
        return l1(1.0 - np.asarray(p, dtype=float))

    def dl0(p):
        return -dl1(1.0 - np.asarray(p, dtype=float))

    return BinaryLoss(l0=l0, l1=l1, name=f"sym[{pot.name}]", symmetric=True,
                      dl0=dl0, dl1=dl1)


def phi_po_selection(phi: Callable, dphi: Callable, d2phi: Callable) -> Callable:
    """``G(p) = phi(p) + (1-p) phi'(p) + p (1-p) phi''(p)``, coordinatewise.

    This is the gradient of ``-sum_i p_i * l1(p_i)`` for the potential
    construction's ``l1``, i.e. the selection of the separable multiclass loss
    ``l_i(p) = l1(p_i)``.
    """
    def G(p):
        p = np.asarray(p, dtype=float)
        return phi(p) + safe_mul(1.0 - p, dphi(p)) + safe_mul(p * (1.0 - p), d2phi(p))

    return G


def phi_po_multiclass(pot: EligiblePotential) -> MulticlassLoss:
    """Multiclass loss used by the potential recipe: the one-vs-rest lift of
    the symmetrized binary loss."""
    sym = phi_po_symmetrize(pot)
    lifted = one_vs_rest_lift(sym, certify=False)
    return MulticlassLoss(loss=lifted.loss, jacobian=lifted.jacobian,
                          name=f"ovr[sym[{pot.name}]]")


def composite_build(ell: ScalarFn | Callable, K: float = 0.0, anchor: float = 0.5,
                    dell: Optional[Callable] = None, quad_tol: float = 1e-12,
                    certify: bool = True, resolution: int = 50) -> BuiltLoss:
    """Complete an increasing partial loss ``l0 = ell`` into a proper binary loss.

    ``l1(p) = K - (int_anchor^p ell(t)/t^2 dt + (1-p)/p * ell(p))``.  The
    derivatives satisfy ``p l1' + (1-p) l0' = 0``, the first-order condition
    for properness.  ``l1(0)`` is reported as ``+inf``.
    """
    if not 0.0 < anchor < 1.0:
        raise ValueError("anchor must lie in (0, 1)")
    f = ell if isinstance(ell, ScalarFn) else ScalarFn(ell)
    if dell is None and isinstance(ell, ScalarFn) and ell.deriv is not None:
        dell = ell.deriv
    xs = np.linspace(0.0, 1.0, 201)
    with np.errstate(all="ignore"):
        vals = np.asarray(f(xs), dtype=float)
    fin = np.isfinite(vals)
    if np.any(np.diff(vals[fin]) <= 0):
        k = int(np.flatnonzero(np.diff(vals[fin]) <= 0)[0])
        raise ValueError(f"l0 must be strictly increasing; fails near p={xs[fin][k]:.3f}")

    def integrand(t):
        return np.asarray(f(t), dtype=float) / (t * t)

    def l1_scalar(p):
        if p <= 0.0:
            return np.inf
        tail = 0.0 if p >= 1.0 else (1.0 - p) / p * float(f(np.array(p)))
        return K - (quad(integrand, anchor, p, tol=quad_tol) + tail)

    def l1(p):
        p = np.asarray(p, dtype=float)
        out = np.array([l1_scalar(float(x)) for x in p.ravel()])
        return out.reshape(p.shape) if p.ndim else float(out[0])

    def l0(p):
        return np.asarray(f(np.asarray(p, dtype=float)), dtype=float)

    dl0 = dl1 = None
    if dell is not None:
        def dl0(p):
            return np.asarray(dell(np.asarray(p, dtype=float)), dtype=float)

        def dl1(p):
            p = np.asarray(p, dtype=float)
            return -(1.0 - p) / p * dl0(p)

    loss = BinaryLoss(l0=l0, l1=l1, name=f"composite[{f.name or 'l0'}]", dl0=dl0, dl1=dl1)
    # l1 may diverge at p = 1 (e.g. l0(p) = p/(1-p)), so certify on the interior
    grid = simplex_grid(2, resolution)[1:-1]
    cert = check_proper(loss, resolution=resolution, tol=1e-9, loss_id=loss.name,
                        targets=grid, preds=grid)
    if certify and not cert.strict:
        raise ValueError(f"{loss.name}: built loss failed strict properness at {cert.worst_pair}")
    return BuiltLoss(loss, cert)


@dataclass
class Decomposition:
    """Loss obtained from a surrogate/link pair and the checks that went into it."""

    built: BuiltLoss
    f_condition: FConditionResult
    psi: Callable
    F: Callable
    reconstruction_error: float

    @property
    def loss(self) -> BinaryLoss:
        return self.built.loss


def composite_decompose(psi: Callable, F: Callable, F_inv: Optional[Callable] = None,
                        bracket: tuple[float, float] = (-60.0, 60.0), K: float = 0.0,
                        dpsi: Optional[Callable] = None, dF: Optional[Callable] = None,
                        resolution: int = 50) -> Decomposition:
    """Proper loss whose ``l0`` is ``psi o F^{-1}``, after checking
    ``F(z) + F(-z) <= 1``.

    ``F_inv`` defaults to bisection on ``bracket``.  With ``dpsi`` and ``dF``
    the derivative of ``l0`` is supplied analytically.  The returned
    ``reconstruction_error`` is ``max |l0(F(z)) - psi(z)|`` on a sample of
    ``z`` with ``F(z)`` away from 0 and 1.
    """
    fc = check_F_condition(F)
    if not fc.passed:
        raise FConditionError(
            f"F(z) + F(-z) = {fc.worst_sum:.6g} > 1 at z = {fc.worst_z:g} "
            f"(F = {fc.F_at_worst:.6g})", fc)
    if F_inv is None:
        def F_inv(p):
            # bisect to floating point resolution: a residual tolerance in p
            # leaves jitter that the 1/t^2 weight in the integral amplifies
            return invert_monotone(F, p, bracket, tol=0.0)

    # F^{-1} is taken on the range of F over the bracket, so l0(0) and l0(1)
    # are psi at the bracket ends rather than limits at infinity
    p_lo, p_hi = (float(v) for v in np.asarray(F(np.array(bracket, dtype=float)), dtype=float))

    def ell(p):
        p = np.clip(np.asarray(p, dtype=float), p_lo, p_hi)
        return np.asarray(psi(np.asarray(F_inv(p), dtype=float)), dtype=float)

    dell = None
    if dpsi is not None and dF is not None:
        def dell(p):
            z = np.asarray(F_inv(np.asarray(p, dtype=float)), dtype=float)
            return np.asarray(dpsi(z), dtype=float) / np.asarray(dF(z), dtype=float)

    built = composite_build(ScalarFn(ell, domain=(0.0, 1.0), monotone="increasing",
                                     name=getattr(psi, "__name__", "psi")),
                            K=K, dell=dell, resolution=resolution)
    z = np.linspace(-4.0, 4.0, 81)
    Fz = np.asarray(F(z), dtype=float)
    ok = (Fz > 1e-9) & (Fz < 1 - 1e-9)
    err = float(np.max(np.abs(built.loss.l0(Fz[ok]) - np.asarray(psi(z[ok]), dtype=float))))
    return Decomposition(built=built, f_condition=fc, psi=psi, F=F, reconstruction_error=err)
