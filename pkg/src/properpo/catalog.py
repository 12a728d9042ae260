"""Named losses with their closed-form links and surrogates.

Each entry carries the binary loss, an n-dimensional multiclass version, the
inverse link ``F``, the conjugate ``phi*`` of the binary Bayes potential and
the preference surrogate ``psi(z) = phi*(-z)``.  The claimed properness flags
are stored as data so that :func:`check_proper` can confirm or refute them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core_math import ScalarFn, sigmoid, softplus
from .proper_loss import (BinaryLoss, MulticlassLoss, conjugate, numeric_link_inverse,
                          one_vs_rest_lift, potential_from_loss, separable_loss)

ALPHA_SERIES_BETA = 1e-6
DEFAULT_PARAMS = {"log": {}, "binary_entropy": {}, "square": {"tau": 1.0},
                  "matsushita": {"mu": 1.0}, "alpha": {"beta": 0.0}}


@dataclass
class CatalogEntry:
    id: str
    params: dict
    binary: BinaryLoss
    multiclass: MulticlassLoss
    link: ScalarFn
    conj: ScalarFn
    claimed_proper_n2: bool
    claimed_proper_n_gt2: bool
    symmetric: bool = True
    numeric: bool = False
    breakpoints: tuple = field(default_factory=tuple)

    def surrogate(self, z):
        """``psi(z) = phi*(-z)``: nonincreasing, penalizes negative margins."""
        return self.conj(-np.asarray(z, dtype=float))

    def to_dict(self) -> dict:
        return {"id": self.id, "params": dict(self.params),
                "claimed_proper_n2": self.claimed_proper_n2,
                "claimed_proper_n_gt2": self.claimed_proper_n_gt2,
                "symmetric": self.symmetric, "numeric_link": self.numeric,
                "breakpoints": [float(b) for b in self.breakpoints]}


def _log_entry() -> CatalogEntry:
    binary = BinaryLoss(
        l0=lambda q: -np.log1p(-q), l1=lambda q: -np.log(q), name="log", symmetric=True,
        dl0=lambda q: 1.0 / (1.0 - q), dl1=lambda q: -1.0 / q,
        link_inv=sigmoid, conj=softplus)
    multi = separable_loss(lambda q: -np.log(q), lambda q: -1.0 / q, name="log")
    return CatalogEntry(
        "log", {}, binary, multi,
        link=ScalarFn(sigmoid, monotone="increasing", deriv=lambda z: sigmoid(z) * sigmoid(-z),
                      name="sigmoid"),
        conj=ScalarFn(softplus, monotone="increasing", deriv=sigmoid, name="softplus"),
        claimed_proper_n2=True, claimed_proper_n_gt2=True)


def _binary_entropy_entry() -> CatalogEntry:
    base = _log_entry().binary
    multi = one_vs_rest_lift(base, certify=False)
    multi = MulticlassLoss(loss=multi.loss, jacobian=multi.jacobian, name="binary_entropy")
    binary = BinaryLoss(
        l0=lambda q: -2.0 * np.log1p(-q), l1=lambda q: -2.0 * np.log(q),
        name="binary_entropy", symmetric=True,
        dl0=lambda q: 2.0 / (1.0 - q), dl1=lambda q: -2.0 / q,
        link_inv=lambda z: sigmoid(np.asarray(z) / 2.0),
        conj=lambda w: 2.0 * softplus(np.asarray(w) / 2.0))
    return CatalogEntry(
        "binary_entropy", {}, binary, multi,
        link=ScalarFn(binary.link_inv, monotone="increasing",
                      deriv=lambda z: 0.5 * sigmoid(z / 2.0) * sigmoid(-z / 2.0),
                      name="sigmoid(z/2)"),
        conj=ScalarFn(binary.conj, monotone="increasing", deriv=lambda w: sigmoid(w / 2.0),
                      name="2 softplus(w/2)"),
        claimed_proper_n2=True, claimed_proper_n_gt2=True)


def _square_entry(tau: float = 1.0) -> CatalogEntry:
    if not tau > 0:
        raise ValueError("square loss needs tau > 0")

    def F(z):
        return np.clip((1.0 + tau * np.asarray(z, dtype=float)) / 2.0, 0.0, 1.0)

    def conj(w):
        # conjugate of phi(p) = -p(1-p)/tau on [0, 1]
        w = np.asarray(w, dtype=float)
        return np.where(w < -1.0 / tau, 0.0,
                        np.where(w > 1.0 / tau, w, tau / 4.0 * (w + 1.0 / tau) ** 2))

    binary = BinaryLoss(
        l0=lambda q: q ** 2 / tau, l1=lambda q: (1.0 - q) ** 2 / tau,
        name=f"square(tau={tau:g})", symmetric=True,
        dl0=lambda q: 2.0 * q / tau, dl1=lambda q: -2.0 * (1.0 - q) / tau,
        link_inv=F, conj=conj)
    multi = separable_loss(lambda q: (1.0 - q) ** 2 / tau, lambda q: -2.0 * (1.0 - q) / tau,
                           name=f"square(tau={tau:g})")
    return CatalogEntry(
        "square", {"tau": tau}, binary, multi,
        link=ScalarFn(F, monotone="increasing",
                      deriv=lambda z: np.where(np.abs(z) < 1.0 / tau, tau / 2.0, 0.0),
                      name="clipped linear"),
        conj=ScalarFn(conj, monotone="increasing", deriv=F, name="square conjugate"),
        claimed_proper_n2=True, claimed_proper_n_gt2=False,
        breakpoints=(-1.0 / tau, 1.0 / tau))


def _matsushita_entry(mu: float = 1.0) -> CatalogEntry:
    if mu < 0:
        raise ValueError("Matsushita loss needs mu >= 0")
    h = mu / 2.0  # partial-loss scale that yields the link with parameter mu

    def F(z):
        z = np.asarray(z, dtype=float)
        if mu == 0:
            return 0.5 * (1.0 + np.sign(z))
        return 0.5 * (1.0 + z / np.sqrt(z ** 2 + mu ** 2))

    def conj(w):
        w = np.asarray(w, dtype=float)
        return 0.5 * (w + np.sqrt(w ** 2 + mu ** 2))

    def l1(q):
        return h * np.sqrt((1.0 - q) / q)

    def dl1(q):
        return -h / (2.0 * q ** 1.5 * np.sqrt(1.0 - q))

    binary = BinaryLoss(
        l0=lambda q: l1(1.0 - q), l1=l1, name=f"matsushita(mu={mu:g})", symmetric=True,
        dl0=lambda q: -dl1(1.0 - q), dl1=dl1, link_inv=F, conj=conj)
    multi = separable_loss(l1, dl1, name=f"matsushita(mu={mu:g})")
    return CatalogEntry(
        "matsushita", {"mu": mu}, binary, multi,
        link=ScalarFn(F, monotone="increasing",
                      deriv=lambda z: 0.5 * mu ** 2 / (z ** 2 + mu ** 2) ** 1.5, name="matsushita link"),
        conj=ScalarFn(conj, monotone="increasing", deriv=F, name="matsushita conjugate"),
        claimed_proper_n2=True, claimed_proper_n_gt2=False)


def alpha_partial(beta: float) -> tuple[Callable, Callable]:
    """Partial loss ``(q^{-beta} - 1)/beta`` and its derivative.

    Below ``ALPHA_SERIES_BETA`` the second-order series around the log loss is
    used, which avoids cancellation as ``beta -> 0``.
    """
    if beta < ALPHA_SERIES_BETA:
        def ell(q):
            lq = np.log(q)
            if beta == 0.0:
                return -lq
            return -lq + beta * lq ** 2 / 2.0

        def dell(q):
            return (-1.0 + beta * np.log(q)) / q
    else:
        def ell(q):
            return np.expm1(-beta * np.log(q)) / beta

        def dell(q):
            return -q ** (-beta - 1.0)
    return ell, dell


def _alpha_entry(beta: float = 0.0) -> CatalogEntry:
    if beta < 0:
        raise ValueError("alpha loss needs beta >= 0")
    ell, dell = alpha_partial(beta)
    name = f"alpha(beta={beta:g})"
    partial = BinaryLoss(l0=lambda q: ell(1.0 - q), l1=ell, name=name, symmetric=True,
                         dl0=lambda q: -dell(1.0 - q), dl1=dell)
    F = numeric_link_inverse(partial)
    pot = potential_from_loss(partial, certify=False)

    def conj(w):
        return conjugate(pot, w)

    binary = BinaryLoss(l0=partial.l0, l1=partial.l1, name=name, symmetric=True,
                        dl0=partial.dl0, dl1=partial.dl1, link_inv=F, conj=conj)
    multi = separable_loss(ell, dell, name=name)
    proper = beta < ALPHA_SERIES_BETA
    return CatalogEntry(
        "alpha", {"beta": beta}, binary, multi,
        link=ScalarFn(F, monotone="increasing", name="numeric link"),
        conj=ScalarFn(conj, name="numeric conjugate"),
        claimed_proper_n2=proper, claimed_proper_n_gt2=proper, numeric=True)


_BUILDERS = {
    "log": _log_entry,
    "binary_entropy": _binary_entropy_entry,
    "square": _square_entry,
    "matsushita": _matsushita_entry,
    "alpha": _alpha_entry,
}


def get(loss_id: str, **params) -> CatalogEntry:
    """Build a catalog entry by id, e.g. ``get("square", tau=0.5)``."""
    if loss_id not in _BUILDERS:
        raise KeyError(f"unknown loss {loss_id!r}; known: {sorted(_BUILDERS)}")
    allowed = set(DEFAULT_PARAMS[loss_id])
    extra = set(params) - allowed
    if extra:
        raise TypeError(f"loss {loss_id!r} does not take {sorted(extra)}")
    return _BUILDERS[loss_id](**params)


def list_entries(proper_n_gt2: Optional[bool] = None, symmetric: Optional[bool] = None,
                 params: Optional[dict] = None) -> list[CatalogEntry]:
    """All entries at their default (or given) parameters, optionally filtered
    by the claimed multiclass properness flag and by symmetry."""
    out = []
    for loss_id in _BUILDERS:
        kw = dict(DEFAULT_PARAMS[loss_id])
        if params and loss_id in params:
            kw.update(params[loss_id])
        e = get(loss_id, **kw)
        if proper_n_gt2 is not None and e.claimed_proper_n_gt2 != proper_n_gt2:
            continue
        if symmetric is not None and e.symmetric != symmetric:
            continue
        out.append(e)
    return out


def ids() -> list[str]:
    return list(_BUILDERS)


def printed_square_surrogate(x, tau: float = 1.0):
    """The square-loss surrogate exactly as tabulated in the source table.

    ``tau * (1/(4 tau) - x/tau)`` for ``x < 0``, ``tau * (x - 1/(2 tau))^2`` on
    ``[0, 1/(2 tau)]`` and ``0`` beyond.  Kept only so the comparison against
    the derived surrogate can be run; see ``_square_entry`` for the form the
    package uses.
    """
    x = np.asarray(x, dtype=float)
    return tau * np.where(x < 0, 1.0 / (4 * tau) - x / tau,
                          np.where(x <= 1.0 / (2 * tau), (x - 1.0 / (2 * tau)) ** 2, 0.0))


def matsushita_literal(mu: float) -> BinaryLoss:
    """Partial losses ``mu*sqrt((1-q)/q)`` taken at face value (not the catalog scale)."""
    return BinaryLoss(l0=lambda q: mu * np.sqrt(q / (1.0 - q)),
                      l1=lambda q: mu * np.sqrt((1.0 - q) / q),
                      name=f"matsushita_literal(mu={mu:g})", symmetric=True)


__all__ = ["CatalogEntry", "get", "list_entries", "ids", "alpha_partial",
           "printed_square_surrogate", "matsushita_literal"]
