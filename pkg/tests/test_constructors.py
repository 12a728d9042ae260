import math

import numpy as np
import pytest

from properpo import catalog
from properpo.constructors import (POTENTIALS, EligibilityError, EligiblePotential,
                                   FConditionError, composite_build, composite_decompose,
                                   phi_po_build, phi_po_selection, phi_po_symmetrize)
from properpo.core_math import sigmoid, simplex_grid, softplus
from properpo.proper_loss import check_proper, potential_from_loss, symmetric_gap

P = np.linspace(0.02, 0.98, 49)


@pytest.mark.parametrize("name", sorted(POTENTIALS))
def test_every_registered_potential_builds_strictly_proper_loss(name):
    built = phi_po_build(POTENTIALS[name]())
    assert built.certificate.strict


def test_negative_entropy_gives_log_loss():
    loss = phi_po_build(POTENTIALS["neg_entropy"]()).loss
    np.testing.assert_allclose(loss.l1(P), -np.log(P), atol=1e-9)
    np.testing.assert_allclose(loss.l0(P), -np.log(1 - P), atol=1e-9)
    assert loss.symmetric


def test_quadratic_gives_square_loss():
    loss = phi_po_build(POTENTIALS["quadratic"]()).loss
    np.testing.assert_allclose(loss.l1(P), (1 - P) ** 2, atol=1e-12)
    np.testing.assert_allclose(loss.l0(P), P**2, atol=1e-12)


def test_built_loss_inverse_link_and_conjugate():
    for name in ("neg_entropy", "root", "cubic", "tsallis"):
        pot = POTENTIALS[name]()
        loss = phi_po_build(pot).loss
        np.testing.assert_allclose(loss.link_inv(pot.H(P)), P, atol=1e-9)
        # l0 composed with the inverse link equals the conjugate
        np.testing.assert_allclose(loss.conj(pot.H(P)), loss.l0(P), atol=1e-9)


def test_potential_roundtrip_on_catalog_losses():
    for loss_id in ("log", "square"):
        e = catalog.get(loss_id)
        phi = lambda p, e=e: e.binary.potential(p)
        H = lambda p, e=e: e.binary.link(p)
        pot = EligiblePotential(phi=phi, H=H, name=loss_id, symmetric=True)
        loss = phi_po_build(pot, certify=False).loss
        np.testing.assert_allclose(loss.l1(P), e.binary.l1(P), atol=1e-7)
        np.testing.assert_allclose(loss.l0(P), e.binary.l0(P), atol=1e-7)


def test_ineligible_potentials_are_rejected():
    concave = EligiblePotential(phi=lambda p: -p * p, H=lambda p: -2 * p, name="concave")
    with pytest.raises(EligibilityError):
        phi_po_build(concave)
    # convex, but H(1/2 + d) + H(1/2 - d) < 0
    skew = EligiblePotential(phi=lambda p: p * p - 2 * p, H=lambda p: 2 * p - 2,
                             H_inv=lambda z: (np.asarray(z) + 2) / 2, name="skew")
    with pytest.raises(EligibilityError):
        skew.certify()
    wrong_inv = EligiblePotential(phi=lambda p: p * p - p, H=lambda p: 2 * p - 1,
                                  H_inv=lambda z: np.asarray(z), name="bad inverse")
    with pytest.raises(EligibilityError):
        wrong_inv.certify()


def test_symmetrize_fixes_symmetric_input():
    pot = POTENTIALS["neg_entropy"]()
    sym = phi_po_symmetrize(pot)
    np.testing.assert_allclose(sym.l1(P), phi_po_build(pot).loss.l1(P), atol=1e-9)
    assert symmetric_gap(sym) < 1e-12


def test_symmetrize_asymmetric_potentials():
    neglog = EligiblePotential(phi=lambda p: -np.log(p), H=lambda p: -1 / p,
                               d2phi=lambda p: 1 / p**2, name="neglog")
    sym = phi_po_symmetrize(neglog)
    assert symmetric_gap(sym) < 1e-12
    # the symmetrized potential is infinite at both vertices, so certify the interior
    inner = simplex_grid(2, 20)[1:-1]
    assert check_proper(sym, resolution=20, targets=inner, preds=inner).strict
    for name in ("cubic", "exponential"):
        pot = POTENTIALS[name]()
        s = phi_po_symmetrize(pot)
        assert s.l1(0.5) == pytest.approx(-float(pot.phi(0.5)))
        assert check_proper(s, resolution=20).strict


def test_selection_formula():
    ne = POTENTIALS["neg_entropy"]()
    G = phi_po_selection(ne.phi, ne.H, ne.d2phi)
    # p(1-p) phi''(p) = 1 for the negative entropy
    expected = (P * np.log(P) + (1 - P) * np.log(1 - P) + (1 - P) * (np.log(P) - np.log(1 - P))
                + 1.0)
    np.testing.assert_allclose(G(P), expected, atol=1e-12)
    q = POTENTIALS["quadratic"]()
    Gq = phi_po_selection(q.phi, q.H, q.d2phi)
    np.testing.assert_allclose(Gq(P), P**2 - P + (1 - P) * (2 * P - 1) + 2 * P * (1 - P), atol=1e-12)
    for name in ("root", "tsallis", "neg_entropy"):
        pot = POTENTIALS[name]()
        Gp = phi_po_selection(pot.phi, pot.H, pot.d2)
        assert Gp(0.5) == pytest.approx(float(pot.phi(0.5)) + float(pot.d2(0.5)) / 4, rel=1e-6)


def test_selection_is_gradient_of_separable_potential():
    pot = POTENTIALS["cubic"]()
    l1 = phi_po_build(pot).loss.l1
    G = phi_po_selection(pot.phi, pot.H, pot.d2phi)
    h = 1e-6
    f = lambda t: -t * l1(t)
    np.testing.assert_allclose(G(P), (f(P + h) - f(P - h)) / (2 * h), atol=1e-7)


def test_composite_from_log_partial_recovers_log_loss():
    b = composite_build(lambda p: -np.log1p(-p), K=-math.log(0.5) + 1.0)
    # l1(p) = -log p + const; anchor 1/2 fixes the constant
    loss = b.loss
    d = loss.l1(P) - (-np.log(P))
    np.testing.assert_allclose(d, d[0], atol=1e-9)
    assert b.certificate.strict


def test_composite_from_identity_partial():
    loss = composite_build(lambda p: p).loss
    d = loss.l1(P) - (-np.log(P) + P)
    np.testing.assert_allclose(d, d[0], atol=1e-9)


def test_composite_constant_does_not_change_verdict():
    ell = lambda p: p**3 + p
    a = composite_build(ell, K=0.0)
    b = composite_build(ell, K=7.5)
    assert a.certificate.verdict == b.certificate.verdict == "strictly proper"
    np.testing.assert_allclose(b.loss.l1(P) - a.loss.l1(P), 7.5, atol=1e-9)


def test_composite_rejects_non_increasing():
    with pytest.raises(ValueError):
        composite_build(lambda p: (p - 0.5) ** 2)


def test_decompose_dpo_pair_recovers_log_loss():
    dec = composite_decompose(lambda z: softplus(z), sigmoid, F_inv=lambda p: np.log(p / (1 - p)),
                              K=0.0)
    np.testing.assert_allclose(dec.loss.l0(P), -np.log(1 - P), atol=1e-9)
    d = dec.loss.l1(P) + np.log(P)
    np.testing.assert_allclose(d, d[0], atol=1e-8)
    assert dec.f_condition.debreu


def test_decompose_exp_with_sigmoid_accepted_and_gumbel_rejected():
    dec = composite_decompose(np.exp, sigmoid, dpsi=np.exp, dF=lambda z: sigmoid(z) * sigmoid(-z))
    assert dec.built.certificate.strict
    assert dec.reconstruction_error < 1e-6
    with pytest.raises(FConditionError) as info:
        composite_decompose(np.exp, lambda z: -np.expm1(-np.exp(z)))
    assert info.value.result.worst_z == 0.0
    assert info.value.result.F_at_worst == pytest.approx(1 - 1 / math.e, abs=1e-12)


def test_decompose_nonconvex_surrogate_is_accepted():
    psi = lambda z: z + 0.4 * np.sin(z)
    dec = composite_decompose(psi, sigmoid, dpsi=lambda z: 1 + 0.4 * np.cos(z),
                              dF=lambda z: sigmoid(z) * sigmoid(-z))
    assert dec.built.certificate.strict
    assert dec.reconstruction_error < 1e-6
