import math

import numpy as np
import pytest
from conftest import random_instance, relative_gradient_error
from hypothesis import given, settings, strategies as st

from properpo import catalog
from properpo.constructors import POTENTIALS, composite_decompose
from properpo.core_math import finite_diff, sigmoid
from properpo.pipeline import (PSI_LIBRARY, STEP1_POTENTIALS, ConvergenceError, catalog_spec,
                               choice_prob, dpo_spec, kkt_residual, kl_closed_form,
                               length_normalize, objective, objective_and_grad,
                               oracle_length_solution, phi_po_spec, pmpo_spec, pppo_spec,
                               recover_reward_diffs, softmax, solve_step1, spec_from_dict)
from properpo.proper_loss import one_vs_rest_lift


def dpo_reference(pi, pi_ref, triples):
    """Mean logistic loss of log-ratio differences."""
    r = np.log(pi) - np.log(pi_ref)
    x, w, l = triples.T
    return float(np.mean(np.log1p(np.exp(-(r[x, w] - r[x, l])))))


def test_dpo_equivalence_on_random_instances():
    rng = np.random.default_rng(0)
    spec = dpo_spec()
    for _ in range(30):
        m, n = rng.integers(1, 4), rng.integers(2, 6)
        logits, pi_ref, triples = random_instance(rng, m, n)
        pi = softmax(logits)
        assert objective(spec, pi, pi_ref, triples) == pytest.approx(
            dpo_reference(pi, pi_ref, triples), abs=1e-10)


def test_objective_at_reference_and_with_margin():
    rng = np.random.default_rng(1)
    _, pi_ref, triples = random_instance(rng, 2, 3)
    assert objective(dpo_spec(), pi_ref, pi_ref, triples) == pytest.approx(math.log(2))
    shifted = dpo_spec(margin=(1.0, 0.5))
    # the margin enters as psi(-gamma) with psi the decreasing DPO surrogate
    assert objective(shifted, pi_ref, pi_ref, triples) == pytest.approx(math.log1p(math.exp(0.5)))
    assert objective(shifted, pi_ref, pi_ref, triples) > math.log(2)


def test_objective_errors():
    spec = dpo_spec()
    with pytest.raises(ValueError):
        objective(spec, [[0.5, 0.5]], [[0.5, 0.5]], np.zeros((0, 3), dtype=int))
    with pytest.raises(ValueError, match="triple 0"):
        objective(spec, [[1.0, 0.0]], [[0.5, 0.5]], [[0, 1, 0]])


def test_choice_probabilities():
    rng = np.random.default_rng(2)
    logits, pi_ref, _ = random_instance(rng, 1, 3)
    pi = softmax(logits)
    spec = dpo_spec()
    assert choice_prob(spec, pi_ref, pi_ref, 0, 0, 1) == pytest.approx(0.5)
    r = np.log(pi[0]) - np.log(pi_ref[0])
    assert choice_prob(spec, pi, pi_ref, 0, 0, 2) == pytest.approx(sigmoid(r[0] - r[2]))
    for i, j in [(0, 1), (1, 2), (0, 2)]:
        assert choice_prob(spec, pi, pi_ref, 0, i, j) + choice_prob(spec, pi, pi_ref, 0, j, i) \
            == pytest.approx(1.0, abs=1e-15)
    ipo = catalog_spec("square", "log")
    p = choice_prob(ipo, pi, pi_ref, 0, 0, 2)
    assert p == pytest.approx(np.clip((1 + (r[0] - r[2])) / 2, 0, 1))
    abst = dpo_spec(margin=(1.0, -0.4))
    s = choice_prob(abst, pi, pi_ref, 0, 0, 1) + choice_prob(abst, pi, pi_ref, 0, 1, 0)
    assert s <= 1.0


CATALOG_IDS = ["log", "binary_entropy", "square", "matsushita"]


def gradient_error(spec, seed=0, scale=1.0, m=2, n=4, lengths=None, alphas=None):
    rng = np.random.default_rng(seed)
    logits, pi_ref, triples = random_instance(rng, m, n, scale=scale)
    _, g = objective_and_grad(spec, logits, pi_ref, triples, lengths=lengths, alphas=alphas)
    fd = finite_diff(lambda L: objective(spec, softmax(L), pi_ref, triples, lengths=lengths,
                                         alphas=alphas), logits)
    return relative_gradient_error(g, fd)


@pytest.mark.parametrize("la", CATALOG_IDS)
@pytest.mark.parametrize("lb", CATALOG_IDS + ["alpha"])
def test_gradient_matches_finite_differences_for_catalog_specs(la, lb):
    lb_params = {"beta": 0.5} if lb == "alpha" else None
    spec = pppo_spec(catalog.get(la).binary, catalog.get(lb, **(lb_params or {})).multiclass)
    assert gradient_error(spec) < 1e-5


@pytest.mark.parametrize("name", sorted(POTENTIALS))
def test_gradient_for_potential_recipe(name):
    spec = phi_po_spec(POTENTIALS[name]())
    assert gradient_error(spec, scale=2.0) < 1e-5


def test_gradient_for_composite_recipe():
    dec = composite_decompose(np.exp, sigmoid, F_inv=lambda p: np.log(p / (1 - p)), dpsi=np.exp,
                              dF=lambda z: sigmoid(z) * sigmoid(-z), resolution=20)
    lb = one_vs_rest_lift(dec.loss, certify=False)
    spec = pmpo_spec(np.exp, np.exp, lb, F=sigmoid)
    assert gradient_error(spec, m=1, n=3) < 1e-5


@pytest.mark.parametrize("mode", ["kl_geometric", "is_harmonic"])
def test_gradient_with_length_normalization_and_margin(mode):
    lengths = np.array([[1, 3, 2, 4], [2, 2, 5, 1]])
    alphas = np.array([[0.0, 0.1, 0.3, 0.2], [0.05, 0.0, 0.2, 0.1]])
    spec = dpo_spec(margin=(2.0, 0.3), length_norm=mode)
    assert gradient_error(spec, lengths=lengths, alphas=alphas) < 1e-5


def test_gradient_for_nonconvex_pmpo():
    psi, dpsi = PSI_LIBRARY["sine_ramp"]
    spec = pmpo_spec(psi, dpsi, catalog.get("log").multiclass)
    assert gradient_error(spec) < 1e-5


def test_pmpo_rejects_non_increasing_surrogate():
    with pytest.raises(ValueError):
        pmpo_spec(np.sin, np.cos, catalog.get("log").multiclass)


def test_pppo_rejects_improper_loss():
    with pytest.raises(ValueError):
        catalog_spec("alpha", "log", la_params={"beta": 1.0})


def test_spec_from_dict():
    s = spec_from_dict({"recipe": "pppo", "la": {"id": "square", "tau": 2.0}, "lb": {"id": "log"}})
    assert s.recipe == "pppo" and s.F(0.1) == pytest.approx(0.6)
    s = spec_from_dict({"recipe": "pmpo", "psi": "sine_ramp", "lb": {"id": "log"},
                        "margin": [1.0, 0.2]})
    assert s.gamma == pytest.approx(0.2)
    s = spec_from_dict({"recipe": "phi_po", "potential": "cubic"})
    assert s.recipe == "phi_po"
    with pytest.raises(KeyError):
        spec_from_dict({"recipe": "pmpo", "psi": "cosine", "lb": {"id": "log"}})


def test_shift_invariance_of_logits():
    rng = np.random.default_rng(3)
    logits, pi_ref, triples = random_instance(rng, 2, 3)
    spec = dpo_spec()
    v1, _ = objective_and_grad(spec, logits, pi_ref, triples)
    v2, _ = objective_and_grad(spec, logits + np.array([[3.0], [-2.0]]), pi_ref, triples)
    assert v1 == pytest.approx(v2, abs=1e-10)


# ----------------------------------------------------------------- step 1


def test_step1_constant_reward_keeps_reference():
    pi_ref = np.array([0.2, 0.3, 0.5])
    for name, make in STEP1_POTENTIALS.items():
        res = solve_step1(np.full(3, 0.7), pi_ref, make())
        np.testing.assert_allclose(res.pi, pi_ref, atol=1e-9)


def test_step1_kl_two_actions():
    res = solve_step1(np.array([1.0, 0.0]), np.array([0.5, 0.5]), STEP1_POTENTIALS["neg_entropy"]())
    e = math.e
    np.testing.assert_allclose(res.pi, [e / (e + 1), 1 / (e + 1)], atol=1e-9)
    assert res.closed_form_gap < 1e-9


@pytest.mark.parametrize("name", sorted(STEP1_POTENTIALS))
def test_step1_round_trip(name):
    rng = np.random.default_rng(8)
    pot = STEP1_POTENTIALS[name]()
    for _ in range(5):
        n = int(rng.integers(2, 6))
        pi_ref = rng.dirichlet(np.ones(n) * 4)
        scale = 0.1 if name == "squared_euclidean" else 1.0
        r = rng.normal(scale=scale, size=n)
        res = solve_step1(r, pi_ref, pot)
        if not res.interior:
            continue
        assert kkt_residual(r, res.pi, pi_ref, pot) < 1e-6
        M = recover_reward_diffs(res.pi, pi_ref, pot.G)
        np.testing.assert_allclose(M, r[:, None] - r[None, :], atol=1e-5)
        np.testing.assert_allclose(M, -M.T, atol=1e-12)


def test_step1_boundary_solution_is_reported_not_recovered():
    pot = STEP1_POTENTIALS["squared_euclidean"]()
    res = solve_step1(np.array([5.0, 0.0, -5.0]), np.full(3, 1 / 3), pot)
    assert not res.interior
    with pytest.raises(ValueError):
        recover_reward_diffs(res.pi, np.full(3, 1 / 3), pot.G)


def test_step1_rejects_non_interior_reference_and_reports_stalls():
    pot = STEP1_POTENTIALS["neg_entropy"]()
    with pytest.raises(ValueError):
        solve_step1(np.zeros(2), np.array([1.0, 0.0]), pot)
    with pytest.raises(ConvergenceError):
        solve_step1(np.array([3.0, 0.0, -1.0]), np.full(3, 1 / 3), pot, max_iter=2)


def test_recover_reward_diffs_identity_and_kl_case():
    pi_ref = np.array([0.1, 0.6, 0.3])
    G = STEP1_POTENTIALS["neg_entropy"]().G
    np.testing.assert_allclose(recover_reward_diffs(pi_ref, pi_ref, G), 0.0)
    r = np.array([0.4, -1.0, 2.0])
    M = recover_reward_diffs(kl_closed_form(r, pi_ref), pi_ref, G)
    np.testing.assert_allclose(M, r[:, None] - r[None, :], atol=1e-12)


# ------------------------------------------------------ length normalization


def test_length_normalize_examples():
    assert length_normalize([0.5, 0.2], "kl_geometric").value == pytest.approx(math.sqrt(0.1))
    assert length_normalize([0.5, 0.2], "is_harmonic").value == pytest.approx(2 / 7)
    res = length_normalize([0.3, 0.3, 0.3], "is_harmonic")
    assert res.value == pytest.approx(0.3)
    assert length_normalize([0.3, 0.3, 0.3], "kl_geometric").value == pytest.approx(0.3)
    with pytest.raises(ValueError):
        length_normalize([0.5, 0.0], "is_harmonic")


def test_harmonic_alpha_reconstructs_value():
    f = np.array([0.5, 0.2, 0.9])
    res = length_normalize(f, "is_harmonic")
    assert res.alpha >= 0
    assert np.prod(f) * math.exp(res.alpha * f.size) == pytest.approx(res.value)
    others = np.mean([np.prod(np.delete(f, k)) for k in range(f.size)])
    assert others == pytest.approx(math.exp(-res.alpha * f.size))


def test_all_equal_alpha_value():
    # for n equal factors v the exponent is (n - 1)/n * log(1/v)
    v, n = 0.4, 3
    assert length_normalize([v] * n, "is_harmonic").alpha == pytest.approx((n - 1) / n * math.log(1 / v))
    assert length_normalize([v], "is_harmonic").alpha == pytest.approx(0.0, abs=1e-15)


def test_oracle_single_factor_and_generalized_mode():
    assert oracle_length_solution([0.37], np.log, lambda t: 1 / t) == 0.37
    sq = length_normalize([0.2, 0.6], "generalized", potential=(lambda t: 2 * t, lambda y: y / 2))
    assert sq.value == pytest.approx(0.4)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8))
def test_length_normalize_matches_bregman_oracle(factors):
    f = np.asarray(factors)
    kl = length_normalize(f, "kl_geometric").value
    is_ = length_normalize(f, "is_harmonic").value
    assert f.min() - 1e-12 <= kl <= f.max() + 1e-12
    assert f.min() - 1e-12 <= is_ <= f.max() + 1e-12
    assert kl == pytest.approx(oracle_length_solution(f, lambda t: t * np.log(t),
                                                      lambda t: np.log(t) + 1), abs=1e-6)
    assert is_ == pytest.approx(oracle_length_solution(f, lambda t: -np.log(t),
                                                       lambda t: -1 / t), abs=1e-6)
