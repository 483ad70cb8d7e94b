from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gcnpac import markov_core as mc

from conftest import small_chain_grid


def simplex(n: int):
    return arrays(np.float64, n, elements=st.floats(0.0, 1.0)).filter(lambda v: v.sum() > 1e-3).map(lambda v: v / v.sum())


# ---------------------------------------------------------------- distributions


def test_categorical_renormalizes_small_drift():
    d = mc.CategoricalDist([0.5, 0.5 + 1e-11])
    assert abs(d.probs.sum() - 1.0) <= 1e-15


@pytest.mark.parametrize("bad", [[0.5, 0.6], [1.2, -0.2], [np.nan, 1.0], []])
def test_categorical_rejects_invalid(bad):
    with pytest.raises(ValueError):
        mc.CategoricalDist(bad)


def test_tv_examples(example2):
    p = np.array([0.2, 0.3, 0.5])
    assert mc.tv_distance(p, p) == 0.0
    assert mc.tv_distance([1, 0], [0, 1]) == 1.0
    pi = mc.stationary_distribution(example2).probs
    brute = 0.5 * sum(abs(a - b) for a, b in zip(example2.row(0), pi))
    closed = 0.5 * (0.2 * (1 - 0.5) + 0.2 * 0.5)
    assert mc.tv_distance(example2.row(0), pi) == pytest.approx(0.1, abs=1e-12)
    assert brute == pytest.approx(closed, abs=1e-12)


def test_tv_dimension_mismatch():
    with pytest.raises(ValueError):
        mc.tv_distance([0.5, 0.5], [1 / 3] * 3)


@settings(max_examples=200, deadline=None)
@given(simplex(4), simplex(4), simplex(4))
def test_tv_metric_properties(p, q, r):
    assert 0.0 <= mc.tv_distance(p, q) <= 1.0
    assert mc.tv_distance(p, q) == pytest.approx(mc.tv_distance(q, p), abs=1e-15)
    assert mc.tv_distance(p, r) <= mc.tv_distance(p, q) + mc.tv_distance(q, r) + 1e-12


def test_renyi_examples():
    assert mc.renyi_divergence([1, 0], [0.5, 0.5], 2.0) == pytest.approx(math.log(2), abs=1e-14)
    p = [0.3, 0.7]
    assert mc.renyi_divergence(p, p, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert mc.renyi_divergence(p, p, 3.0) == pytest.approx(0.0, abs=1e-15)


def test_renyi_rejects_order_one():
    with pytest.raises(ValueError):
        mc.renyi_divergence([0.3, 0.7], [0.6, 0.4], 1.0)


def test_renyi_infinite_when_support_escapes():
    assert mc.renyi_divergence([0.5, 0.5], [1.0, 0.0], 2.0) == float("inf")
    assert math.isfinite(mc.renyi_divergence([0.5, 0.5], [1.0, 0.0], 0.5))


def test_renyi_brackets_kl():
    p, q = [0.3, 0.7], [0.6, 0.4]
    kl = sum(a * math.log(a / b) for a, b in zip(p, q))
    assert mc.kl_divergence(p, q) == pytest.approx(kl, abs=1e-15)
    for a in (1 - 1e-4, 1 + 1e-4):
        assert abs(mc.renyi_divergence(p, q, a) - kl) <= 1e-3


@settings(max_examples=150, deadline=None)
@given(simplex(3), simplex(3))
def test_renyi_monotone_in_order(p, q):
    vals = [mc.renyi_divergence(p, q, a) for a in (0.5, 2.0, 4.0, 8.0)]
    for lo, hi in zip(vals, vals[1:]):
        if math.isinf(lo):
            assert math.isinf(hi)
            continue
        assert hi >= lo - 1e-9 * max(1.0, abs(lo))


# ---------------------------------------------------------------- chains


def test_example_chain_two_states(example2):
    np.testing.assert_allclose(example2.transition, [[0.6, 0.4], [0.4, 0.6]], atol=1e-15)


def test_example_chain_rows_and_stationary(example3):
    np.testing.assert_allclose(example3.transition.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(mc.stationary_distribution(example3).probs, [0.2, 0.3, 0.5], atol=1e-12)


def test_example_chain_matches_display_for_common_alpha():
    p, a = np.array([0.1, 0.4, 0.5]), 0.35
    chain = mc.build_example_chain(p, [a] * 3)
    display = np.array([[(1 - a) * p[j] + a * (i == j) for j in range(3)] for i in range(3)])
    np.testing.assert_allclose(chain.transition, display, atol=1e-15)


def test_example_chain_small_alpha_is_iid():
    chain = mc.build_example_chain([0.2, 0.3, 0.5], [1e-12] * 3)
    np.testing.assert_allclose(chain.transition, np.tile([0.2, 0.3, 0.5], (3, 1)), atol=1e-11)


@pytest.mark.parametrize("alphas", [[0.1, 1.5, 0.3], [0.0, 0.2, 0.3], [0.1, 0.2]])
def test_example_chain_rejects_bad_alphas(alphas):
    with pytest.raises(ValueError):
        mc.build_example_chain([0.2, 0.3, 0.5], alphas)


def test_example_chain_row_tv_closed_form(example3):
    p, a = np.array([0.2, 0.3, 0.5]), np.array([0.1, 0.2, 0.3])
    for i in range(3):
        closed = sum(max(a[i], a[j]) * p[j] for j in range(3) if j != i)
        assert mc.tv_distance(example3.row(i), p) == pytest.approx(closed, abs=1e-14)
        assert closed <= (1 - p[i]) * a.max() + 1e-15


def test_chain_json_roundtrip(example3):
    back = mc.FiniteMarkovChain.from_json(example3.to_json())
    assert np.array_equal(back.transition, example3.transition)
    assert np.array_equal(back.initial.probs, example3.initial.probs)
    assert back.to_json() == example3.to_json()


def test_stationary_doubly_stochastic():
    chain = mc.FiniteMarkovChain(np.full((2, 2), 0.5), mc.CategoricalDist.uniform(2))
    np.testing.assert_allclose(mc.stationary_distribution(chain).probs, [0.5, 0.5], atol=1e-15)


def test_stationary_power_iteration_oracle():
    chain = mc.random_ergodic_chain(4, np.random.default_rng(2024))
    pi = mc.stationary_distribution(chain).probs
    assert np.max(np.abs(pi @ chain.transition - pi)) <= 1e-12
    x = np.full(4, 0.25)
    for _ in range(5000):
        x = x @ chain.transition
    np.testing.assert_allclose(pi, x, atol=1e-12)


@pytest.mark.parametrize("P", [np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])])
def test_stationary_rejects_reducible_or_periodic(P):
    with pytest.raises(ValueError):
        mc.stationary_distribution(mc.FiniteMarkovChain(P, mc.CategoricalDist.uniform(2)))


def test_kernel_power(example3):
    np.testing.assert_array_equal(mc.kernel_power(example3, 1), example3.transition)
    ident = mc.FiniteMarkovChain(np.eye(3), mc.CategoricalDist.uniform(3))
    np.testing.assert_array_equal(mc.kernel_power(ident, 7), np.eye(3))
    np.testing.assert_allclose(mc.kernel_power(example3, 5), mc.kernel_power(example3, 2) @ mc.kernel_power(example3, 3), atol=1e-10)
    P64 = example3.transition.copy()
    for _ in range(63):
        P64 = P64 @ example3.transition
    np.testing.assert_allclose(mc.kernel_power(example3, 64), P64, atol=1e-12)
    for row in P64:
        assert mc.tv_distance(row, [0.2, 0.3, 0.5]) <= 1e-6
    with pytest.raises(ValueError):
        mc.kernel_power(example3, 0)


# ---------------------------------------------------------------- ergodicity


def test_ergodicity_two_state(example2):
    prof = mc.estimate_ergodicity(example2)
    assert prof.rho == pytest.approx(0.2, abs=1e-15)


def test_ergodicity_iid_floor():
    prof = mc.estimate_ergodicity(mc.iid_chain([0.2, 0.3, 0.5]))
    assert prof.rho == mc.RHO_FLOOR
    assert np.all(prof.m_values == 0)


def test_ergodicity_rejects_non_contracting():
    P = np.array([[0.5, 0.5, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    with pytest.raises(ValueError, match="manually"):
        mc.estimate_ergodicity(mc.FiniteMarkovChain(P, mc.CategoricalDist.uniform(3)))


@pytest.mark.parametrize("chain", small_chain_grid(), ids=lambda c: f"N{c.n_states}")
def test_ergodicity_profile_invariant(chain):
    prof = mc.estimate_ergodicity(chain, horizon=60)
    pi = prof.stationary.probs
    for t in range(1, prof.horizon + 1):
        Pt = mc.kernel_power(chain, t)
        tvs = 0.5 * np.abs(Pt - pi).sum(axis=1)
        assert np.all(tvs <= prof.m_values * prof.rho**t + 1e-10)


# ---------------------------------------------------------------- dependency matrices


def test_gamma_iid_and_diagonal():
    G = mc.gamma_exact(mc.iid_chain([0.3, 0.7]), 5)
    np.testing.assert_array_equal(G, np.eye(5))
    assert np.all(mc.gamma_tilde_exact(mc.iid_chain([0.3, 0.7]), 5) == 0)


def test_gamma_tilde_two_state(example2):
    Gt = mc.gamma_tilde_exact(example2, 4)
    expected = np.zeros((4, 4))
    expected[[0, 1, 2], [1, 2, 3]] = 0.2
    np.testing.assert_allclose(Gt, expected, atol=1e-15)


@pytest.mark.parametrize("chain", small_chain_grid(), ids=lambda c: f"N{c.n_states}")
def test_gamma_matches_block_enumeration(chain):
    for n in range(2, 7):
        dep = mc.dependency_matrices(chain, n)
        G = dep.gamma
        assert np.all(np.diag(G) == 1.0)
        assert np.all(np.tril(G, -1) == 0.0)
        assert np.all((G >= 0) & (G <= 1))
        for i in range(1, n):
            for j in range(i + 1, n + 1):
                assert abs(G[i - 1, j - 1] - mc.brute_force_block_tv(chain, i, j, n)) <= 1e-10
        Gt = dep.gamma_tilde
        beyond = np.triu(Gt, 2)
        assert np.all(np.abs(beyond) <= 1e-10)
        assert np.all(np.tril(Gt) == 0)


def test_block_tv_adjacent_is_dobrushin(example3):
    for n in (3, 5):
        assert mc.brute_force_block_tv(example3, 1, 2, n) == pytest.approx(mc.dobrushin_coefficient(example3.transition), abs=1e-12)
    assert mc.brute_force_block_tv(example3, 2, 3, 4, prefix=[1]) == pytest.approx(mc.dobrushin_coefficient(example3.transition), abs=1e-12)
    assert mc.brute_force_block_tv(mc.iid_chain([0.4, 0.6]), 1, 3, 5) == pytest.approx(0.0, abs=1e-15)


def test_block_tv_budget():
    chain = mc.iid_chain([0.5, 0.5])
    with pytest.raises(ValueError, match="budget"):
        mc.brute_force_block_tv(chain, 1, 2, 25)


def test_block_tv_invalid_indices(example3):
    with pytest.raises(ValueError):
        mc.brute_force_block_tv(example3, 3, 3, 5)


def test_joint_law_against_direct_product(example3):
    J = mc.joint_law(example3, 4)
    P, p0 = example3.transition, example3.initial.probs
    assert J[2, 0, 1, 1] == pytest.approx(p0[2] * P[2, 0] * P[0, 1] * P[1, 1], abs=1e-16)
    assert J.sum() == pytest.approx(1.0, abs=1e-14)


def test_norms_of_gamma(example3):
    dep = mc.dependency_matrices(example3, 30)
    assert dep.norm_gamma_inf == pytest.approx(np.abs(dep.gamma).sum(axis=1).max(), abs=1e-12)
    assert dep.norm_gamma_op == pytest.approx(np.linalg.norm(dep.gamma, 2), abs=1e-12)
    assert dep.gamma_norm("op") <= dep.gamma_norm("inf") + 1e-12
    with pytest.raises(ValueError):
        dep.gamma_norm("fro")


def test_operator_norm_large_n_cap(example3):
    dense = mc.dependency_matrices(example3, mc.DENSE_OP_NORM_MAX_N).norm_gamma_op
    big = mc.dependency_matrices(example3, 3000)
    assert big.norm_gamma_op >= dense
    assert big.norm_gamma_op == pytest.approx(big.norm_gamma_inf, abs=1e-15)
    assert big.norm_gamma_op - dense <= 1e-5


def test_gamma_norm_caps_on_random_chains():
    rng = np.random.default_rng(7)
    for _ in range(30):
        chain = mc.random_ergodic_chain(int(rng.integers(2, 6)), rng)
        prof = mc.estimate_ergodicity(chain)
        dep = mc.dependency_matrices(chain, 60)
        G = dep.gamma
        for gap in range(1, 60):
            assert np.all(np.diag(G, gap) <= 2 * prof.rho**gap * prof.sup_m + 1e-12)
        assert dep.norm_gamma_inf <= 1 + 2 * prof.sup_m / (1 - prof.rho) + 1e-12
        assert dep.norm_gamma_tilde_inf <= 2 * prof.rho * prof.sup_m + 1e-12


# ---------------------------------------------------------------- kernel gap and discrepancy terms


def test_kernel_gap_values(example2, example3):
    assert mc.stationary_kernel_gap(mc.iid_chain([0.2, 0.8])) == pytest.approx(0.0, abs=1e-15)
    assert mc.stationary_kernel_gap(example2) == pytest.approx(0.1, abs=1e-12)
    caps = mc.example_chain_gap_caps([0.2, 0.3, 0.5], [0.1, 0.2, 0.3])
    assert mc.stationary_kernel_gap(example3) <= caps["per_state"] + 1e-15


def test_kernel_gap_quoted_cap_can_fail():
    # at uniform p the per-state cap is (N-1)/N max(alpha), which the quoted (N-1)/N^2 form undercuts
    chain = mc.build_example_chain([0.25] * 4, [0.3] * 4)
    caps = mc.example_chain_gap_caps([0.25] * 4, [0.3] * 4)
    gap = mc.stationary_kernel_gap(chain)
    assert gap == pytest.approx(caps["per_state"], abs=1e-12)
    assert gap > caps["quoted"]


def test_term1_iid_is_zero():
    chain = mc.iid_chain([0.2, 0.3, 0.5])
    assert mc.term1_discrepancy(chain, [0, 2, 1, 1, 0]) == pytest.approx(0.0, abs=1e-15)


def test_term1_constant_trajectory(example3):
    s, n = 2, 7
    expected = mc.tv_distance(example3.row(s), example3.initial) / n
    assert mc.term1_discrepancy(example3, [s] * n) == pytest.approx(expected, abs=1e-15)


def test_term1_rejects_bad_states(example3):
    with pytest.raises(ValueError):
        mc.term1_discrepancy(example3, [0, 3])


@pytest.mark.parametrize("chain", small_chain_grid(1)[:6], ids=lambda c: f"N{c.n_states}")
def test_term1_below_its_cap(chain):
    rng = np.random.default_rng(0)
    pi = mc.stationary_distribution(chain)
    for _ in range(100):
        traj = mc.sample_trajectory(chain, int(rng.integers(1, 20)), rng)
        assert mc.term1_discrepancy(chain, traj) <= mc.term1_bound(chain, traj, pi) + 1e-12


def test_term2_iid_is_zero():
    chain = mc.iid_chain([0.2, 0.3, 0.5], initial=[1, 0, 0])
    for mode in ("exact", "markov"):
        assert mc.term2_dependence(chain, 5, mode) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("chain", small_chain_grid(), ids=lambda c: f"N{c.n_states}")
def test_term2_closed_form_and_cap(chain):
    for n in range(2, 7):
        exact = mc.term2_dependence(chain, n, "exact")
        assert mc.term2_dependence(chain, n, "markov") == pytest.approx(exact, abs=1e-12)
        if mc.dobrushin_coefficient(chain.transition) < 1:
            assert exact <= mc.term2_dependence(chain, n, "bound") + 1e-12


def test_term2_two_state_value(example2):
    # n=2: only i=1 contributes, r = initial = (1/2, 1/2), rP = (1/2, 1/2), each row at TV 0.1
    assert mc.term2_dependence(example2, 2, "exact") == pytest.approx(0.1 / 2, abs=1e-15)


def test_term2_cap_large_n_limit(example3):
    chain = example3.with_initial([1, 0, 0])
    prof = mc.estimate_ergodicity(chain, horizon=200)
    gap = mc.stationary_kernel_gap(chain)
    init_tv = mc.tv_distance(chain.initial, prof.stationary)
    for n in (100, 1000, 10000):
        val = mc.term2_dependence(chain, n, "bound", profile=prof)
        geo = 2 * prof.rho * (1 - prof.rho ** (n - 2)) * prof.expected_m(chain.initial) / (1 - prof.rho) / n
        assert val == pytest.approx(2 * gap + 4 * init_tv / n + geo, abs=1e-12)
    assert mc.term2_dependence(chain, 10**6, "bound", profile=prof) == pytest.approx(2 * gap, abs=1e-5)


def test_term2_exact_budget():
    with pytest.raises(ValueError, match="budget"):
        mc.term2_dependence(mc.iid_chain([0.5, 0.5]), 25, "exact")


def test_sample_trajectory_frequencies(example3):
    rng = np.random.default_rng(5)
    s = mc.sample_trajectory(example3, 50000, rng)
    freq = np.bincount(s, minlength=3) / s.size
    np.testing.assert_allclose(freq, [0.2, 0.3, 0.5], atol=0.02)
    again = mc.sample_trajectory(example3, 100, np.random.default_rng(1))
    assert np.array_equal(again, mc.sample_trajectory(example3, 100, np.random.default_rng(1)))
