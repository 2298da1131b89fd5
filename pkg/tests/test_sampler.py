"""Blocked Gibbs sweep pieces: emission likelihoods, the forward-backward
state resample against brute-force path enumeration, seating-process table
counts, weight/row draws, and the conjugate emission refresh."""

import itertools

import numpy as np
import pytest
import scipy.stats
from numpy.testing import assert_allclose

from streamhmm.distributions import dirichlet_rows
from streamhmm.rates import LearningRates, RateConfig
from streamhmm.sampler import (
    emission_log_likelihoods,
    gibbs_sweep,
    sample_aux_counts,
    sample_aux_counts_raw,
    sample_beta,
    sample_emissions,
    sample_emissions_plain,
    sample_pi_rows,
    sample_states,
    transition_concentrations,
)
from streamhmm.state import (
    EmissionState,
    HdpHyperparams,
    LabeledSequence,
    ModelState,
    TransitionState,
    init_from_bootstrap,
)


def small_chain_state():
    """Fully specified two-state chain used by the enumeration checks."""
    hyper = HdpHyperparams(kappa=0.0, n_states=2)
    em = EmissionState(2, 1)
    em.mean = np.array([[0.0], [1.0]])
    em.cov = np.ones((2, 1, 1))
    tr = TransitionState(2)
    tr.beta = np.array([0.5, 0.5])
    tr.pi = np.array([[0.7, 0.3], [0.4, 0.6]])
    return ModelState(hyper, em, tr, LearningRates())


def enumerate_paths(state, Y):
    """Exact joint weight of every state path, by brute force."""
    L = state.hyper.n_states
    beta, pi = state.transitions.beta, state.transitions.pi
    mu = state.emissions.mean[:, 0]
    sd = np.sqrt(state.emissions.cov[:, 0, 0])
    weights = {}
    for path in itertools.product(range(L), repeat=len(Y)):
        w = beta[path[0]]
        for t, k in enumerate(path):
            w *= scipy.stats.norm.pdf(Y[t, 0], mu[k], sd[k])
            if t:
                w *= pi[path[t - 1], k]
        weights[path] = w
    return weights


def bootstrapped_state(seed=0, n_states=8, adapt=True, n=60):
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n // 2)
    feats = rng.normal(labels * 50.0, 0.5)[:, None]
    return init_from_bootstrap(
        [LabeledSequence(feats, labels)], HdpHyperparams(n_states=n_states),
        30, np.random.default_rng(seed + 1), RateConfig(adapt=adapt),
    )


class TestEmissionLogLikelihoods:
    def test_univariate_matches_scipy(self):
        Y = np.linspace(-3, 3, 11)[:, None]
        means = np.array([[0.0], [1.5]])
        covs = np.array([[[1.0]], [[4.0]]])
        ll = emission_log_likelihoods(Y, means, covs)
        assert_allclose(ll[:, 0], scipy.stats.norm.logpdf(Y[:, 0], 0.0, 1.0), rtol=1e-12)
        assert_allclose(ll[:, 1], scipy.stats.norm.logpdf(Y[:, 0], 1.5, 2.0), rtol=1e-12)

    def test_multivariate_matches_scipy(self):
        rng = np.random.default_rng(0)
        Y = rng.standard_normal((7, 2))
        mean = np.array([0.3, -0.2])
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        ll = emission_log_likelihoods(Y, mean[None], cov[None])
        ref = scipy.stats.multivariate_normal(mean, cov).logpdf(Y)
        assert_allclose(ll[:, 0], ref, atol=1e-7)


class TestStateResample:
    Y = np.array([[0.2], [0.8], [0.5]])

    def test_loglik_matches_enumeration(self):
        state = small_chain_state()
        weights = enumerate_paths(state, self.Y)
        _, loglik = sample_states(state, self.Y, np.random.default_rng(0))
        assert_allclose(loglik, np.log(sum(weights.values())), rtol=1e-9)

    def test_marginals_match_enumeration(self):
        """Per-frame posterior state frequencies agree with the exact
        enumeration over all 8 paths."""
        state = small_chain_state()
        weights = enumerate_paths(state, self.Y)
        total = sum(weights.values())
        exact = np.zeros((3, 2))
        for path, w in weights.items():
            for t, k in enumerate(path):
                exact[t, k] += w / total
        rng = np.random.default_rng(1)
        counts = np.zeros((3, 2))
        n_sweeps = 30_000
        for _ in range(n_sweeps):
            z, _ = sample_states(state, self.Y, rng)
            counts[np.arange(3), z] += 1
        assert np.max(np.abs(counts / n_sweeps - exact)) < 0.02

    def test_empty_batch(self):
        z, loglik = sample_states(small_chain_state(), np.zeros((0, 1)),
                                  np.random.default_rng(0))
        assert z.size == 0 and loglik == 0.0

    def test_overwhelming_likelihood_pins_the_path(self):
        state = small_chain_state()
        state.emissions.mean = np.array([[0.0], [500.0]])
        state.emissions.cov = np.full((2, 1, 1), 0.25)
        z, _ = sample_states(state, np.full((20, 1), 499.9), np.random.default_rng(2))
        assert np.all(z == 1)


class TestTableCounts:
    def base_state(self, alpha=1.0, kappa=0.0):
        hyper = HdpHyperparams(alpha=alpha, kappa=kappa, n_states=2)
        state = ModelState(hyper, EmissionState(2, 1), TransitionState(2), LearningRates())
        state.transitions.beta = np.array([0.5, 0.5])
        return state

    def test_single_count_always_opens_a_table(self):
        state = self.base_state()
        state.transitions.n = np.array([[1, 0], [0, 0]], dtype=np.int64)
        rng = np.random.default_rng(0)
        for _ in range(50):
            sample_aux_counts_raw(state, rng)
            assert state.transitions.m[0, 0] == 1

    def test_zero_counts_give_zero_tables(self):
        state = self.base_state()
        sample_aux_counts_raw(state, np.random.default_rng(0))
        assert state.transitions.m.sum() == 0
        assert state.transitions.override.sum() == 0

    def test_tables_bounded_by_counts(self):
        state = self.base_state(alpha=2.0, kappa=2.0)
        state.transitions.n = np.array([[9, 4], [2, 7]], dtype=np.int64)
        rng = np.random.default_rng(3)
        for _ in range(200):
            sample_aux_counts_raw(state, rng)
            m = state.transitions.m
            assert np.all(m <= state.transitions.n)
            assert np.all(m[state.transitions.n > 0] >= 1)

    def test_seating_expectation(self):
        """Three arrivals at concentration 1/2 open 1 + 1/3 + 1/5 = 23/15
        tables on average."""
        state = self.base_state(alpha=1.0, kappa=0.0)
        state.transitions.n = np.array([[0, 3], [0, 0]], dtype=np.int64)
        rng = np.random.default_rng(4)
        total = 0
        reps = 100_000
        for _ in range(reps):
            sample_aux_counts_raw(state, rng)
            total += state.transitions.m[0, 1]
        assert_allclose(total / reps, 23 / 15, rtol=0.02)

    def test_no_stickiness_means_no_overrides(self):
        state = self.base_state(alpha=2.0, kappa=0.0)
        state.transitions.n = np.array([[30, 5], [4, 20]], dtype=np.int64)
        rng = np.random.default_rng(5)
        for _ in range(100):
            sample_aux_counts_raw(state, rng)
            assert state.transitions.override.sum() == 0

    def test_override_fraction(self):
        """With alpha = kappa the sticky fraction is rho = 1/2 and each
        diagonal table flips with p = rho / (rho + beta (1 - rho)) = 2/3."""
        state = self.base_state(alpha=2.0, kappa=2.0)
        state.transitions.n = np.array([[50, 0], [0, 0]], dtype=np.int64)
        rng = np.random.default_rng(6)
        m_total = 0
        o_total = 0
        for _ in range(20_000):
            sample_aux_counts_raw(state, rng)
            m_total += state.transitions.m[0, 0]
            o_total += state.transitions.override[0]
        assert_allclose(o_total / m_total, 2 / 3, rtol=0.03)

    def test_wrapper_recounts_from_path(self):
        state = self.base_state()
        z = np.array([0, 0, 1, 1, 0])
        m, override = sample_aux_counts(state, z, np.random.default_rng(7))
        assert np.array_equal(state.transitions.n, [[1, 1], [1, 1]])
        assert m.shape == (2, 2) and override.shape == (2,)


class TestWeightDraws:
    def test_beta_concentration_uses_adjusted_tables(self):
        state = bootstrapped_state(seed=20)
        tr = state.transitions
        conc = tr.beta_conc + tr.adjusted_tables().sum(axis=0)
        direct = dirichlet_rows(np.maximum(conc, 1e-300)[None, :], np.random.default_rng(8))[0]
        drawn = sample_beta(state, np.random.default_rng(8))
        assert np.array_equal(drawn, direct)

    def test_beta_rate_one_matches_unscaled(self):
        a = bootstrapped_state(seed=21)
        b = bootstrapped_state(seed=21)
        x = sample_beta(a, np.random.default_rng(9), tau=1.0)
        y = sample_beta(b, np.random.default_rng(9), tau=None)
        assert np.array_equal(x, y)

    def test_pi_rows_without_stickiness_are_plain_dirichlet(self):
        hyper = HdpHyperparams(kappa=0.0, n_states=3)
        state = ModelState(hyper, EmissionState(3, 1), TransitionState(3), LearningRates())
        state.transitions.pi_conc = np.full((3, 3), 1.5)
        state.transitions.n = np.array([[4, 1, 0], [0, 2, 2], [1, 0, 3]], dtype=np.int64)
        direct = dirichlet_rows(np.full((3, 3), 1.5) + state.transitions.n,
                                np.random.default_rng(10))
        rows = sample_pi_rows(state, np.random.default_rng(10))
        assert np.array_equal(rows, direct)

    def test_pi_rate_one_matches_unscaled(self):
        a = bootstrapped_state(seed=22)
        b = bootstrapped_state(seed=22)
        x = sample_pi_rows(a, np.random.default_rng(11), tau=1.0)
        y = sample_pi_rows(b, np.random.default_rng(11), tau=None)
        assert np.array_equal(x, y)

    def test_large_stickiness_dominates_rows(self):
        """kappa = 1000 against alpha = 2 forces self-transition mass near 1."""
        hyper = HdpHyperparams(alpha=2.0, kappa=1000.0, n_states=3)
        state = ModelState(hyper, EmissionState(3, 1), TransitionState(3), LearningRates())
        beta = np.array([0.3, 0.3, 0.4])
        state.transitions.pi_conc = hyper.alpha * beta[None, :] + hyper.kappa * np.eye(3)
        rng = np.random.default_rng(12)
        diags = np.array([np.diag(sample_pi_rows(state, rng)) for _ in range(2_000)])
        assert diags.mean() > 0.99

    def test_rate_ten_shrinks_weight_variance(self):
        """Scaling [51, 31, 21] by rate 10 shrinks each component variance by
        (1004/104) * (a_k (A - a_k)) / (a'_k (A' - a'_k)), about 9.65."""
        state = ModelState(HdpHyperparams(n_states=3), EmissionState(3, 1),
                           TransitionState(3), LearningRates())
        conc = np.array([51.0, 31.0, 21.0])
        state.transitions.beta_conc = conc.copy()
        reps = 40_000
        rng = np.random.default_rng(13)
        plain = np.array([sample_beta(state, rng, tau=None) for _ in range(reps)])
        scaled = np.array([sample_beta(state, rng, tau=10.0) for _ in range(reps)])
        ratio = plain.var(axis=0) / scaled.var(axis=0)

        A = conc.sum()
        conc10 = 10.0 * (conc - 1.0) + 1.0
        A10 = conc10.sum()
        exact = (conc * (A - conc) / (A * A * (A + 1))) / (
            conc10 * (A10 - conc10) / (A10 * A10 * (A10 + 1)))
        assert_allclose(ratio, exact, rtol=0.06)
        assert_allclose(ratio, np.full(3, 10.0), rtol=0.2)


class TestEmissionRefresh:
    def hand_state(self):
        hyper = HdpHyperparams(n_states=2)
        em = EmissionState(2, 1)
        em.prior_mean[:] = 0.0
        em.prior_strength[:] = 1.0
        em.prior_scale[:] = 1.0
        em.prior_dof[:] = 3.0
        return ModelState(hyper, em, TransitionState(2), LearningRates())

    def test_hand_posterior(self):
        """Three frames at 2 on a unit prior: strength 4, mean 1.5, dof 6,
        scale 1 + (3/4) * 4 = 4; the dataless slot keeps its prior."""
        state = self.hand_state()
        Y = np.full((3, 1), 2.0)
        z = np.zeros(3, dtype=np.int64)
        sample_emissions_plain(state, Y, z, np.random.default_rng(0))
        em = state.emissions
        assert_allclose(em.post_mean[0], [1.5], rtol=1e-15)
        assert em.post_strength[0] == 4.0
        assert em.post_dof[0] == 6.0
        assert_allclose(em.post_scale[0], [[4.0]], rtol=1e-15)
        assert em.post_strength[1] == 1.0
        assert em.post_dof[1] == 3.0
        assert_allclose(em.post_scale[1], [[1.0]], rtol=0)

    def test_batch_stats_recorded(self):
        state = self.hand_state()
        Y = np.array([[2.0], [2.0], [2.0]])
        sample_emissions_plain(state, Y, np.zeros(3, dtype=np.int64),
                               np.random.default_rng(1))
        assert np.array_equal(state.emissions.batch_n, [3, 0])
        assert_allclose(state.emissions.batch_mean[0], [2.0])

    def test_rate_one_matches_plain(self):
        a = bootstrapped_state(seed=23)
        b = bootstrapped_state(seed=23)
        Y = np.random.default_rng(14).normal(0.0, 1.0, size=(12, 1))
        z = np.random.default_rng(15).integers(0, 2, size=12)
        sample_emissions(a, Y, z, np.random.default_rng(16), tau_mu=1.0, tau_sigma=1.0)
        sample_emissions_plain(b, Y, z, np.random.default_rng(16))
        assert a.to_bytes() == b.to_bytes()

    def test_scaled_rates_leave_dataless_posterior_unscaled(self):
        """A dataless state redraws from the scaled prior but its stored
        posterior must stay on the unscaled base measure."""
        state = self.hand_state()
        Y = np.full((3, 1), 2.0)
        z = np.zeros(3, dtype=np.int64)
        sample_emissions(state, Y, z, np.random.default_rng(2),
                         tau_mu=3.0, tau_sigma=2.0)
        em = state.emissions
        assert em.post_strength[1] == 1.0
        assert em.post_dof[1] == 3.0
        assert_allclose(em.post_scale[1], [[1.0]], rtol=0)
        # the occupied slot absorbed the scaled prior instead
        assert em.post_strength[0] == 3.0 * 1.0 + 3
        assert em.post_dof[0] == (2.0 * (3.0 + 2.0) - 2.0) + 3

    def test_tiny_sigma_rate_clamps_dof(self):
        state = self.hand_state()
        before = state.rates.dof_clamped
        sample_emissions(state, np.zeros((0, 1)), np.zeros(0, dtype=np.int64),
                         np.random.default_rng(3), tau_mu=1.0, tau_sigma=1e-6)
        assert state.rates.dof_clamped > before
        # barely proper dofs must still produce finite draws
        assert np.all(np.isfinite(state.emissions.cov))


class TestGibbsSweep:
    def test_empty_batch_is_a_noop(self):
        state = bootstrapped_state(seed=24)
        before = state.to_bytes()
        z, info = gibbs_sweep(state, np.zeros((0, 1)), np.random.default_rng(0))
        assert z.size == 0
        assert info == {"loglik": 0.0}
        assert state.to_bytes() == before

    def test_plain_sweep_reports_no_rates(self):
        state = bootstrapped_state(seed=25)
        Y = np.random.default_rng(17).normal(0.0, 0.5, size=(16, 1))
        _, info = gibbs_sweep(state, Y, np.random.default_rng(18), plain=True)
        assert set(info) == {"loglik"}
        assert state.rates.propose_beta == 0

    def test_adaptive_sweep_reports_rates_and_counts_proposals(self):
        state = bootstrapped_state(seed=26)
        Y = np.random.default_rng(19).normal(0.0, 0.5, size=(16, 1))
        _, info = gibbs_sweep(state, Y, np.random.default_rng(20))
        assert {"loglik", "tau_mu", "tau_sigma", "tau_beta", "tau_pi"} <= set(info)
        assert state.rates.propose_beta == 1
        assert state.rates.propose_pi == 1
        # applied rates only change at batch boundaries
        assert state.rates.tau_mu == 1.0 and state.rates.tau_pi == 1.0

    def test_disabled_adaptation_skips_rate_sampling(self):
        state = bootstrapped_state(seed=27, adapt=False)
        Y = np.random.default_rng(21).normal(0.0, 0.5, size=(16, 1))
        _, info = gibbs_sweep(state, Y, np.random.default_rng(22))
        assert set(info) == {"loglik"}
        assert state.rates.propose_beta == 0

    def test_decodes_well_separated_batch(self):
        state = bootstrapped_state(seed=28)
        Y = np.random.default_rng(23).normal(50.0, 0.5, size=(20, 1))
        z, info = gibbs_sweep(state, Y, np.random.default_rng(24))
        assert np.all(z == 1)
        assert np.isfinite(info["loglik"])

    def test_one_dimensional_input_promoted(self):
        state = bootstrapped_state(seed=29)
        z, _ = gibbs_sweep(state, np.zeros(5), np.random.default_rng(25))
        assert z.shape == (5,)
