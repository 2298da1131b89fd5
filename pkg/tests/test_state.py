"""Model state: hyperparameter validation, transition counting, the
supervised bootstrap, and the binary snapshot format."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from streamhmm.distributions import NiwParams
from streamhmm.errors import InputError, ParameterError, SnapshotError
from streamhmm.rates import LearningRates, RateConfig
from streamhmm.state import (
    EmissionState,
    HdpHyperparams,
    LabeledSequence,
    ModelState,
    TransitionState,
    count_transitions,
    init_from_bootstrap,
)


def two_class_sequences(rng, n=40, d=1):
    """Two labeled sequences over classes {0, 1} with well-separated means."""
    seqs = []
    for _ in range(2):
        labels = np.repeat([0, 1], n // 2)
        feats = rng.normal(labels * 5.0, 0.5)[:, None] * np.ones(d)
        seqs.append(LabeledSequence(feats, labels))
    return seqs


class TestHyperparams:
    def test_defaults(self):
        h = HdpHyperparams()
        assert (h.gamma, h.alpha, h.kappa, h.n_states) == (1.0, 2.0, 2.0, 20)

    def test_validation(self):
        with pytest.raises(ParameterError):
            HdpHyperparams(gamma=0.0)
        with pytest.raises(ParameterError):
            HdpHyperparams(alpha=-1.0)
        with pytest.raises(ParameterError):
            HdpHyperparams(kappa=-0.1)
        with pytest.raises(ParameterError):
            HdpHyperparams(n_states=0)

    def test_zero_stickiness_allowed(self):
        assert HdpHyperparams(kappa=0.0).rho == 0.0

    def test_sticky_fraction(self):
        assert HdpHyperparams(alpha=2.0, kappa=2.0).rho == 0.5
        assert HdpHyperparams(alpha=1.0, kappa=3.0).rho == 0.75


class TestLabeledSequence:
    def test_column_promotion(self):
        seq = LabeledSequence([1.0, 2.0, 3.0], [0, 0, 1])
        assert seq.features.shape == (3, 1)
        assert len(seq) == 3

    def test_length_mismatch_rejected(self):
        with pytest.raises(InputError):
            LabeledSequence(np.zeros((3, 1)), [0, 1])

    def test_unlabeled_allowed(self):
        assert LabeledSequence(np.zeros((3, 1))).labels is None

    def test_nonfinite_features_rejected(self):
        with pytest.raises(InputError):
            LabeledSequence(np.array([[1.0], [np.nan]]), [0, 1])


class TestCountTransitions:
    def test_hand_example(self):
        n = count_transitions(np.array([0, 0, 1, 1, 0]), 2)
        assert np.array_equal(n, [[1, 1], [1, 1]])

    def test_first_frame_contributes_nothing(self):
        assert count_transitions(np.array([3]), 5).sum() == 0
        assert count_transitions(np.zeros(0, dtype=np.int64), 5).sum() == 0

    def test_total_is_length_minus_one(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 4, size=57)
        assert count_transitions(labels, 4).sum() == 56


class TestEmissionState:
    def test_base_prior_broadcast(self):
        base = NiwParams([1.0, 2.0], 2.0, 3.0 * np.eye(2), 5.0)
        em = EmissionState.from_base_prior(base, 4)
        assert em.n_states == 4 and em.dim == 2
        assert_allclose(em.prior_mean, np.tile([1.0, 2.0], (4, 1)))
        assert_allclose(em.post_dof, np.full(4, 5.0))
        # initial covariance is the prior IW mean: scale / (dof - d - 1)
        assert_allclose(em.cov, np.tile(1.5 * np.eye(2), (4, 1, 1)))

    def test_prior_of_returns_copies(self):
        em = EmissionState.from_base_prior(NiwParams([0.0], 1.0, [[1.0]], 3.0), 2)
        p = em.prior_of(1)
        p.mean[0] = 99.0
        p.scale[0, 0] = 99.0
        assert em.prior_mean[1, 0] == 0.0
        assert em.prior_scale[1, 0, 0] == 1.0

    def test_copy_is_deep(self):
        em = EmissionState(3, 2)
        clone = em.copy()
        clone.post_mean[0, 0] = 7.0
        assert em.post_mean[0, 0] == 0.0


class TestTransitionState:
    def test_adjusted_tables_subtracts_diagonal_overrides(self):
        tr = TransitionState(2)
        tr.m = np.array([[3, 1], [0, 2]], dtype=np.int64)
        tr.override = np.array([2, 1], dtype=np.int64)
        assert_allclose(tr.adjusted_tables(), [[1.0, 1.0], [0.0, 1.0]])

    def test_copy_is_deep(self):
        tr = TransitionState(3)
        clone = tr.copy()
        clone.n[0, 0] = 5
        assert tr.n[0, 0] == 0


class TestModelState:
    def test_block_size_mismatch_rejected(self):
        with pytest.raises(ParameterError):
            ModelState(HdpHyperparams(n_states=3), EmissionState(2, 1),
                       TransitionState(3), LearningRates())

    def test_active_states_returns_copy(self):
        state = ModelState(HdpHyperparams(n_states=2), EmissionState(2, 1),
                           TransitionState(2), LearningRates())
        state.last_batch_states = np.array([0, 1])
        view = state.active_states()
        view[0] = 9
        assert state.last_batch_states[0] == 0

    def test_ever_active_from_occupancy(self):
        state = ModelState(HdpHyperparams(n_states=4), EmissionState(4, 1),
                           TransitionState(4), LearningRates())
        state.emissions.occupancy = np.array([0, 3, 0, 1], dtype=np.int64)
        assert np.array_equal(state.ever_active(), [1, 3])


class TestBootstrap:
    def test_class_priors_sit_at_empirical_means(self):
        rng = np.random.default_rng(1)
        seqs = two_class_sequences(rng)
        state = init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 10,
                                    np.random.default_rng(2))
        pooled = np.concatenate([s.features for s in seqs])
        labels = np.concatenate([s.labels for s in seqs])
        for k in (0, 1):
            assert_allclose(state.emissions.prior_mean[k], pooled[labels == k].mean(axis=0),
                            rtol=1e-12)

    def test_unseen_states_keep_pooled_base_measure(self):
        rng = np.random.default_rng(3)
        seqs = two_class_sequences(rng)
        state = init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 10,
                                    np.random.default_rng(4))
        pooled = np.concatenate([s.features for s in seqs])
        for k in range(2, 8):
            assert_allclose(state.emissions.prior_mean[k], pooled.mean(axis=0), rtol=1e-12)
        # the base measure is wider than the within-class scale
        assert state.emissions.prior_scale[2, 0, 0] > state.emissions.prior_scale[0, 0, 0]

    def test_occupancy_and_active_set(self):
        rng = np.random.default_rng(5)
        seqs = two_class_sequences(rng)
        state = init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 5,
                                    np.random.default_rng(6))
        labels = np.concatenate([s.labels for s in seqs])
        assert np.array_equal(state.emissions.occupancy,
                              np.bincount(labels, minlength=8))
        assert np.array_equal(state.last_batch_states, [0, 1])
        assert np.array_equal(state.ever_active(), [0, 1])

    def test_transition_counts_do_not_cross_sequence_boundaries(self):
        seqs = [
            LabeledSequence([[0.0], [5.0]], [0, 1]),
            LabeledSequence([[5.0], [0.0]], [1, 0]),
        ]
        state = init_from_bootstrap(seqs, HdpHyperparams(n_states=4), 3,
                                    np.random.default_rng(7))
        assert np.array_equal(state.transitions.n[:2, :2], [[0, 1], [1, 0]])
        assert state.transitions.n.sum() == 2  # not 3: no pair across sequences

    def test_counts_survive_the_sweeps(self):
        """Labels are clamped, so the sweeps must not touch the counts."""
        rng = np.random.default_rng(8)
        seqs = two_class_sequences(rng)
        state = init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 20,
                                    np.random.default_rng(9))
        expected = sum(count_transitions(s.labels, 8) for s in seqs)
        assert np.array_equal(state.transitions.n, expected)

    def test_table_counts_bounded_by_transition_counts(self):
        rng = np.random.default_rng(10)
        seqs = two_class_sequences(rng)
        state = init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 20,
                                    np.random.default_rng(11))
        m, n = state.transitions.m, state.transitions.n
        assert np.all(m <= n)
        assert np.all(m[n > 0] >= 1)
        assert np.all(state.transitions.override <= np.diag(m))

    def test_posterior_dof_absorbs_class_counts(self):
        rng = np.random.default_rng(12)
        seqs = two_class_sequences(rng)
        state = init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 5,
                                    np.random.default_rng(13))
        counts = np.bincount(np.concatenate([s.labels for s in seqs]), minlength=8)
        assert_allclose(state.emissions.post_dof, state.emissions.prior_dof + counts)

    def test_row_baseline_follows_final_weights(self):
        rng = np.random.default_rng(14)
        seqs = two_class_sequences(rng)
        hyper = HdpHyperparams(n_states=6, alpha=2.0, kappa=2.0)
        state = init_from_bootstrap(seqs, hyper, 8, np.random.default_rng(15))
        expected = hyper.alpha * state.transitions.beta[None, :] + hyper.kappa * np.eye(6)
        assert_allclose(state.transitions.pi_conc, expected, rtol=1e-12)
        assert_allclose(state.transitions.beta_conc, np.full(6, hyper.gamma / 6), rtol=1e-15)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(16)
        seqs = two_class_sequences(rng)
        a = init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 10,
                                np.random.default_rng(17))
        b = init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 10,
                                np.random.default_rng(17))
        assert a.to_bytes() == b.to_bytes()

    def test_tuple_inputs_accepted(self):
        feats = np.array([[0.0], [0.1], [5.0], [5.1]])
        labels = np.array([0, 0, 1, 1])
        state = init_from_bootstrap([(feats, labels)], HdpHyperparams(n_states=4), 3,
                                    np.random.default_rng(18))
        assert np.array_equal(state.last_batch_states, [0, 1])

    def test_validation(self):
        rng = np.random.default_rng(19)
        seqs = two_class_sequences(rng)
        hyper = HdpHyperparams(n_states=8)
        with pytest.raises(InputError):
            init_from_bootstrap([], hyper, 5, rng)
        with pytest.raises(InputError):
            init_from_bootstrap([LabeledSequence(np.zeros((3, 1)))], hyper, 5, rng)
        with pytest.raises(InputError):
            init_from_bootstrap(
                [LabeledSequence(np.zeros((0, 1)), np.zeros(0, dtype=np.int64))],
                hyper, 5, rng)
        with pytest.raises(InputError):
            init_from_bootstrap(seqs, hyper, 0, rng)
        with pytest.raises(InputError):  # label 8 is out of range for 8 states
            init_from_bootstrap([LabeledSequence([[0.0], [1.0]], [0, 8])], hyper, 5, rng)
        with pytest.raises(InputError):  # feature width must agree across sequences
            init_from_bootstrap(
                [seqs[0], LabeledSequence(np.zeros((4, 2)), [0, 0, 1, 1])], hyper, 5, rng)


class TestSnapshot:
    @pytest.fixture()
    def state(self):
        rng = np.random.default_rng(20)
        seqs = two_class_sequences(rng)
        return init_from_bootstrap(seqs, HdpHyperparams(n_states=8), 10,
                                   np.random.default_rng(21))

    def test_roundtrip_is_bitwise(self, state):
        blob = state.to_bytes()
        back = ModelState.from_bytes(blob)
        assert back.to_bytes() == blob
        assert back.n_batches_absorbed == state.n_batches_absorbed
        assert np.array_equal(back.last_batch_states, state.last_batch_states)
        assert back.rates.config.adapt == state.rates.config.adapt

    def test_restored_state_is_independent(self, state):
        back = ModelState.from_bytes(state.to_bytes())
        back.emissions.post_mean[0, 0] += 1.0
        assert back.emissions.post_mean[0, 0] != state.emissions.post_mean[0, 0]

    def test_bad_magic_rejected(self, state):
        blob = bytearray(state.to_bytes())
        blob[0] ^= 0xFF
        with pytest.raises(SnapshotError):
            ModelState.from_bytes(bytes(blob))
        with pytest.raises(SnapshotError):
            ModelState.from_bytes(b"")

    def test_unsupported_version_rejected(self, state):
        blob = bytearray(state.to_bytes())
        blob[8] = 0xFE  # version field sits right after the magic
        with pytest.raises(SnapshotError):
            ModelState.from_bytes(bytes(blob))

    def test_truncation_rejected(self, state):
        blob = state.to_bytes()
        with pytest.raises(SnapshotError):
            ModelState.from_bytes(blob[:20])
        with pytest.raises(SnapshotError):
            ModelState.from_bytes(blob[:-8])

    def test_trailing_bytes_rejected(self, state):
        with pytest.raises(SnapshotError):
            ModelState.from_bytes(state.to_bytes() + b"\x00")

    def test_save_load_file(self, state, tmp_path):
        path = tmp_path / "model.snapshot"
        state.save(path)
        assert ModelState.load(path).to_bytes() == state.to_bytes()

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(SnapshotError):
            ModelState.load(tmp_path / "nope.snapshot")

    def test_size_is_fixed_by_truncation_level(self, state):
        """Footprint depends on the truncation level, not on data volume."""
        rng = np.random.default_rng(22)
        bigger = init_from_bootstrap(two_class_sequences(rng, n=400),
                                     HdpHyperparams(n_states=8), 10,
                                     np.random.default_rng(23))
        assert bigger.nbytes == state.nbytes
        assert len(bigger.to_bytes()) == len(state.to_bytes())

    def test_copy_matches_snapshot_roundtrip(self, state):
        assert state.copy().to_bytes() == state.to_bytes()
