"""Scikit-learn style front end over the online pipeline.

``fit`` runs the supervised bootstrap, ``partial_fit`` absorbs one online
batch, and ``predict`` consumes a stream batch by batch.  Because the whole
point of the model is online adaptation, ``predict`` and ``partial_fit``
advance the model state; refit (or reload a snapshot) to rewind.
"""

import json
import struct

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import InputError, SnapshotError
from .metrics import evaluate
from .rates import RateConfig
from .runner import BatchPlan, iter_batches, process_batch, propagate_posterior
from .state import HdpHyperparams, LabeledSequence, ModelState, init_from_bootstrap
from .validation import (
    as_feature_matrix,
    as_generator,
    as_label_vector,
    check_same_length,
    split_lengths,
)

_EST_MAGIC = b"SHMMEST1"


class OnlineHdpHmm(BaseEstimator):
    """Online sticky HDP-HMM segmenter/classifier with adaptive learning rates.

    Parameters mirror the library defaults: ``n_states`` is the truncation
    level, ``gamma``/``alpha``/``kappa`` the hierarchical concentrations,
    ``batch_size``/``sweeps``/``burn_in``/``bootstrap_sweeps`` the sampling
    budget, and ``adapt_rates`` toggles the learning-rate machinery
    (``False`` pins every rate at 1).
    """

    def __init__(self, n_states=20, gamma=1.0, alpha=2.0, kappa=2.0,
                 batch_size=16, sweeps=1000, burn_in=500, bootstrap_sweeps=200,
                 adapt_rates=True, scale_stat="eigen", rate_shape=2.0,
                 rate_rate=2.0, random_state=None):
        self.n_states = n_states
        self.gamma = gamma
        self.alpha = alpha
        self.kappa = kappa
        self.batch_size = batch_size
        self.sweeps = sweeps
        self.burn_in = burn_in
        self.bootstrap_sweeps = bootstrap_sweeps
        self.adapt_rates = adapt_rates
        self.scale_stat = scale_stat
        self.rate_shape = rate_shape
        self.rate_rate = rate_rate
        self.random_state = random_state

    # -- construction helpers ------------------------------------------------

    def _plan(self) -> BatchPlan:
        return BatchPlan(batch_size=self.batch_size, sweeps=self.sweeps,
                         burn_in=self.burn_in, bootstrap_sweeps=self.bootstrap_sweeps)

    def _hyper(self) -> HdpHyperparams:
        return HdpHyperparams(gamma=self.gamma, alpha=self.alpha,
                              kappa=self.kappa, n_states=self.n_states)

    def _rate_config(self) -> RateConfig:
        return RateConfig(adapt=bool(self.adapt_rates), scale_stat=self.scale_stat,
                          prior_shape=self.rate_shape, prior_rate=self.rate_rate)

    def _check_fitted(self):
        if not hasattr(self, "state_"):
            raise NotFittedError(
                "This OnlineHdpHmm instance is not fitted yet; call fit with "
                "labeled bootstrap data first.")

    # -- estimator surface ---------------------------------------------------

    def fit(self, X, y, lengths=None):
        """Supervised bootstrap on fully labeled frames.

        ``lengths`` splits the concatenated ``X``/``y`` into sequences (one
        sequence if omitted); transition counts never cross sequence ends.
        """
        X = as_feature_matrix(X)
        y = as_label_vector(y, n_states=int(self.n_states))
        check_same_length(X, y)
        plan = self._plan()
        seqs = [LabeledSequence(bx, by)
                for bx, by in zip(split_lengths(X, lengths), split_lengths(y, lengths))]
        rng = as_generator(self.random_state)
        state = init_from_bootstrap(seqs, self._hyper(), plan.bootstrap_sweeps,
                                    rng, self._rate_config())
        propagate_posterior(state)
        self.state_ = state
        self.rng_ = rng
        self.plan_ = plan
        self.diagnostics_ = []
        self.bootstrap_states_ = state.last_batch_states.copy()
        return self

    def partial_fit(self, X, y=None):
        """Absorb one online batch; decoded labels land in ``last_labels_``."""
        self._check_fitted()
        if y is not None:
            raise InputError("online batches are unlabeled; labels only enter via fit")
        decoded, diag = process_batch(self.state_, X, self.plan_, self.rng_)
        propagate_posterior(self.state_)
        self.diagnostics_.append(diag)
        self.last_labels_ = decoded
        return self

    def predict(self, X):
        """Segment and classify a stream, adapting batch by batch.

        ``X`` may be a frame matrix, an iterable of frames, or a feature-CSV
        path; it is chunked by ``batch_size``.  Returns one decoded state
        index per frame.  The model state advances (this is online learning);
        use ``save``/``load`` to checkpoint around a call.
        """
        self._check_fitted()
        out = []
        for batch in iter_batches(X, self.plan_.batch_size):
            decoded, diag = process_batch(self.state_, batch, self.plan_, self.rng_)
            propagate_posterior(self.state_)
            self.diagnostics_.append(diag)
            out.append(decoded)
        self.last_labels_ = (np.concatenate(out) if out
                             else np.zeros(0, dtype=np.int64))
        return self.last_labels_

    def score(self, X, y):
        """Frame accuracy of ``predict(X)`` against ``y`` after label matching."""
        decoded = self.predict(X)
        return evaluate(decoded, y).frame_accuracy

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        """Checkpoint parameters and model state (rng state is not kept)."""
        self._check_fitted()
        params = dict(self.get_params())
        if not isinstance(params.get("random_state"), (int, type(None))):
            params["random_state"] = None
        header = json.dumps(params, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_EST_MAGIC + struct.pack("<I", len(header)) + header)
            fh.write(self.state_.to_bytes())

    @classmethod
    def load(cls, path) -> "OnlineHdpHmm":
        with open(path, "rb") as fh:
            blob = fh.read()
        base = len(_EST_MAGIC) + 4
        if len(blob) < base or blob[: len(_EST_MAGIC)] != _EST_MAGIC:
            raise SnapshotError("not an estimator checkpoint (bad magic header)")
        (header_len,) = struct.unpack_from("<I", blob, len(_EST_MAGIC))
        if len(blob) < base + header_len:
            raise SnapshotError("truncated estimator checkpoint")
        params = json.loads(blob[base : base + header_len].decode())
        est = cls(**params)
        est.state_ = ModelState.from_bytes(blob[base + header_len :])
        est.rng_ = as_generator(params.get("random_state"))
        est.plan_ = est._plan()
        est.diagnostics_ = []
        est.bootstrap_states_ = est.state_.last_batch_states.copy()
        return est
