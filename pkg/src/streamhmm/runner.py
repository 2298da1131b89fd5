"""Online pipeline: bootstrap once, then per batch sample / decode / propagate.

Each batch is processed with a fixed sweep budget; the majority vote over the
post-burn-in assignments is the decoded labeling of record.  Propagation then
folds the batch posterior into the priors (NIW posteriors become NIW priors,
Dirichlet posterior concentrations become the new baselines), installs the
post-burn-in mean learning rates for the next batch, and drops the raw
frames.  Memory is bounded by the truncation level and the batch size, never
by the stream length.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .io import TraceWriter, stream_features_csv
from .rates import RateConfig
from .sampler import gibbs_sweep
from .state import HdpHyperparams, ModelState, init_from_bootstrap
from .validation import as_feature_matrix, as_generator


@dataclass
class BatchPlan:
    """Streaming and sampling budget: batch size, sweeps, burn-in, bootstrap."""

    batch_size: int | None = 16
    sweeps: int = 1000
    burn_in: int = 500
    bootstrap_sweeps: int = 200

    def __post_init__(self):
        if self.batch_size is not None and int(self.batch_size) < 1:
            raise InputError("batch_size must be >= 1 (or None for a single batch)")
        if self.batch_size is not None:
            self.batch_size = int(self.batch_size)
        self.sweeps = int(self.sweeps)
        self.burn_in = int(self.burn_in)
        self.bootstrap_sweeps = int(self.bootstrap_sweeps)
        if self.sweeps < 1:
            raise InputError("sweeps must be >= 1")
        if not 0 <= self.burn_in < self.sweeps:
            raise InputError("burn_in must satisfy 0 <= burn_in < sweeps")
        if self.bootstrap_sweeps < 1:
            raise InputError("bootstrap_sweeps must be >= 1")


@dataclass
class BatchDiagnostics:
    """Per-batch record kept after the raw frames are dropped.

    ``index`` counts absorbed batches, with the supervised bootstrap as
    batch 0; the first streamed batch is therefore index 1.
    """

    index: int
    n_frames: int
    logliks: np.ndarray
    decoded_states: np.ndarray
    applied_rates: dict
    rate_draws: dict | None = None


@dataclass
class RunResult:
    """Decoded labels for the whole stream plus per-batch diagnostics."""

    labels: np.ndarray
    diagnostics: list[BatchDiagnostics] = field(default_factory=list)
    state: ModelState | None = None
    bootstrap_states: np.ndarray | None = None

    def new_states(self) -> list[tuple[int, int]]:
        """(state, first batch index) for states outside the bootstrap set."""
        seen = set() if self.bootstrap_states is None else set(self.bootstrap_states.tolist())
        out = []
        for diag in self.diagnostics:
            for k in diag.decoded_states.tolist():
                if k not in seen:
                    out.append((k, diag.index))
                    seen.add(k)
        return out


def iter_batches(stream, batch_size: int | None):
    """Chunk a frame source into (B, d) arrays.

    The source may be an in-memory array, an iterable of frame vectors, or a
    path to a feature CSV; file rows are consumed one at a time so only the
    current batch is ever resident.
    """
    if isinstance(stream, (str, Path)):
        stream = stream_features_csv(stream)
    if isinstance(stream, np.ndarray):
        stream = as_feature_matrix(stream, "stream")
        if batch_size is None:
            if len(stream):
                yield stream
            return
        for start in range(0, len(stream), batch_size):
            yield stream[start : start + batch_size]
        return
    buf = []
    width = None
    for frame in stream:
        vec = np.atleast_1d(np.asarray(frame, dtype=np.float64))
        if width is None:
            width = vec.shape[0]
        elif vec.shape[0] != width:
            raise InputError(
                f"stream frame width changed mid-stream: {width} then {vec.shape[0]}")
        buf.append(vec)
        if batch_size is not None and len(buf) == batch_size:
            yield as_feature_matrix(np.vstack(buf), "stream")
            buf = []
    if buf:
        yield as_feature_matrix(np.vstack(buf), "stream")


def propagate_posterior(state: ModelState) -> None:
    """Fold the finished batch into the priors and reset the batch counts.

    Emission NIW posteriors become the next priors (never-observed states
    stay on the base measure by construction), the Dirichlet posterior
    concentrations become the new baselines with counts zeroed, and the
    post-burn-in mean rates become the applied rates of the next batch.
    """
    em, trans = state.emissions, state.transitions
    em.prior_mean = em.post_mean.copy()
    em.prior_strength = em.post_strength.copy()
    em.prior_scale = em.post_scale.copy()
    em.prior_dof = em.post_dof.copy()
    trans.beta_conc = trans.beta_conc + trans.adjusted_tables().sum(axis=0)
    trans.pi_conc = trans.pi_conc + trans.n
    trans.n = np.zeros_like(trans.n)
    trans.m = np.zeros_like(trans.m)
    trans.override = np.zeros_like(trans.override)
    state.rates.finish_batch()
    state.rates.assert_finite()
    state.n_batches_absorbed += 1


def process_batch(state: ModelState, Y, plan: BatchPlan, rng: np.random.Generator,
                  trace: TraceWriter | None = None) -> tuple[np.ndarray, BatchDiagnostics]:
    """Run the sweep budget on one batch and decode it by majority vote.

    Mutates ``state`` in place; call :func:`propagate_posterior` afterwards
    to fold the batch into the priors.  Ties in the vote go to the lower
    state index so decoding is deterministic.
    """
    Y = as_feature_matrix(Y, "batch")
    T = len(Y)
    if T and Y.shape[1] != state.dim:
        raise InputError(
            f"batch feature width {Y.shape[1]} does not match the model dimension {state.dim}")
    index = state.n_batches_absorbed
    if T == 0:
        diag = BatchDiagnostics(index, 0, np.zeros(0), np.zeros(0, dtype=np.int64),
                                _applied_rates(state))
        return np.zeros(0, dtype=np.int64), diag
    L = state.hyper.n_states
    adaptive = state.rates.adapt
    votes = np.zeros((T, L), dtype=np.int64)
    logliks = np.empty(plan.sweeps)
    draws = {"tau_mu": [], "tau_sigma": [], "tau_beta": [], "tau_pi": []} if adaptive else None
    applied = _applied_rates(state)
    for sweep in range(plan.sweeps):
        z, info = gibbs_sweep(state, Y, rng)
        logliks[sweep] = info["loglik"]
        if sweep >= plan.burn_in:
            votes[np.arange(T), z] += 1
            if adaptive:
                state.rates.record_draws(info["tau_mu"], info["tau_sigma"],
                                         info["tau_beta"], info["tau_pi"])
        if adaptive:
            for key in draws:
                draws[key].append(info[key])
        if trace is not None:
            trace.write(
                index, sweep, info["loglik"],
                info.get("tau_mu", state.rates.tau_mu),
                info.get("tau_sigma", state.rates.tau_sigma),
                info.get("tau_beta", state.rates.tau_beta),
                info.get("tau_pi", state.rates.tau_pi),
                state.rates.accept_beta, state.rates.accept_pi,
            )
    decoded = votes.argmax(axis=1).astype(np.int64)
    state.emissions.occupancy += np.bincount(decoded, minlength=L).astype(np.int64)
    state.last_batch_states = np.unique(decoded)
    diag = BatchDiagnostics(
        index=index, n_frames=T, logliks=logliks,
        decoded_states=state.last_batch_states.copy(),
        applied_rates=applied,
        rate_draws={k: np.asarray(v) for k, v in draws.items()} if draws else None,
    )
    return decoded, diag


def _applied_rates(state) -> dict:
    r = state.rates
    return {"tau_mu": r.tau_mu, "tau_sigma": r.tau_sigma,
            "tau_beta": r.tau_beta, "tau_pi": r.tau_pi}


def run_online(bootstrap_sequences, stream, hyper: HdpHyperparams | None = None,
               plan: BatchPlan | None = None, rate_config: RateConfig | None = None,
               rng=None, trace_path=None) -> RunResult:
    """Bootstrap on labeled sequences, then decode a stream batch by batch.

    ``stream`` may be an array, an iterable of frames, or a feature-CSV path;
    it is consumed exactly once.  Returns the concatenated decoded labels,
    per-batch diagnostics, and the final model state.
    """
    hyper = hyper if hyper is not None else HdpHyperparams()
    plan = plan if plan is not None else BatchPlan()
    rng = as_generator(rng)
    state = init_from_bootstrap(bootstrap_sequences, hyper, plan.bootstrap_sweeps,
                                rng, rate_config)
    bootstrap_states = state.last_batch_states.copy()
    propagate_posterior(state)
    trace = TraceWriter(trace_path) if trace_path is not None else None
    labels = []
    diagnostics = []
    try:
        for batch in iter_batches(stream, plan.batch_size):
            decoded, diag = process_batch(state, batch, plan, rng, trace)
            propagate_posterior(state)
            labels.append(decoded)
            diagnostics.append(diag)
    finally:
        if trace is not None:
            trace.close()
    all_labels = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
    return RunResult(all_labels, diagnostics, state, bootstrap_states)
