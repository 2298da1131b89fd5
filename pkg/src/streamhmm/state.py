"""Model state: hyperparameters, emission/transition blocks, bootstrap, snapshots.

The state is truncation-bounded: every array is sized by the fixed number of
model states, so the memory footprint does not grow with the number of
batches processed.  States are never pruned or relabeled; a state that loses
all its data simply keeps drifting back toward its prior.
"""

import io as _io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .distributions import NiwParams, stick_breaking
from .errors import InputError, ParameterError, SnapshotError
from .rates import LearningRates, RateConfig
from .validation import as_feature_matrix, as_label_vector, check_same_length

SNAPSHOT_MAGIC = b"SHMMSNAP"
SNAPSHOT_VERSION = 1


@dataclass
class HdpHyperparams:
    """Concentrations of the hierarchical prior and the truncation level.

    ``gamma`` governs the top-level state weights, ``alpha`` the per-row
    transition concentration, ``kappa`` the extra self-transition mass, and
    ``n_states`` bounds the number of representable states.
    """

    gamma: float = 1.0
    alpha: float = 2.0
    kappa: float = 2.0
    n_states: int = 20

    def __post_init__(self):
        self.gamma = float(self.gamma)
        self.alpha = float(self.alpha)
        self.kappa = float(self.kappa)
        self.n_states = int(self.n_states)
        if self.gamma <= 0 or self.alpha <= 0:
            raise ParameterError("gamma and alpha must be > 0")
        if self.kappa < 0:
            raise ParameterError("kappa must be >= 0")
        if self.n_states < 1:
            raise ParameterError("n_states must be >= 1")

    @property
    def rho(self) -> float:
        """Fraction of a row's extra mass owed to stickiness."""
        return self.kappa / (self.alpha + self.kappa)


@dataclass
class LabeledSequence:
    """A feature sequence with optional per-frame integer labels."""

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = as_feature_matrix(self.features, "features")
        if self.labels is not None:
            self.labels = as_label_vector(self.labels, name="labels")
            check_same_length(self.features, self.labels)

    def __len__(self) -> int:
        return len(self.features)


class EmissionState:
    """Per-state NIW priors, their latest posteriors, and the current draws."""

    _ARRAYS = (
        "prior_mean", "prior_strength", "prior_scale", "prior_dof",
        "post_mean", "post_strength", "post_scale", "post_dof",
        "mean", "cov", "occupancy",
    )

    def __init__(self, n_states: int, dim: int):
        L, d = n_states, dim
        self.prior_mean = np.zeros((L, d))
        self.prior_strength = np.ones(L)
        self.prior_scale = np.tile(np.eye(d), (L, 1, 1))
        self.prior_dof = np.full(L, d + 2.0)
        self.post_mean = self.prior_mean.copy()
        self.post_strength = self.prior_strength.copy()
        self.post_scale = self.prior_scale.copy()
        self.post_dof = self.prior_dof.copy()
        self.mean = np.zeros((L, d))
        self.cov = np.tile(np.eye(d), (L, 1, 1))
        self.occupancy = np.zeros(L, dtype=np.int64)
        # Per-sweep batch sufficient statistics (count and sample mean per
        # state).  Transient: overwritten by every emission refresh, excluded
        # from _ARRAYS so snapshots ignore them.
        self.batch_n = np.zeros(L, dtype=np.int64)
        self.batch_mean = np.zeros((L, d))

    @classmethod
    def from_base_prior(cls, base: NiwParams, n_states: int) -> "EmissionState":
        em = cls(n_states, base.dim)
        em.prior_mean[:] = base.mean
        em.prior_strength[:] = base.strength
        em.prior_scale[:] = base.scale
        em.prior_dof[:] = base.dof
        em.post_mean[:] = base.mean
        em.post_strength[:] = base.strength
        em.post_scale[:] = base.scale
        em.post_dof[:] = base.dof
        em.mean[:] = base.mean
        em.cov[:] = base.scale / max(base.dof - base.dim - 1.0, 1.0)
        return em

    @property
    def n_states(self) -> int:
        return self.prior_mean.shape[0]

    @property
    def dim(self) -> int:
        return self.prior_mean.shape[1]

    def prior_of(self, k: int) -> NiwParams:
        return NiwParams(
            self.prior_mean[k].copy(), float(self.prior_strength[k]),
            self.prior_scale[k].copy(), float(self.prior_dof[k]),
        )

    def copy(self) -> "EmissionState":
        out = EmissionState(self.n_states, self.dim)
        for name in self._ARRAYS:
            setattr(out, name, getattr(self, name).copy())
        return out


class TransitionState:
    """Global weights, transition rows, their baselines, and batch counts.

    ``beta_conc`` and ``pi_conc`` are the accumulated Dirichlet baselines
    (prior mass plus every absorbed batch); ``n``/``m``/``override`` hold the
    current batch's transition counts, table counts, and sticky overrides.
    """

    _ARRAYS = ("beta", "pi", "beta_conc", "pi_conc", "n", "m", "override")

    def __init__(self, n_states: int):
        L = n_states
        self.beta = np.full(L, 1.0 / L)
        self.pi = np.full((L, L), 1.0 / L)
        self.beta_conc = np.zeros(L)
        self.pi_conc = np.zeros((L, L))
        self.n = np.zeros((L, L), dtype=np.int64)
        self.m = np.zeros((L, L), dtype=np.int64)
        self.override = np.zeros(L, dtype=np.int64)

    @property
    def n_states(self) -> int:
        return self.beta.shape[0]

    def adjusted_tables(self) -> np.ndarray:
        """Table counts with the sticky overrides removed from the diagonal."""
        m_bar = self.m.astype(np.float64)
        np.fill_diagonal(m_bar, np.diag(self.m) - self.override)
        return m_bar

    def copy(self) -> "TransitionState":
        out = TransitionState(self.n_states)
        for name in self._ARRAYS:
            setattr(out, name, getattr(self, name).copy())
        return out


class ModelState:
    """Everything the sampler needs, bounded in size by the truncation level."""

    def __init__(self, hyper: HdpHyperparams, emissions: EmissionState,
                 transitions: TransitionState, rates: LearningRates):
        if emissions.n_states != hyper.n_states or transitions.n_states != hyper.n_states:
            raise ParameterError("emission/transition blocks disagree with n_states")
        self.hyper = hyper
        self.emissions = emissions
        self.transitions = transitions
        self.rates = rates
        self.n_batches_absorbed = 0
        self.last_batch_states = np.zeros(0, dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.emissions.dim

    def active_states(self) -> np.ndarray:
        """States used by the decoded assignment of the most recent batch."""
        return self.last_batch_states.copy()

    def ever_active(self) -> np.ndarray:
        """States that have ever held decoded frames (occupancy > 0)."""
        return np.flatnonzero(self.emissions.occupancy > 0)

    @property
    def nbytes(self) -> int:
        total = self.last_batch_states.nbytes
        for name in EmissionState._ARRAYS:
            total += getattr(self.emissions, name).nbytes
        for name in TransitionState._ARRAYS:
            total += getattr(self.transitions, name).nbytes
        return total

    def copy(self) -> "ModelState":
        out = ModelState(self.hyper, self.emissions.copy(), self.transitions.copy(),
                         self.rates.copy())
        out.n_batches_absorbed = self.n_batches_absorbed
        out.last_batch_states = self.last_batch_states.copy()
        return out

    # -- snapshot ----------------------------------------------------------

    def _array_items(self):
        for name in EmissionState._ARRAYS:
            yield f"emissions.{name}", getattr(self.emissions, name)
        for name in TransitionState._ARRAYS:
            yield f"transitions.{name}", getattr(self.transitions, name)
        yield "last_batch_states", self.last_batch_states

    def to_bytes(self) -> bytes:
        scalars = {
            "gamma": self.hyper.gamma,
            "alpha": self.hyper.alpha,
            "kappa": self.hyper.kappa,
            "n_states": self.hyper.n_states,
            "dim": self.dim,
            "n_batches_absorbed": self.n_batches_absorbed,
            "rates": self.rates.scalars(),
        }
        arrays = []
        payload = _io.BytesIO()
        for name, arr in self._array_items():
            arr = np.ascontiguousarray(arr)
            arrays.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
            payload.write(arr.tobytes())
        header = json.dumps({"scalars": scalars, "arrays": arrays}, sort_keys=True).encode()
        return (
            SNAPSHOT_MAGIC
            + struct.pack("<II", SNAPSHOT_VERSION, len(header))
            + header
            + payload.getvalue()
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelState":
        base = len(SNAPSHOT_MAGIC) + 8
        if len(blob) < base or blob[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
            raise SnapshotError("not a model snapshot (bad magic header)")
        version, header_len = struct.unpack_from("<II", blob, len(SNAPSHOT_MAGIC))
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        if len(blob) < base + header_len:
            raise SnapshotError("truncated snapshot header")
        try:
            header = json.loads(blob[base : base + header_len].decode())
            scalars = header["scalars"]
            array_meta = header["arrays"]
        except (ValueError, KeyError) as exc:
            raise SnapshotError(f"corrupt snapshot header: {exc}") from None

        hyper = HdpHyperparams(
            gamma=scalars["gamma"], alpha=scalars["alpha"],
            kappa=scalars["kappa"], n_states=scalars["n_states"],
        )
        emissions = EmissionState(hyper.n_states, int(scalars["dim"]))
        transitions = TransitionState(hyper.n_states)
        rates = LearningRates.from_scalars(scalars["rates"])
        state = cls(hyper, emissions, transitions, rates)
        state.n_batches_absorbed = int(scalars["n_batches_absorbed"])

        offset = base + header_len
        for meta in array_meta:
            dtype = np.dtype(meta["dtype"])
            shape = tuple(meta["shape"])
            nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
            if len(blob) < offset + nbytes:
                raise SnapshotError(f"truncated snapshot payload at {meta['name']}")
            arr = np.frombuffer(blob[offset : offset + nbytes], dtype=dtype).reshape(shape).copy()
            offset += nbytes
            owner, _, attr = meta["name"].partition(".")
            if attr:
                target = getattr(state, owner)
                if not hasattr(target, attr) or getattr(target, attr).shape != shape:
                    raise SnapshotError(f"unexpected snapshot array {meta['name']}")
                setattr(target, attr, arr)
            else:
                setattr(state, owner, arr)
        if offset != len(blob):
            raise SnapshotError("trailing bytes after snapshot payload")
        return state

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelState":
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except OSError as exc:
            raise SnapshotError(f"cannot read snapshot: {exc}") from None
        return cls.from_bytes(blob)


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------

def count_transitions(labels: np.ndarray, n_states: int) -> np.ndarray:
    """Within-sequence transition counts; the first frame contributes none."""
    n = np.zeros((n_states, n_states), dtype=np.int64)
    if len(labels) > 1:
        np.add.at(n, (labels[:-1], labels[1:]), 1)
    return n


def _ridged(cov: np.ndarray, d: int) -> np.ndarray:
    # Guard against degenerate scatter (constant columns, singleton classes).
    ridge = 1e-6 * max(float(np.trace(cov)) / d, 1e-12)
    return cov + ridge * np.eye(d)


def _base_prior_from_data(pooled: np.ndarray) -> NiwParams:
    """Data-driven base measure: pooled mean, covariance-matched IW scale.

    The IW scale is 0.75 times the total empirical covariance times
    (dof - d - 1) with dof = d + 2, i.e. the prior mean covariance is three
    quarters of the pooled spread; mean strength 1 keeps locations weakly
    tied.  The width is deliberate: it is what lets a never-observed state
    reach data far outside every known class.
    """
    d = pooled.shape[1]
    mu0 = pooled.mean(axis=0)
    if len(pooled) > 1:
        emp_cov = np.atleast_2d(np.cov(pooled, rowvar=False))
    else:
        emp_cov = np.eye(d)
    dof = d + 2.0
    scale = 0.75 * _ridged(emp_cov, d) * (dof - d - 1.0)
    return NiwParams(mu0, 1.0, scale, dof)


def _class_priors_from_data(pooled: np.ndarray, labels: np.ndarray):
    """Per-class priors for the bootstrap-labeled classes.

    Same weak shape as the base measure, but each class is located at its
    own empirical mean and the shared scale matrix tracks the pooled
    within-class covariance.  Labeled classes have their own statistics to
    speak for them; handing them the base measure's pooled location and
    between-class spread would inflate every posterior scale (through the
    NIW mean-deviation term and the scatter) by the squared class
    separation, and with it the covariance learning rate.

    Returns ``(classes, means, scale, dof)`` where ``means[i]`` belongs to
    ``classes[i]`` and ``scale``/``dof`` are shared.
    """
    d = pooled.shape[1]
    scatter = np.zeros((d, d))
    classes = np.unique(labels)
    means = np.empty((classes.size, d))
    for i, k in enumerate(classes):
        Yk = pooled[labels == k]
        means[i] = Yk.mean(axis=0)
        dev = Yk - means[i]
        scatter += dev.T @ dev
    within = scatter / max(len(pooled) - classes.size, 1)
    dof = d + 2.0
    scale = 0.75 * _ridged(within, d) * (dof - d - 1.0)
    return classes, means, scale, dof


def init_from_bootstrap(sequences, hyper: HdpHyperparams, sweeps: int,
                        rng: np.random.Generator,
                        rate_config: RateConfig | None = None) -> ModelState:
    """Supervised initialization from fully labeled sequences.

    Label assignments stay clamped to the ground truth; the sampler passes
    only over the auxiliary table counts, the global weights, the transition
    rows, and the emission parameters.  The returned state still carries the
    bootstrap counts; absorbing them into the Dirichlet baselines is the
    runner's first propagation step.
    """
    from .sampler import (
        sample_aux_counts_raw,
        sample_beta,
        sample_emissions_plain,
        sample_pi_rows,
    )

    if not sequences:
        raise InputError("bootstrap needs at least one labeled sequence")
    seqs = [s if isinstance(s, LabeledSequence) else LabeledSequence(*s) for s in sequences]
    if any(s.labels is None for s in seqs):
        raise InputError("bootstrap sequences must be fully labeled")
    if any(len(s) == 0 for s in seqs):
        raise InputError("bootstrap sequences must be nonempty")
    sweeps = int(sweeps)
    if sweeps < 1:
        raise InputError("bootstrap needs at least one sweep")

    L = hyper.n_states
    d = seqs[0].features.shape[1]
    for s in seqs:
        if s.features.shape[1] != d:
            raise InputError("bootstrap sequences disagree on feature dimension")
        as_label_vector(s.labels, n_states=L, name="labels")

    pooled = np.concatenate([s.features for s in seqs], axis=0)
    all_labels = np.concatenate([s.labels for s in seqs])
    base = _base_prior_from_data(pooled)

    emissions = EmissionState.from_base_prior(base, L)
    # Labeled classes get their own location and a within-class prior
    # scale; unused states keep the wide base measure so far-away new
    # classes stay reachable.
    seen, cls_means, cls_scale, cls_dof = _class_priors_from_data(pooled, all_labels)
    emissions.prior_mean[seen] = cls_means
    emissions.post_mean[seen] = cls_means
    emissions.mean[seen] = cls_means
    emissions.prior_scale[seen] = cls_scale
    emissions.post_scale[seen] = cls_scale
    emissions.cov[seen] = cls_scale / max(cls_dof - d - 1.0, 1.0)
    transitions = TransitionState(L)
    for s in seqs:
        transitions.n += count_transitions(s.labels, L)
    emissions.occupancy = np.bincount(all_labels, minlength=L).astype(np.int64)

    state = ModelState(hyper, emissions, transitions,
                       LearningRates(rate_config if rate_config is not None else RateConfig()))
    state.last_batch_states = np.unique(all_labels)

    transitions.beta_conc = np.full(L, hyper.gamma / L)
    transitions.beta = stick_breaking(hyper.gamma, L, rng)

    # During the bootstrap the hierarchical coupling is live: the row
    # baseline is rebuilt from the current global weights every iteration.
    eye = np.eye(L)
    for _ in range(sweeps):
        sample_aux_counts_raw(state, rng)
        sample_beta(state, rng, tau=None)
        transitions.pi_conc = hyper.alpha * transitions.beta[None, :] + hyper.kappa * eye
        sample_pi_rows(state, rng, tau=None)
        sample_emissions_plain(state, pooled, all_labels, rng)

    # The final baseline freezes here; the bootstrap counts stay in n/m
    # until the runner's first propagation absorbs them.
    return state
