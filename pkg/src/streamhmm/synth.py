"""Synthetic univariate regimes with ground truth.

All four generators share one core so the degenerate cases collapse exactly:
zero drift makes the shifting generator reproduce the stationary one bit for
bit under the same seed, and likewise combined -> new-class.  Drift never
touches the random stream (it only shifts the emission means), and the
emission noise is drawn in a single vectorized call after the state path is
fixed.
"""

from dataclasses import dataclass, field

import numpy as np

from .distributions import dirichlet_rows
from .errors import InputError, ParameterError
from .state import LabeledSequence
from .validation import as_generator


@dataclass
class SynthConfig:
    """Knobs for the synthetic generators.

    ``means`` fixes the base state count and locations; ``trans_conc`` is the
    symmetric Dirichlet concentration the transition rows are drawn from.
    ``drift`` is the per-frame mean shift used by the shifting/combined
    regimes; ``new_mean``/``onset`` describe the extra class for the
    new-class/combined regimes (``onset=None`` picks a random segment
    boundary in the middle third of the sequence).
    """

    means: tuple = (100.0, 200.0, 300.0, 400.0, 500.0)
    sigma: float = 1.0
    trans_conc: float = 3.0
    n_frames: int = 100
    drift: float = 0.5
    new_mean: float = 600.0
    onset: int | None = None
    seed: int | None = None

    def __post_init__(self):
        self.means = tuple(float(m) for m in np.atleast_1d(np.asarray(self.means, dtype=np.float64)))
        if not self.means or not all(np.isfinite(self.means)):
            raise ParameterError("means must be a nonempty finite vector")
        self.sigma = float(self.sigma)
        self.trans_conc = float(self.trans_conc)
        self.n_frames = int(self.n_frames)
        self.drift = float(self.drift)
        self.new_mean = float(self.new_mean)
        if self.sigma <= 0:
            raise ParameterError("sigma must be > 0")
        if self.trans_conc <= 0:
            raise ParameterError("trans_conc must be > 0")
        if self.n_frames < 1:
            raise ParameterError("n_frames must be >= 1")
        if self.drift < 0:
            raise ParameterError("drift must be >= 0")
        if self.onset is not None:
            self.onset = int(self.onset)
            if not 0 <= self.onset < self.n_frames:
                raise ParameterError("onset must lie in [0, n_frames)")

    @property
    def n_base_states(self) -> int:
        return len(self.means)


@dataclass
class SynthDraw:
    """A generated sequence together with what produced it."""

    sequence: LabeledSequence
    base_matrix: np.ndarray
    full_matrix: np.ndarray | None = None
    onset: int | None = None
    frame_means: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _simulate_chain(matrix: np.ndarray, z0: int, steps: np.ndarray) -> np.ndarray:
    cum = np.cumsum(matrix, axis=1)
    K = matrix.shape[0]
    z = np.empty(len(steps) + 1, dtype=np.int64)
    z[0] = z0
    for t, u in enumerate(steps, start=1):
        z[t] = min(int(np.searchsorted(cum[z[t - 1]], u, side="right")), K - 1)
    return z


def _pick_onset(cfg: SynthConfig, z: np.ndarray, rng: np.random.Generator) -> int:
    if cfg.onset is not None:
        return cfg.onset
    T = cfg.n_frames
    lo, hi = T // 3, (2 * T) // 3
    boundaries = np.flatnonzero(z[1:] != z[:-1]) + 1
    candidates = boundaries[(boundaries >= lo) & (boundaries < hi)]
    if candidates.size == 0:
        return T // 2
    return int(candidates[rng.integers(candidates.size)])


def simulate(cfg: SynthConfig, rng=None, *, drift: float = 0.0,
             new_class: bool = False) -> SynthDraw:
    """Core generator behind the four regime wrappers.

    Draws the transition matrices, simulates the hidden chain (forcing it
    into the new state at the onset frame when ``new_class`` is set, so the
    class is guaranteed to appear), and finally draws all emission noise in
    one call: ``y_t ~ N(mu_{z_t} + drift * t, sigma^2)``.
    """
    rng = as_generator(cfg.seed if rng is None else rng)
    K, T = cfg.n_base_states, cfg.n_frames
    base = dirichlet_rows(np.full((K, K), cfg.trans_conc), rng)
    full = None
    onset = None
    if new_class:
        full = dirichlet_rows(np.full((K + 1, K + 1), cfg.trans_conc), rng)
    z0 = int(rng.integers(K))
    z = _simulate_chain(base, z0, rng.random(T - 1))
    if new_class:
        onset = _pick_onset(cfg, z, rng)
        # Re-enter at the forced new state, then continue under the full matrix.
        tail = _simulate_chain(full, K, rng.random(T - 1 - onset))
        z = np.concatenate([z[:onset], tail])
    mu = np.concatenate([np.asarray(cfg.means), [cfg.new_mean]])
    frame_means = mu[z] + drift * np.arange(T, dtype=np.float64)
    Y = rng.normal(frame_means, cfg.sigma)[:, None]
    return SynthDraw(LabeledSequence(Y, z), base, full, onset, frame_means)


def gen_stationary(cfg: SynthConfig, rng=None) -> LabeledSequence:
    """Fixed means, row-wise Dirichlet transitions, Gaussian noise."""
    return simulate(cfg, rng).sequence


def gen_shifting(cfg: SynthConfig, rng=None) -> LabeledSequence:
    """All class means drift by ``cfg.drift`` per frame, from frame 0."""
    return simulate(cfg, rng, drift=cfg.drift).sequence


def gen_newclass(cfg: SynthConfig, rng=None) -> LabeledSequence:
    """A previously unseen class (mean ``cfg.new_mean``) appears mid-sequence."""
    return simulate(cfg, rng, new_class=True).sequence


def gen_combined(cfg: SynthConfig, rng=None) -> LabeledSequence:
    """Drifting means plus the unseen class: the hardest regime."""
    return simulate(cfg, rng, drift=cfg.drift, new_class=True).sequence
