"""Per-parameter learning rates.

Four scalar rates control how strongly the priors carried over from previous
batches resist the current batch: one for emission means, one for emission
covariances, one for the global state weights, and one shared by every
transition row.  A rate of 1 leaves the prior untouched, a rate below 1
discounts it (the data wins), a rate above 1 sharpens it (memory wins).

Scaling is exponentiation of the prior density in natural-parameter space,
which lands on closed forms:

* Dirichlet: ``a -> tau * (a - 1) + 1`` (floored to keep concentrations positive),
* inverse-Wishart: ``scale -> tau * scale``, ``dof -> tau * (dof + d + 1) - d - 1``
  (clamped to stay a proper IW),
* normal mean strength: ``strength -> tau * strength``.

The IW mode and the Dirichlet mode are exactly invariant under these maps;
only the spread around the mode changes.

The applied rates stay fixed for a whole batch.  Fresh values are resampled
every sweep (conjugate draws for the mean/covariance rates, an
independence Metropolis-Hastings step for the two Dirichlet rates), and the
post-burn-in mean becomes the applied rate of the *next* batch.
"""

from dataclasses import dataclass

import numpy as np

from .distributions import (
    GammaDist,
    InvGamma,
    dirichlet_rows_log_density,
    sample_gamma,
    sample_invgamma,
)
from .errors import ParameterError

# Scaled IW dof is clamped to d - 1 + this margin to stay a proper distribution.
DOF_FLOOR_MARGIN = 1e-3
# Scaled Dirichlet concentrations are floored here (tau < 1 can push them negative).
CONC_FLOOR = 1e-6


@dataclass
class RateConfig:
    """Static configuration for the rate machinery.

    ``adapt=False`` pins every rate at 1 and skips the samplers entirely,
    which reduces the pipeline to a plain sticky HDP-HMM.  ``scale_stat``
    picks the scalar summary of a posterior IW scale matrix used by the
    covariance-rate sampler: its largest eigenvalue (default) or its
    determinant.
    """

    adapt: bool = True
    scale_stat: str = "eigen"
    prior_shape: float = 2.0
    prior_rate: float = 2.0

    def __post_init__(self):
        if self.scale_stat not in ("eigen", "det"):
            raise ParameterError(f"scale_stat must be 'eigen' or 'det', got {self.scale_stat!r}")
        if self.prior_shape <= 0 or self.prior_rate <= 0:
            raise ParameterError("rate prior shape and rate must be > 0")

    def prior(self) -> GammaDist:
        return GammaDist(self.prior_shape, self.prior_rate)


class LearningRates:
    """Applied rates plus the within-batch resampling state."""

    _SCALAR_FIELDS = (
        "tau_mu", "tau_sigma", "tau_beta", "tau_pi",
        "chain_tau_beta", "chain_tau_pi",
        "accept_beta", "propose_beta", "accept_pi", "propose_pi",
        "dof_clamped",
    )

    def __init__(self, config: RateConfig | None = None):
        self.config = config if config is not None else RateConfig()
        self.tau_mu = 1.0
        self.tau_sigma = 1.0
        self.tau_beta = 1.0
        self.tau_pi = 1.0
        # MH chain state for the two Dirichlet rates, advanced once per sweep.
        self.chain_tau_beta = 1.0
        self.chain_tau_pi = 1.0
        self.accept_beta = 0
        self.propose_beta = 0
        self.accept_pi = 0
        self.propose_pi = 0
        self.dof_clamped = 0
        self._draws: dict[str, list[float]] = {"mu": [], "sigma": [], "beta": [], "pi": []}

    @property
    def adapt(self) -> bool:
        return self.config.adapt

    def record_draws(self, tau_mu, tau_sigma, tau_beta, tau_pi):
        """Accumulate one post-burn-in set of sampled rates."""
        self._draws["mu"].append(tau_mu)
        self._draws["sigma"].append(tau_sigma)
        self._draws["beta"].append(tau_beta)
        self._draws["pi"].append(tau_pi)

    def finish_batch(self):
        """Install post-burn-in mean rates for the next batch and reset chains."""
        if self.adapt and self._draws["mu"]:
            self.tau_mu = float(np.mean(self._draws["mu"]))
            self.tau_sigma = float(np.mean(self._draws["sigma"]))
            self.tau_beta = float(np.mean(self._draws["beta"]))
            self.tau_pi = float(np.mean(self._draws["pi"]))
        self.chain_tau_beta = self.tau_beta
        self.chain_tau_pi = self.tau_pi
        for v in self._draws.values():
            v.clear()

    def mh_step_beta(self, conc, x, rng) -> float:
        new, accepted = sample_tau_dirichlet(self.chain_tau_beta, [conc], [x], self.config.prior(), rng)
        self.propose_beta += 1
        self.accept_beta += int(accepted)
        self.chain_tau_beta = new
        return new

    def mh_step_pi(self, conc_rows, x_rows, rng) -> float:
        new, accepted = sample_tau_dirichlet(self.chain_tau_pi, [conc_rows], [x_rows], self.config.prior(), rng)
        self.propose_pi += 1
        self.accept_pi += int(accepted)
        self.chain_tau_pi = new
        return new

    def assert_finite(self):
        taus = (self.tau_mu, self.tau_sigma, self.tau_beta, self.tau_pi)
        if not all(np.isfinite(t) and t > 0 for t in taus):
            raise ParameterError(f"learning rates must stay finite and positive, got {taus}")

    def scalars(self) -> dict:
        out = {name: getattr(self, name) for name in self._SCALAR_FIELDS}
        out.update(
            adapt=self.config.adapt,
            scale_stat=self.config.scale_stat,
            prior_shape=self.config.prior_shape,
            prior_rate=self.config.prior_rate,
        )
        return out

    @classmethod
    def from_scalars(cls, data: dict) -> "LearningRates":
        config = RateConfig(
            adapt=bool(data["adapt"]),
            scale_stat=str(data["scale_stat"]),
            prior_shape=float(data["prior_shape"]),
            prior_rate=float(data["prior_rate"]),
        )
        rates = cls(config)
        for name in cls._SCALAR_FIELDS:
            setattr(rates, name, type(getattr(rates, name))(data[name]))
        return rates

    def copy(self) -> "LearningRates":
        return LearningRates.from_scalars(self.scalars())


# ---------------------------------------------------------------------------
# prior scaling
# ---------------------------------------------------------------------------

def scale_dirichlet_conc(conc: np.ndarray, tau: float, floor: float = CONC_FLOOR) -> np.ndarray:
    """Exponentiate a Dirichlet by ``tau``: ``a -> tau * (a - 1) + 1``.

    ``tau == 1`` is an exact no-op (returns a copy) so that the pinned-rate
    code path reproduces the unscaled formulas bit for bit.
    """
    conc = np.asarray(conc, dtype=np.float64)
    if tau == 1.0:
        return conc.copy()
    return np.maximum(tau * (conc - 1.0) + 1.0, floor)


def scale_niw_arrays(strength, scale, dof, tau_mu, tau_sigma, dim):
    """Scale stacked NIW prior hyperparameters; the locations are untouched.

    Returns ``(strength', scale', dof', n_clamped)`` where ``n_clamped``
    counts entries whose scaled dof hit the properness floor ``d - 1``.
    """
    strength = np.asarray(strength, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    dof = np.asarray(dof, dtype=np.float64)
    if tau_mu == 1.0 and tau_sigma == 1.0:
        return strength.copy(), scale.copy(), dof.copy(), 0
    new_strength = tau_mu * strength
    new_scale = tau_sigma * scale
    new_dof = tau_sigma * (dof + dim + 1.0) - dim - 1.0
    floor = dim - 1.0 + DOF_FLOOR_MARGIN
    clamped = int(np.sum(new_dof < floor))
    if clamped:
        new_dof = np.maximum(new_dof, floor)
    return new_strength, new_scale, new_dof, clamped


def scale_niw_prior(prior, tau_mu: float, tau_sigma: float):
    """Scaled copy of a single :class:`~streamhmm.distributions.NiwParams`."""
    from .distributions import NiwParams

    strength, scale, dof, clamped = scale_niw_arrays(
        np.array([prior.strength]), prior.scale[None], np.array([prior.dof]),
        tau_mu, tau_sigma, prior.dim,
    )
    return NiwParams(prior.mean.copy(), float(strength[0]), scale[0], float(dof[0])), clamped


# ---------------------------------------------------------------------------
# rate posteriors
# ---------------------------------------------------------------------------

def _scale_summary(scales: np.ndarray, stat: str) -> np.ndarray:
    if stat == "det":
        return np.linalg.det(scales)
    if scales.shape[-1] == 1:
        return scales[:, 0, 0]
    return np.linalg.eigvalsh(scales)[:, -1]


def sample_tau_sigma(emissions, active: np.ndarray, config: RateConfig,
                     rng: np.random.Generator, current: float) -> float:
    """Covariance rate: inverse-gamma fit to the active states' IW posteriors.

    Shape pools the posterior dofs over the active states; scale is the
    dof-weighted mean of a scalar summary of each posterior scale matrix.
    With no active states the previous value is kept.
    """
    active = np.asarray(active)
    if active.size == 0:
        return current
    dofs = emissions.post_dof[active]
    stats = _scale_summary(emissions.post_scale[active], config.scale_stat)
    shape = float(dofs.sum()) / (2.0 * active.size)
    scale = float((stats * dofs).sum()) / (2.0 * float(dofs.sum()))
    return sample_invgamma(InvGamma(shape, scale), rng)


def tau_mu_posterior(sq_gaps: np.ndarray, weights: np.ndarray,
                     prior: GammaDist) -> GammaDist:
    """Conjugate gamma posterior for the mean rate.

    The pooled strength-scaled squared gap counts as half a
    pseudo-observation: shape gains 1/2, rate gains the dof-weighted mean
    gap over 2.
    """
    sq_gaps = np.asarray(sq_gaps, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    rate = prior.rate + float((sq_gaps * weights).sum()) / (2.0 * float(weights.sum()))
    return GammaDist(prior.shape + 0.5, rate)


def sample_tau_mu(emissions, active: np.ndarray, config: RateConfig,
                  rng: np.random.Generator, current: float) -> float:
    """Mean rate: conjugate gamma update from the batch-vs-memory gap.

    Each state that drew data this sweep contributes the Mahalanobis gap
    between the batch sample mean and the state's remembered prior location,
    scaled by the prior strength and weighted by posterior dof.  Using the
    raw batch mean rather than the sampled posterior mean matters: the
    posterior mean is already shrunk toward the prior location by the
    accumulated strength, so it barely moves even when the incoming data
    has.  The batch mean is the unshrunk evidence.

    A batch mean of n draws scatters with variance Sigma/n around the true
    mean even when nothing has moved, so that expected chance contribution
    (strength * dim / n) is subtracted from each gap before pooling.
    Without the subtraction the rate cannot tell observation noise from
    drift and melts the memory of noisy-but-stationary streams.  With the
    subtraction the stationary fixed point of the update sits at 1 under
    the default prior.  With no occupied state the previous value is kept.
    """
    active = np.asarray(active)
    active = active[emissions.batch_n[active] > 0]
    if active.size == 0:
        return current
    d = emissions.dim
    gaps = np.empty(active.size)
    for i, k in enumerate(active):
        dev = emissions.batch_mean[k] - emissions.prior_mean[k]
        sol = np.linalg.solve(emissions.cov[k], dev)
        strength = float(emissions.prior_strength[k])
        chance = strength * d / float(emissions.batch_n[k])
        gaps[i] = max(strength * float(dev @ sol) - chance, 0.0)
    post = tau_mu_posterior(gaps, emissions.post_dof[active], config.prior())
    return sample_gamma(post, rng)


def _as_rows(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def sample_tau_dirichlet(tau: float, concs: list, xs: list,
                         prior: GammaDist, rng: np.random.Generator) -> tuple[float, bool]:
    """One independence-MH step for a Dirichlet learning rate.

    The candidate is drawn from the gamma prior, so the proposal and prior
    densities cancel and the acceptance ratio reduces to the ratio of the
    tau-scaled Dirichlet densities at the observed simplex samples (a product
    over entries of ``concs``/``xs``, e.g. every transition row at once).
    """
    cand = sample_gamma(prior, rng)

    def logp(t):
        s = 0.0
        for conc, x in zip(concs, xs):
            rows = _as_rows(conc)
            s += dirichlet_rows_log_density(scale_dirichlet_conc(rows, t), _as_rows(x))
        return s

    log_ratio = logp(cand) - logp(tau)
    if np.log(rng.random()) < min(0.0, log_ratio):
        return float(cand), True
    return float(tau), False
