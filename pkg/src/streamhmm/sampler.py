"""Blocked Gibbs sweep over one batch of frames.

Sweep order: joint state resample (forward filter, backward sample), batch
transition recount, auxiliary table counts with sticky overrides, global
weights, transition rows, emissions, then the learning-rate updates.

Every update that touches a carried-over prior comes in two flavors: the
plain formulas (used by the supervised bootstrap and as a regression
reference) and the rate-scaled formulas.  Passing ``tau=None`` selects the
plain path; a pinned rate of exactly 1.0 goes through the scaling path but
reproduces the plain numbers bit for bit.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .distributions import _invwishart_draw, _niw_posterior_raw, chol_spd, dirichlet_rows
from .rates import sample_tau_mu, sample_tau_sigma, scale_dirichlet_conc, scale_niw_arrays

_LOG_2PI = float(np.log(2.0 * np.pi))
# Keeps Dirichlet concentrations strictly positive when weights underflow to 0.
_CONC_GUARD = 1e-300


# ---------------------------------------------------------------------------
# state assignment
# ---------------------------------------------------------------------------

def emission_log_likelihoods(Y: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """(T, L) matrix of normal log-densities, one column per model state."""
    T, d = Y.shape
    L = means.shape[0]
    if d == 1:
        var = covs[:, 0, 0]
        dev = Y[:, 0:1] - means[:, 0][None, :]
        # A dataless slot whose covariance degenerated under aggressive rate
        # scaling scores nan/-inf here; the path sampler's uniform fallback
        # absorbs such a sweep and the slot is redrawn from its recorded
        # posterior on the next refresh.
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return -0.5 * ((_LOG_2PI + np.log(var))[None, :] + dev * dev / var[None, :])
    out = np.empty((T, L))
    for k in range(L):
        if not np.isfinite(covs[k]).all():
            out[:, k] = -np.inf
            continue
        Lk = chol_spd(covs[k])
        sol = solve_triangular(Lk, (Y - means[k]).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(Lk)))
        out[:, k] = -0.5 * (d * _LOG_2PI + logdet + np.sum(sol * sol, axis=0))
    return out


def _forward_filter(log_init: np.ndarray, pi: np.ndarray, loglik: np.ndarray) -> np.ndarray:
    """Log-space forward messages ``alpha[t, k] = log p(y_1..t, z_t = k)``."""
    T, L = loglik.shape
    alpha = np.empty((T, L))
    alpha[0] = log_init + loglik[0]
    for t in range(1, T):
        prev = alpha[t - 1]
        mx = prev.max()
        if mx == -np.inf:
            # Every path died (all likelihoods -inf upstream): restart from
            # the current frame rather than erroring out.
            alpha[t] = loglik[t]
            continue
        with np.errstate(divide="ignore"):
            alpha[t] = mx + np.log(np.exp(prev - mx) @ pi) + loglik[t]
    return alpha


def _sample_categorical(weights: np.ndarray, rng: np.random.Generator) -> int:
    c = np.cumsum(weights)
    total = c[-1]
    if not total > 0 or not np.isfinite(total):
        return int(rng.integers(len(weights)))
    idx = int(np.searchsorted(c, rng.random() * total, side="right"))
    return min(idx, len(weights) - 1)


def _from_log_weights(lp: np.ndarray, rng: np.random.Generator) -> int:
    mx = lp.max()
    if mx == -np.inf:
        return int(rng.integers(len(lp)))
    return _sample_categorical(np.exp(lp - mx), rng)


def sample_states(state, Y: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Blocked resample of the batch's state path.

    Returns the sampled path and the data log-likelihood of the batch under
    the current parameters (a free byproduct of the forward pass).  The
    initial-state distribution is the current global weight vector.
    """
    T = len(Y)
    if T == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    em, trans = state.emissions, state.transitions
    loglik = emission_log_likelihoods(Y, em.mean, em.cov)
    with np.errstate(divide="ignore"):
        log_init = np.log(trans.beta)
        alpha = _forward_filter(log_init, trans.pi, loglik)
        log_pi = np.log(trans.pi)
    mx = alpha[-1].max()
    data_loglik = float(mx + np.log(np.sum(np.exp(alpha[-1] - mx)))) if mx > -np.inf else -np.inf
    z = np.empty(T, dtype=np.int64)
    z[T - 1] = _from_log_weights(alpha[T - 1], rng)
    for t in range(T - 2, -1, -1):
        z[t] = _from_log_weights(alpha[t] + log_pi[:, z[t + 1]], rng)
    return z, data_loglik


# ---------------------------------------------------------------------------
# table counts
# ---------------------------------------------------------------------------

def sample_aux_counts_raw(state, rng: np.random.Generator) -> None:
    """Resample table counts and sticky overrides from the current counts.

    Each transition count n[j, k] is replayed as a seating process where the
    i-th arrival opens a new table with probability c / (i - 1 + c),
    c = alpha * beta_k (+ kappa on the diagonal).  Diagonal tables are then
    thinned by binomial overrides so the sticky bias does not inflate the
    global weight of self-transitions.
    """
    hyper = state.hyper
    trans = state.transitions
    n, beta = trans.n, trans.beta
    m = np.zeros_like(trans.m)
    rows, cols = np.nonzero(n)
    for j, k in zip(rows, cols):
        c = hyper.alpha * beta[k] + (hyper.kappa if j == k else 0.0)
        c = max(c, _CONC_GUARD)
        cnt = int(n[j, k])
        thresh = c / (np.arange(cnt) + c)
        m[j, k] = int(np.sum(rng.random(cnt) < thresh))
    trans.m = m
    override = np.zeros_like(trans.override)
    diag = np.diag(m)
    occupied = np.flatnonzero(diag > 0)
    if occupied.size:
        rho = hyper.rho
        p = rho / (rho + beta[occupied] * (1.0 - rho))
        override[occupied] = rng.binomial(diag[occupied], p)
    trans.override = override


def sample_aux_counts(state, z: np.ndarray | None, rng: np.random.Generator):
    """Public wrapper: optionally recount transitions from ``z`` first."""
    from .state import count_transitions

    if z is not None:
        state.transitions.n = count_transitions(np.asarray(z, dtype=np.int64),
                                                state.hyper.n_states)
    sample_aux_counts_raw(state, rng)
    return state.transitions.m.copy(), state.transitions.override.copy()


# ---------------------------------------------------------------------------
# weights and rows
# ---------------------------------------------------------------------------

def sample_beta(state, rng: np.random.Generator, tau: float | None = None) -> np.ndarray:
    """Resample the global weights from baseline + adjusted table counts."""
    trans = state.transitions
    conc = trans.beta_conc + trans.adjusted_tables().sum(axis=0)
    if tau is not None:
        conc = scale_dirichlet_conc(conc, tau)
    guarded = np.maximum(conc, _CONC_GUARD)
    trans.beta = dirichlet_rows(guarded[None, :], rng)[0]
    return trans.beta


def transition_concentrations(state) -> np.ndarray:
    """Unscaled per-row Dirichlet concentrations: baseline + batch counts."""
    return state.transitions.pi_conc + state.transitions.n


def sample_pi_row(state, j: int, rng: np.random.Generator, tau: float | None = None) -> np.ndarray:
    conc = transition_concentrations(state)[j]
    if tau is not None:
        conc = scale_dirichlet_conc(conc, tau)
    row = dirichlet_rows(np.maximum(conc, _CONC_GUARD)[None, :], rng)[0]
    state.transitions.pi[j] = row
    return row


def sample_pi_rows(state, rng: np.random.Generator, tau: float | None = None) -> np.ndarray:
    conc = transition_concentrations(state)
    if tau is not None:
        conc = scale_dirichlet_conc(conc, tau)
    state.transitions.pi = dirichlet_rows(np.maximum(conc, _CONC_GUARD), rng)
    return state.transitions.pi


# ---------------------------------------------------------------------------
# emissions
# ---------------------------------------------------------------------------

def _emission_suffstats(Y: np.ndarray, z: np.ndarray, L: int):
    T, d = Y.shape
    counts = np.bincount(z, minlength=L)
    ybars = np.zeros((L, d))
    scatters = np.zeros((L, d, d))
    for k in np.flatnonzero(counts):
        Yk = Y[z == k]
        ybar = Yk.mean(axis=0)
        dev = Yk - ybar
        ybars[k] = ybar
        scatters[k] = dev.T @ dev
    return counts, ybars, scatters


def sample_emissions(state, Y: np.ndarray, z: np.ndarray, rng: np.random.Generator,
                     tau_mu: float | None = None, tau_sigma: float | None = None) -> None:
    """Conjugate refresh of every state's emission parameters.

    States with batch data get the scaled-prior conjugate posterior; states
    without data redraw from their (scaled) prior.  The stored posterior
    hyperparameters equal the unscaled prior for dataless states, so that
    propagation leaves never-observed states on the base measure.
    """
    em = state.emissions
    L, d = em.n_states, em.dim
    if tau_mu is None and tau_sigma is None:
        s_strength, s_scale, s_dof = em.prior_strength, em.prior_scale, em.prior_dof
    else:
        s_strength, s_scale, s_dof, clamped = scale_niw_arrays(
            em.prior_strength, em.prior_scale, em.prior_dof,
            1.0 if tau_mu is None else tau_mu,
            1.0 if tau_sigma is None else tau_sigma, d,
        )
        if clamped:
            state.rates.dof_clamped += clamped
    counts, ybars, scatters = _emission_suffstats(Y, z, L)
    # Batch sufficient statistics feed the mean-rate sampler afterwards;
    # they are transient (recomputed every sweep, never serialized).
    em.batch_n = counts.astype(np.int64)
    em.batch_mean = ybars
    for k in range(L):
        nk = int(counts[k])
        p_mean, p_strength, p_scale, p_dof = _niw_posterior_raw(
            em.prior_mean[k], float(s_strength[k]), s_scale[k], float(s_dof[k]),
            nk, ybars[k], scatters[k],
        )
        if nk > 0:
            em.post_mean[k] = p_mean
            em.post_strength[k] = p_strength
            em.post_scale[k] = p_scale
            em.post_dof[k] = p_dof
        else:
            em.post_mean[k] = em.prior_mean[k]
            em.post_strength[k] = em.prior_strength[k]
            em.post_scale[k] = em.prior_scale[k]
            em.post_dof[k] = em.prior_dof[k]
        cov = _invwishart_draw(chol_spd(p_scale), p_dof, rng)
        em.cov[k] = cov
        if d > 1 and not np.isfinite(cov).all():
            # Degenerate draw on a (necessarily dataless) slot: pin the
            # location and let the likelihood retire the slot for this sweep.
            em.mean[k] = p_mean
            continue
        em.mean[k] = p_mean + chol_spd(cov) @ rng.standard_normal(d) / np.sqrt(p_strength)


def sample_emissions_plain(state, Y: np.ndarray, z: np.ndarray, rng: np.random.Generator) -> None:
    sample_emissions(state, Y, z, rng, tau_mu=None, tau_sigma=None)


# ---------------------------------------------------------------------------
# full sweep
# ---------------------------------------------------------------------------

def gibbs_sweep(state, Y: np.ndarray, rng: np.random.Generator,
                plain: bool = False) -> tuple[np.ndarray, dict]:
    """One full blocked sweep; mutates ``state`` and returns ``(z, info)``.

    ``info`` carries the batch data log-likelihood and, in adaptive mode, the
    rates sampled this sweep.  With ``plain=True`` the unscaled update
    formulas are used throughout and no rate is resampled.
    """
    from .state import count_transitions

    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    T = len(Y)
    if T == 0:
        return np.zeros(0, dtype=np.int64), {"loglik": 0.0}
    rates = state.rates
    adaptive = rates.adapt and not plain
    if plain:
        tau_beta = tau_pi = tau_mu = tau_sigma = None
    else:
        tau_beta, tau_pi = rates.tau_beta, rates.tau_pi
        tau_mu, tau_sigma = rates.tau_mu, rates.tau_sigma

    z, loglik = sample_states(state, Y, rng)
    state.transitions.n = count_transitions(z, state.hyper.n_states)
    sample_aux_counts_raw(state, rng)

    beta_conc = state.transitions.beta_conc + state.transitions.adjusted_tables().sum(axis=0)
    beta = sample_beta(state, rng, tau_beta)
    pi_conc = transition_concentrations(state)
    pi = sample_pi_rows(state, rng, tau_pi)
    sample_emissions(state, Y, z, rng, tau_mu, tau_sigma)

    info = {"loglik": loglik}
    if adaptive:
        em = state.emissions
        batch_counts = np.bincount(z, minlength=state.hyper.n_states)
        agg = np.flatnonzero((em.occupancy > 0) | (batch_counts > 0))
        info["tau_sigma"] = sample_tau_sigma(em, agg, rates.config, rng, rates.tau_sigma)
        info["tau_mu"] = sample_tau_mu(em, agg, rates.config, rng, rates.tau_mu)
        info["tau_beta"] = rates.mh_step_beta(beta_conc, beta, rng)
        info["tau_pi"] = rates.mh_step_pi(pi_conc, pi, rng)
        rates.assert_finite()
    return z, info
