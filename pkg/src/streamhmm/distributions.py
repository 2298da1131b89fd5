"""Distribution toolbox: samplers and log-densities used by the model.

Every sampler takes an explicit ``numpy.random.Generator`` so that a run is
reproducible draw-for-draw from its seed; nothing here touches global random
state.  Densities return ``-inf`` outside the support instead of raising.

Scale/dof style conventions:

* ``InvWishart(scale, dof)`` uses the scale-matrix parameterization whose
  mean is ``scale / (dof - p - 1)`` and mode ``scale / (dof + p + 1)``.
* ``InvGamma(shape, scale)`` has density ``scale^shape / Gamma(shape) *
  x^(-shape-1) * exp(-scale/x)``.
* ``Gamma(shape, rate)`` has mean ``shape / rate``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, multigammaln

from .errors import NumericError, ParameterError

# Relative diagonal jitter applied before every Cholesky factorization.
JITTER_SCALE = 1e-8

_LOG_2PI = float(np.log(2.0 * np.pi))
# Floor applied to simplex entries inside Dirichlet log-densities so that
# exp-underflowed components do not produce nan via 0 * log(0).
_SIMPLEX_FLOOR = 1e-300


def chol_spd(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    A jitter of ``JITTER_SCALE * trace(mat)/d`` is added to the diagonal
    before factorizing; matrices that still fail are treated as genuinely
    non-PD and raise :class:`NumericError`.
    """
    mat = np.asarray(mat, dtype=np.float64)
    d = mat.shape[0]
    jitter = JITTER_SCALE * np.trace(mat) / d
    if d == 1:
        v = mat[0, 0] + jitter
        if not v > 0.0:
            raise NumericError("matrix is not positive definite")
        return np.array([[np.sqrt(v)]])
    try:
        return np.linalg.cholesky(mat + jitter * np.eye(d))
    except np.linalg.LinAlgError:
        raise NumericError("matrix is not positive definite") from None


def _check_vector(x, name):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise ParameterError(f"{name} must be a vector, got shape {x.shape}")
    return x


def _check_square(x, d, name):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape != (d, d):
        raise ParameterError(f"{name} must have shape ({d}, {d}), got {x.shape}")
    if not np.allclose(x, x.T, rtol=1e-8, atol=1e-10):
        raise ParameterError(f"{name} must be symmetric")
    return x


@dataclass
class MvNormal:
    """Multivariate normal with dense covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = _check_vector(self.mean, "mean")
        self.cov = _check_square(self.cov, self.mean.shape[0], "cov")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def natural(self):
        """Natural parameters ``(cov^-1 mean, -cov^-1 / 2)``."""
        prec = np.linalg.inv(self.cov)
        return prec @ self.mean, -0.5 * prec


@dataclass
class InvWishart:
    """Inverse-Wishart over SPD matrices; real-valued dof > p - 1 allowed."""

    scale: np.ndarray
    dof: float

    def __post_init__(self):
        self.scale = np.atleast_2d(np.asarray(self.scale, dtype=np.float64))
        p = self.scale.shape[0]
        self.scale = _check_square(self.scale, p, "scale")
        self.dof = float(self.dof)
        if not self.dof > p - 1:
            raise ParameterError(f"dof must exceed p - 1 = {p - 1}, got {self.dof}")

    @property
    def dim(self) -> int:
        return self.scale.shape[0]

    def mode(self) -> np.ndarray:
        return self.scale / (self.dof + self.dim + 1.0)

    def natural(self):
        """Natural parameters ``(-scale/2, -(dof + p + 1)/2)``."""
        return -0.5 * self.scale, -0.5 * (self.dof + self.dim + 1.0)

    @classmethod
    def from_natural(cls, eta1, eta2):
        eta1 = np.atleast_2d(np.asarray(eta1, dtype=np.float64))
        p = eta1.shape[0]
        return cls(scale=-2.0 * eta1, dof=-2.0 * float(eta2) - p - 1.0)


@dataclass
class InvGamma:
    """Inverse-gamma with shape/scale parameterization."""

    shape: float
    scale: float

    def __post_init__(self):
        self.shape = float(self.shape)
        self.scale = float(self.scale)
        if self.shape <= 0 or self.scale <= 0:
            raise ParameterError("InvGamma shape and scale must be > 0")

    def natural(self):
        return -self.shape - 1.0, -self.scale


@dataclass
class GammaDist:
    """Gamma with shape/rate parameterization (mean = shape / rate)."""

    shape: float
    rate: float

    def __post_init__(self):
        self.shape = float(self.shape)
        self.rate = float(self.rate)
        if self.shape <= 0 or self.rate <= 0:
            raise ParameterError("Gamma shape and rate must be > 0")

    def natural(self):
        return self.shape - 1.0, -self.rate


@dataclass
class DirichletDist:
    """Dirichlet over the probability simplex."""

    concentration: np.ndarray

    def __post_init__(self):
        self.concentration = _check_vector(self.concentration, "concentration")
        if np.any(self.concentration <= 0) or not np.all(np.isfinite(self.concentration)):
            raise ParameterError("Dirichlet concentrations must be finite and > 0")

    @property
    def dim(self) -> int:
        return self.concentration.shape[0]

    def natural(self):
        return self.concentration - 1.0

    @classmethod
    def from_natural(cls, eta):
        return cls(concentration=np.asarray(eta, dtype=np.float64) + 1.0)


@dataclass
class NiwParams:
    """Normal-inverse-Wishart prior: mean location, mean strength, IW scale, IW dof."""

    mean: np.ndarray
    strength: float
    scale: np.ndarray
    dof: float

    def __post_init__(self):
        self.mean = _check_vector(self.mean, "mean")
        d = self.mean.shape[0]
        self.scale = _check_square(self.scale, d, "scale")
        self.strength = float(self.strength)
        self.dof = float(self.dof)
        if self.strength <= 0:
            raise ParameterError("NIW strength must be > 0")
        if not self.dof > d - 1:
            raise ParameterError(f"NIW dof must exceed d - 1 = {d - 1}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_mvnormal(dist: MvNormal, rng: np.random.Generator) -> np.ndarray:
    return dist.mean + chol_spd(dist.cov) @ rng.standard_normal(dist.dim)


_CHI2_FLOOR = np.finfo(np.float64).tiny


def _bartlett_lower(dof: float, p: int, rng: np.random.Generator) -> np.ndarray:
    # Lower-triangular Bartlett factor: chi-square diagonal (real dof),
    # standard-normal strict lower triangle.  Chi-square draws at the barely
    # proper dofs produced by aggressive rate scaling can underflow to 0;
    # the floor keeps the factor invertible (draws at operative dofs >= 1
    # land on it with probability ~1e-154, i.e. never).
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(np.maximum(rng.chisquare(dof - np.arange(p)), _CHI2_FLOOR))
    if p > 1:
        A[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    return A


def _invwishart_draw(scale_chol: np.ndarray, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from IW given the lower Cholesky factor of the scale matrix.

    With ``A`` a Bartlett factor of dof ``dof`` and ``C = chol(scale)``, the
    draw is ``(A^-1 C^T)^T (A^-1 C^T)``: its inverse is Wishart(dof, scale^-1)
    by closure of the Wishart under congruence, so no explicit inverse of the
    scale matrix is ever formed.
    """
    p = scale_chol.shape[0]
    if p == 1:
        # At the dof properness floor the chi-square mass sits near zero and
        # the floored divisor can overflow the draw to inf; downstream treats
        # that as a dead slot for the sweep.
        with np.errstate(over="ignore"):
            return np.array([[scale_chol[0, 0] ** 2 / max(rng.chisquare(dof), _CHI2_FLOOR)]])
    A = _bartlett_lower(dof, p, rng)
    with np.errstate(over="ignore"):
        X = solve_triangular(A, scale_chol.T, lower=True)
        return X.T @ X


def sample_invwishart(dist: InvWishart, rng: np.random.Generator) -> np.ndarray:
    return _invwishart_draw(chol_spd(dist.scale), dist.dof, rng)


def sample_invgamma(dist: InvGamma, rng: np.random.Generator) -> float:
    return dist.scale / rng.standard_gamma(dist.shape)


def sample_gamma(dist: GammaDist, rng: np.random.Generator) -> float:
    return rng.standard_gamma(dist.shape) / dist.rate


def _log_gamma_draws(shape: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """log of Gamma(shape, 1) draws, stable for arbitrarily small shapes.

    Uses the boost identity G(a) =d G(a+1) * U^(1/a); the log never
    underflows even when the draw itself would round to zero.
    """
    shape = np.asarray(shape, dtype=np.float64)
    g = rng.standard_gamma(shape + 1.0)
    u = rng.random(shape.shape)
    return np.log(g) + np.log(u) / shape


def sample_dirichlet(dist: DirichletDist, rng: np.random.Generator) -> np.ndarray:
    lg = _log_gamma_draws(dist.concentration, rng)
    lg -= lg.max()
    w = np.exp(lg)
    return w / w.sum()


def dirichlet_rows(conc: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise Dirichlet draws for a matrix of concentrations."""
    conc = np.asarray(conc, dtype=np.float64)
    if np.any(conc <= 0) or not np.all(np.isfinite(conc)):
        raise ParameterError("Dirichlet concentrations must be finite and > 0")
    lg = _log_gamma_draws(conc, rng)
    lg -= lg.max(axis=1, keepdims=True)
    w = np.exp(lg)
    return w / w.sum(axis=1, keepdims=True)


def sample_niw(prior: NiwParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(mean, cov)`` with cov ~ IW(scale, dof), mean ~ N(location, cov/strength)."""
    cov = _invwishart_draw(chol_spd(prior.scale), prior.dof, rng)
    mean = prior.mean + chol_spd(cov) @ rng.standard_normal(prior.dim) / np.sqrt(prior.strength)
    return mean, cov


def stick_breaking(concentration: float, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Truncated stick-breaking weights; the unbroken residual folds into the last atom."""
    if concentration <= 0:
        raise ParameterError("stick-breaking concentration must be > 0")
    if n_atoms < 1:
        raise ParameterError("need at least one atom")
    if n_atoms == 1:
        return np.ones(1)
    v = rng.beta(1.0, concentration, size=n_atoms - 1)
    with np.errstate(divide="ignore"):
        # v == 1.0 exhausts the stick; log1p(-1) = -inf makes the rest 0.
        log_remainder = np.concatenate([[0.0], np.cumsum(np.log1p(-v))])
    w = np.empty(n_atoms)
    w[:-1] = v * np.exp(log_remainder[:-1])
    w[-1] = np.exp(log_remainder[-1])
    return w / w.sum()


# ---------------------------------------------------------------------------
# conjugate algebra
# ---------------------------------------------------------------------------

def _niw_posterior_raw(mean, strength, scale, dof, n, ybar, scatter):
    """NIW conjugate update from sufficient statistics (count, mean, scatter).

    ``scatter`` is the centered sum of squares ``sum (y - ybar)(y - ybar)^T``.
    With ``n == 0`` the prior comes back unchanged (fresh copies).
    """
    if n == 0:
        return mean.copy(), strength, scale.copy(), dof
    new_strength = strength + n
    new_mean = (strength * mean + n * ybar) / new_strength
    gap = ybar - mean
    new_scale = scale + scatter + (strength * n / new_strength) * np.outer(gap, gap)
    return new_mean, new_strength, new_scale, dof + n


def niw_posterior(prior: NiwParams, n: int, ybar: np.ndarray, scatter: np.ndarray) -> NiwParams:
    """Posterior NIW after absorbing ``n`` observations with the given stats."""
    if n < 0:
        raise ParameterError("observation count must be nonnegative")
    ybar = np.zeros(prior.dim) if n == 0 else _check_vector(ybar, "ybar")
    scatter = np.zeros((prior.dim, prior.dim)) if n == 0 else np.asarray(scatter, dtype=np.float64)
    mean, strength, scale, dof = _niw_posterior_raw(
        prior.mean, prior.strength, prior.scale, prior.dof, n, ybar, scatter
    )
    return NiwParams(mean, strength, scale, dof)


# ---------------------------------------------------------------------------
# log densities
# ---------------------------------------------------------------------------

def _chol_exact(mat: np.ndarray, name: str) -> np.ndarray:
    # Densities factorize parameters exactly: jitter would bias every value
    # returned, and a non-PD parameter is an error, not something to repair.
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise NumericError(f"{name} matrix is not positive definite") from None


def log_density_mvnormal(dist: MvNormal, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    L = _chol_exact(dist.cov, "covariance")
    dev = solve_triangular(L, x - dist.mean, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (dist.dim * _LOG_2PI + logdet + dev @ dev))


def log_density_invwishart(dist: InvWishart, x: np.ndarray) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    p = dist.dim
    if x.shape != (p, p) or not np.allclose(x, x.T, rtol=1e-8, atol=1e-10):
        return -np.inf
    try:
        Lx = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return -np.inf
    Ls = _chol_exact(dist.scale, "scale")
    nu = dist.dof
    logdet_scale = 2.0 * np.sum(np.log(np.diag(Ls)))
    logdet_x = 2.0 * np.sum(np.log(np.diag(Lx)))
    # tr(scale @ x^-1) via triangular solves on the Cholesky factors
    M = solve_triangular(Lx, Ls, lower=True)
    trace_term = float(np.sum(M * M))
    return float(
        0.5 * nu * logdet_scale
        - 0.5 * nu * p * np.log(2.0)
        - multigammaln(0.5 * nu, p)
        - 0.5 * (nu + p + 1.0) * logdet_x
        - 0.5 * trace_term
    )


def log_density_invgamma(dist: InvGamma, x: float) -> float:
    if x <= 0 or not np.isfinite(x):
        return -np.inf
    a, b = dist.shape, dist.scale
    return float(a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(x) - b / x)


def log_density_gamma(dist: GammaDist, x: float) -> float:
    if x <= 0 or not np.isfinite(x):
        return -np.inf
    a, b = dist.shape, dist.rate
    return float(a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(x) - b * x)


def log_density_dirichlet(dist: DirichletDist, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    a = dist.concentration
    if x.shape != a.shape or np.any(x < -1e-12) or abs(float(x.sum()) - 1.0) > 1e-8:
        return -np.inf
    xs = np.maximum(x, _SIMPLEX_FLOOR)
    return float(
        gammaln(a.sum()) - gammaln(a).sum() + np.sum((a - 1.0) * np.log(xs))
    )


def dirichlet_rows_log_density(conc: np.ndarray, x: np.ndarray) -> float:
    """Sum of row-wise Dirichlet log-densities (shared by the rate samplers)."""
    conc = np.asarray(conc, dtype=np.float64)
    xs = np.maximum(np.asarray(x, dtype=np.float64), _SIMPLEX_FLOOR)
    return float(
        np.sum(gammaln(conc.sum(axis=1)))
        - np.sum(gammaln(conc))
        + np.sum((conc - 1.0) * np.log(xs))
    )
