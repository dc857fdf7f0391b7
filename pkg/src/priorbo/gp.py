"""Gaussian-process surrogate with a scaled function prior as its mean.

The model is ``GP(lambda * f_prior, k)`` observed with variance ``sigma2``:
posterior mean ``k_T(x)^T (K_T + sigma2 I)^{-1} (y - lambda y') + lambda f'(x)``
and the usual prior-independent posterior variance.  ``lambda`` is either
fixed or set each refit to the closed-form maximizer of the data
log-likelihood, which is exactly quadratic in ``lambda``.

Observations are renormalized to zero mean / unit standard deviation every
refit; the stored normalization state also maps prior values at new
candidate points into the same units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .kernels import (
    KernelParams,
    cholesky_lower,
    kernel_cross,
    kernel_matrix,
)

#: Standard deviations below this are treated as degenerate (constant data)
#: and clamped to 1 so normalization is a no-op on that channel.
DEGENERATE_STD = 1e-12

#: Denominator threshold below which the adaptive coefficient falls back to 0.
LAMBDA_DENOM_FLOOR = 1e-12

#: Coordinates may exceed the box by at most this much.
BOX_TOL = 1e-9


@dataclass
class ObservationSet:
    """Queried points with objective and prior values.

    ``y`` / ``y_prior`` hold the working (possibly normalized) values while
    ``raw_y`` / ``raw_y_prior`` always keep the original observations.
    """

    points: np.ndarray  # (T, d)
    raw_y: np.ndarray  # (T,)
    raw_y_prior: np.ndarray  # (T,)
    y: np.ndarray = field(default=None)  # type: ignore[assignment]
    y_prior: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.raw_y = np.asarray(self.raw_y, dtype=float).ravel()
        self.raw_y_prior = np.asarray(self.raw_y_prior, dtype=float).ravel()
        if self.y is None:
            self.y = self.raw_y.copy()
        if self.y_prior is None:
            self.y_prior = self.raw_y_prior.copy()
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.y_prior = np.asarray(self.y_prior, dtype=float).ravel()
        T = self.points.shape[0]
        if not (len(self.raw_y) == len(self.raw_y_prior) == len(self.y) == len(self.y_prior) == T):
            raise ValueError("points, y, and y_prior must have equal length")
        if T and np.max(np.abs(self.points)) > 1.0 + BOX_TOL:
            raise ValueError("points must lie in [-1, 1]^d")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class NormalizationState:
    """Affine maps applied to observations and prior values.

    ``normalize_prior(v) = (v - mu_prior) / sigma_prior`` puts prior
    evaluations at new candidate points into the same units as the
    normalized training targets.
    """

    mu: float = 0.0
    sigma: float = 1.0
    mu_prior: float = 0.0
    sigma_prior: float = 1.0

    def normalize_prior(self, v):
        return (v - self.mu_prior) / self.sigma_prior

    def prior_grad_scale(self) -> float:
        return 1.0 / self.sigma_prior


def _safe_std(v: np.ndarray) -> float:
    s = float(np.std(v))
    return 1.0 if s < DEGENERATE_STD else s


def normalize(obs: ObservationSet) -> tuple[ObservationSet, NormalizationState]:
    """Center and scale ``raw_y`` and ``raw_y_prior`` to mean 0 / std 1.

    Population standard deviation; a degenerate (constant) channel keeps
    scale 1 so the centered values are simply zeros.  Returns a new
    ObservationSet (raw copies untouched) and the normalization state.
    """
    if len(obs) < 1:
        raise ValueError("cannot normalize an empty observation set")
    state = NormalizationState(
        mu=float(np.mean(obs.raw_y)),
        sigma=_safe_std(obs.raw_y),
        mu_prior=float(np.mean(obs.raw_y_prior)),
        sigma_prior=_safe_std(obs.raw_y_prior),
    )
    normalized = ObservationSet(
        points=obs.points,
        raw_y=obs.raw_y,
        raw_y_prior=obs.raw_y_prior,
        y=(obs.raw_y - state.mu) / state.sigma,
        y_prior=(obs.raw_y_prior - state.mu_prior) / state.sigma_prior,
    )
    return normalized, state


@dataclass
class GpConfig:
    """Refit configuration.

    ``lambda_mode`` is ``"adaptive"`` for the likelihood-maximizing
    coefficient or a float for a fixed one (0.0 recovers the zero-mean GP).
    ``optimize_lengthscale`` re-fits the kernel length scale by the same
    marginal likelihood via golden-section search on its log.
    """

    kernel: KernelParams
    sigma2: float = 1e-6
    lambda_mode: str | float = "adaptive"
    normalize: bool = True
    optimize_lengthscale: bool = False


@dataclass
class GaussianProcessModel:
    """Fitted surrogate: cached Cholesky factor and linear-solve vectors."""

    kernel: KernelParams
    sigma2: float
    lam: float
    X: np.ndarray  # (T, d) training inputs
    chol: np.ndarray | None  # lower factor of K + sigma2 I, None when T = 0
    alpha: np.ndarray | None  # (K + sigma2 I)^{-1} (y - lam * y_prior)
    norm: NormalizationState

    @property
    def n_train(self) -> int:
        return 0 if self.X is None else self.X.shape[0]

    @classmethod
    def prior_only(cls, kernel: KernelParams, sigma2: float, lam: float) -> "GaussianProcessModel":
        """Model with no observations: mean ``lam * f'``, unit variance."""
        return cls(
            kernel=kernel,
            sigma2=sigma2,
            lam=lam,
            X=np.zeros((0, 1)),
            chol=None,
            alpha=None,
            norm=NormalizationState(),
        )


def log_marginal_likelihood(
    obs: ObservationSet, kernel: KernelParams, sigma2: float, lam: float
) -> float:
    """Log density of ``y`` under ``N(lam * y_prior, K + sigma2 I)``.

    Uses the working values of ``obs`` as-is (normalize first if the
    likelihood should be evaluated in normalized units).
    """
    T = len(obs)
    if T < 1:
        raise ValueError("need at least one observation")
    L = cholesky_lower(kernel_matrix(obs.points, kernel, sigma2))
    r = obs.y - lam * obs.y_prior
    v = solve_triangular(L, r, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(-0.5 * (v @ v) - 0.5 * logdet - 0.5 * T * math.log(2.0 * math.pi))


def fit_lambda(obs: ObservationSet, kernel: KernelParams, sigma2: float) -> float:
    """Closed-form maximizer of the data log-likelihood over the prior coefficient.

    The log-likelihood is quadratic in the coefficient, so the maximizer is
    ``(y'^T A^{-1} y) / (y'^T A^{-1} y')`` with ``A = K + sigma2 I``.  Returns
    0 when the denominator falls below a small floor (prior values carry no
    signal, e.g. a constant prior after centering).
    """
    if len(obs) < 1:
        raise ValueError("need at least one observation")
    L = cholesky_lower(kernel_matrix(obs.points, kernel, sigma2))
    vy = solve_triangular(L, obs.y, lower=True)
    vp = solve_triangular(L, obs.y_prior, lower=True)
    denom = float(vp @ vp)
    if denom < LAMBDA_DENOM_FLOOR:
        return 0.0
    return float(vp @ vy) / denom


def _lml_cached(L: np.ndarray, r: np.ndarray) -> float:
    v = solve_triangular(L, r, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(-0.5 * (v @ v) - 0.5 * logdet - 0.5 * len(r) * math.log(2.0 * math.pi))


def _golden_section_max(fun, lo: float, hi: float, iters: int = 40) -> float:
    """Deterministic golden-section maximization on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def fit(obs: ObservationSet, config: GpConfig) -> GaussianProcessModel:
    """Normalize, resolve the prior coefficient, and cache the factorization.

    Runs the per-refit pipeline: normalization (unless disabled), adaptive
    or fixed coefficient, optional length-scale search, Cholesky of
    ``K + sigma2 I`` and the solve against the prior-corrected targets.
    """
    if len(obs) < 1:
        raise ValueError("cannot fit on an empty observation set")
    if config.normalize:
        work, state = normalize(obs)
    else:
        work = replace(obs, y=obs.raw_y.copy(), y_prior=obs.raw_y_prior.copy())
        state = NormalizationState()

    kernel = config.kernel
    if config.optimize_lengthscale:
        base = config.kernel.lengthscale

        def score(log_ell: float) -> float:
            k = config.kernel.with_lengthscale(math.exp(log_ell))
            lam = (
                fit_lambda(work, k, config.sigma2)
                if config.lambda_mode == "adaptive"
                else float(config.lambda_mode)
            )
            return log_marginal_likelihood(work, k, config.sigma2, lam)

        best = _golden_section_max(score, math.log(base / 10.0), math.log(10.0 * base))
        kernel = config.kernel.with_lengthscale(math.exp(best))

    if config.lambda_mode == "adaptive":
        lam = fit_lambda(work, kernel, config.sigma2)
    else:
        lam = float(config.lambda_mode)
    if not math.isfinite(lam):
        raise ValueError(f"prior coefficient is not finite: {lam}")

    L = cholesky_lower(kernel_matrix(work.points, kernel, config.sigma2))
    alpha = cho_solve((L, True), work.y - lam * work.y_prior)
    return GaussianProcessModel(
        kernel=kernel,
        sigma2=config.sigma2,
        lam=lam,
        X=work.points,
        chol=L,
        alpha=alpha,
        norm=state,
    )


def posterior_batch(
    model: GaussianProcessModel, prior, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at the rows of ``X``.

    ``prior`` supplies values at new points; it may be None when the model
    coefficient is 0.  Variance is clamped at 0 from below.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if model.lam != 0.0:
        if prior is None:
            raise ValueError("model has a nonzero prior coefficient but no prior was given")
        prior_term = model.lam * model.norm.normalize_prior(prior.value_batch(X))
    else:
        prior_term = np.zeros(n)
    if model.n_train == 0:
        return prior_term, np.ones(n)
    if model.chol is None or model.alpha is None:
        raise ValueError("model has not been fitted")
    kvec = kernel_cross(model.X, X, model.kernel)  # (T, n)
    v = solve_triangular(model.chol, kvec, lower=True)
    var = np.maximum(1.0 - np.sum(v * v, axis=0), 0.0)
    mean = kvec.T @ model.alpha + prior_term
    return mean, var


def posterior(model: GaussianProcessModel, prior, x) -> tuple[float, float]:
    """Posterior mean and variance at a single point."""
    mean, var = posterior_batch(model, prior, np.asarray(x, dtype=float)[None, :])
    return float(mean[0]), float(var[0])
