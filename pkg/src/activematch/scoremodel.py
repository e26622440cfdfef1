"""Bayesian low-rank factorisation (BPMF) fitted by block Gibbs sampling.

Scores are modelled as ``s_rp ~ N(u_r . v_p, 1/alpha)`` with Gaussian rows
``u_r ~ N(mu_u, Lambda_u^-1)`` whose hyperparameters carry a Normal-Wishart
prior (mean 0, scale I, dof = latent_dim, scaling beta0 per side); items are
symmetric. The fitted model keeps a thinned set of posterior factor samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import OBSERVED_VARIANCE, ModelFitError, ScorePosterior, SuitabilityMatrix
from .numerics import NotPositiveDefiniteError, RngStream, cholesky, sample_mvn, sample_wishart

logger = logging.getLogger(__name__)

SAMPLING_MODES = ("joint", "independent")


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 1
    alpha: float = 0.1
    beta0_u: float = 0.1
    beta0_v: float = 10.0
    burn_in: int = 50
    num_collected: int = 50
    thinning: int = 2
    init_sd: float = 0.1
    init_als_iters: int = 20
    init_restarts: int = 5
    observed_variance: float = OBSERVED_VARIANCE
    sampling: str = "joint"

    def __post_init__(self) -> None:
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        for name in ("alpha", "beta0_u", "beta0_v", "init_sd", "observed_variance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.init_als_iters < 0 or self.init_restarts < 1:
            raise ValueError("need init_als_iters >= 0 and init_restarts >= 1")
        if self.burn_in < 0 or self.num_collected < 1 or self.thinning < 1:
            raise ValueError("need burn_in >= 0, num_collected >= 1, thinning >= 1")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {SAMPLING_MODES}")

    @property
    def num_sweeps(self) -> int:
        return self.burn_in + self.num_collected * self.thinning


# Per-dataset settings chosen by validation in the original experiments.
JOKES = ModelConfig(latent_dim=1, alpha=0.1, beta0_u=0.1, beta0_v=10.0)
CONFERENCE = ModelConfig(latent_dim=15, alpha=2.0, beta0_u=0.1, beta0_v=0.1)
DATING = ModelConfig(latent_dim=2, alpha=2.0, beta0_u=0.1, beta0_v=0.1)


@dataclass(frozen=True)
class FactorState:
    u_factors: NDArray[np.float64]
    v_factors: NDArray[np.float64]
    mu_u: NDArray[np.float64]
    lambda_u: NDArray[np.float64]
    mu_v: NDArray[np.float64]
    lambda_v: NDArray[np.float64]


@dataclass(frozen=True)
class FittedModel:
    """Retained Gibbs samples, stacked: ``u_samples`` is (S, N, k)."""

    config: ModelConfig
    u_samples: NDArray[np.float64]
    v_samples: NDArray[np.float64]
    states: tuple[FactorState, ...]

    @property
    def num_samples(self) -> int:
        return self.u_samples.shape[0]

    def prediction_samples(self) -> NDArray[np.float64]:
        """Noise-free predictions ``u_r . v_p`` per retained sample, (S, N, M)."""
        return np.einsum("snk,smk->snm", self.u_samples, self.v_samples)


def _sample_hyper(x: NDArray, beta0: float, dof0: float, rng: RngStream):
    n, k = x.shape
    xbar = x.mean(axis=0)
    centred = x - xbar
    scatter = centred.T @ centred
    w_inv = np.eye(k) + scatter + (beta0 * n / (beta0 + n)) * np.outer(xbar, xbar)
    w_inv = 0.5 * (w_inv + w_inv.T)
    w_post = np.linalg.inv(w_inv)
    w_post = 0.5 * (w_post + w_post.T)
    lam = sample_wishart(dof0 + n, w_post, rng)
    mu_post = n * xbar / (beta0 + n)
    cov = np.linalg.inv((beta0 + n) * lam)
    mu = sample_mvn(mu_post, 0.5 * (cov + cov.T), rng)
    return mu, lam


def _sample_rows(
    scores: NDArray, mask: NDArray, other: NDArray, mu: NDArray, lam: NDArray,
    alpha: float, rng: RngStream,
) -> NDArray:
    """Draw every row of one factor matrix from its Gaussian conditional."""
    outer = np.einsum("mi,mj->mij", other, other)
    precision = lam[None] + alpha * np.einsum("nm,mij->nij", mask, outer)
    rhs = (lam @ mu)[None] + alpha * (scores * mask) @ other
    low = cholesky(precision)
    z = rng.generator.standard_normal(rhs.shape)
    # x = L^-T (L^-1 b + z) has mean P^-1 b and covariance P^-1
    half = np.linalg.solve(low, rhs[..., None])[..., 0] + z
    return np.linalg.solve(np.swapaxes(low, -1, -2), half[..., None])[..., 0]


def _ridge_rows(scores: NDArray, mask: NDArray, other: NDArray, alpha: float) -> NDArray:
    k = other.shape[1]
    outer = np.einsum("mi,mj->mij", other, other)
    precision = np.eye(k)[None] + alpha * np.einsum("nm,mij->nij", mask, outer)
    rhs = alpha * (scores * mask) @ other
    return np.linalg.solve(precision, rhs[..., None])[..., 0]


def _initial_factors(data: NDArray, mask: NDArray, config: ModelConfig, rng: RngStream):
    """Chain start: best of several alternating-ridge (MAP) runs.

    Each restart begins from i.i.d. N(0, init_sd^2) factors. Biased observation
    patterns give the MAP objective poor local optima, and a Gibbs chain started
    inside one rarely leaves it, so the restart with the lowest penalised loss
    wins. With ``init_als_iters=0`` the first random draw is used as is.
    """
    gen = rng.generator
    n, m = data.shape
    k, alpha = config.latent_dim, config.alpha
    best, best_loss = None, np.inf
    for _ in range(config.init_restarts if config.init_als_iters else 1):
        u = config.init_sd * gen.standard_normal((n, k))
        v = config.init_sd * gen.standard_normal((m, k))
        for _ in range(config.init_als_iters):
            u = _ridge_rows(data, mask, v, alpha)
            v = _ridge_rows(data.T, mask.T, u, alpha)
        resid = (data - u @ v.T) * mask
        loss = alpha * np.sum(resid**2) + np.sum(u**2) + np.sum(v**2)
        if loss < best_loss:
            best, best_loss = (u, v), loss
    return best


def fit(scores: SuitabilityMatrix, config: ModelConfig, rng: RngStream) -> FittedModel:
    """Run the Gibbs chain on the observed entries and keep thinned samples."""
    mask = scores.observed.astype(np.float64)
    if not mask.any():
        raise ModelFitError("no observed entries to fit")
    data = np.where(scores.observed, scores.values, 0.0)
    n, m = data.shape
    k = config.latent_dim
    u, v = _initial_factors(data, mask, config, rng)

    u_kept, v_kept, states = [], [], []
    try:
        for sweep in range(config.num_sweeps):
            mu_u, lam_u = _sample_hyper(u, config.beta0_u, k, rng)
            mu_v, lam_v = _sample_hyper(v, config.beta0_v, k, rng)
            u = _sample_rows(data, mask, v, mu_u, lam_u, config.alpha, rng)
            v = _sample_rows(data.T, mask.T, u, mu_v, lam_v, config.alpha, rng)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise ModelFitError(f"non-finite factors at sweep {sweep}")
            done = sweep + 1 - config.burn_in
            if done > 0 and done % config.thinning == 0:
                u_kept.append(u)
                v_kept.append(v)
                states.append(FactorState(u, v, mu_u, lam_u, mu_v, lam_v))
    except NotPositiveDefiniteError as exc:
        raise ModelFitError(f"conditional precision lost positive definiteness: {exc}") from exc

    logger.debug("fitted %dx%d model with %d retained samples", n, m, len(states))
    return FittedModel(config, np.stack(u_kept), np.stack(v_kept), tuple(states))


def predictive_moments(model: FittedModel, scores: SuitabilityMatrix) -> ScorePosterior:
    """Per-entry predictive mean and variance.

    Unobserved: mean and (population) variance of ``u_r . v_p`` across retained
    samples, plus observation noise ``1/alpha``. Observed: the observed value
    with the fixed small ``observed_variance``.
    """
    preds = model.prediction_samples()
    mean = preds.mean(axis=0)
    var = preds.var(axis=0) + 1.0 / model.config.alpha
    obs = scores.observed
    mean = np.where(obs, scores.values, mean)
    var = np.where(obs, model.config.observed_variance, var)
    return ScorePosterior(mean, var)


def sample_score_matrix(model: FittedModel, scores: SuitabilityMatrix, rng: RngStream) -> NDArray[np.float64]:
    """One complete score matrix from the posterior predictive.

    In ``joint`` mode a single retained factor sample drives every entry, which
    keeps cross-entry posterior correlation. In ``independent`` mode each entry
    is drawn from its Gaussian predictive marginal. Observed entries are copied.
    """
    gen = rng.generator
    noise_sd = np.sqrt(1.0 / model.config.alpha)
    if model.config.sampling == "joint":
        s = int(gen.integers(model.num_samples))
        grid = model.u_samples[s] @ model.v_samples[s].T
        grid = grid + noise_sd * gen.standard_normal(grid.shape)
    else:
        post = predictive_moments(model, scores)
        grid = post.mean + np.sqrt(post.variance) * gen.standard_normal(post.shape)
    return np.where(scores.observed, scores.values, grid)


def sample_from_posterior(posterior: ScorePosterior, rng: RngStream) -> NDArray[np.float64]:
    """Independent Gaussian draw of every entry from its marginal."""
    z = rng.generator.standard_normal(posterior.shape)
    return posterior.mean + np.sqrt(posterior.variance) * z


@dataclass(frozen=True)
class BiasBaseline:
    """Global mean + user bias + item bias; residual variance as uncertainty."""

    global_mean: float
    user_bias: NDArray[np.float64]
    item_bias: NDArray[np.float64]
    residual_variance: float
    observed_variance: float = OBSERVED_VARIANCE

    @classmethod
    def fit(cls, scores: SuitabilityMatrix, reg: float = 1.0) -> "BiasBaseline":
        obs = scores.observed
        if not obs.any():
            raise ModelFitError("no observed entries to fit")
        data = np.where(obs, scores.values, 0.0)
        mu = float(data.sum() / obs.sum())
        resid = np.where(obs, data - mu, 0.0)
        item_bias = resid.sum(axis=0) / (obs.sum(axis=0) + reg)
        resid = np.where(obs, resid - item_bias[None, :], 0.0)
        user_bias = resid.sum(axis=1) / (obs.sum(axis=1) + reg)
        resid = np.where(obs, resid - user_bias[:, None], 0.0)
        var = float((resid[obs] ** 2).mean())
        return cls(mu, user_bias, item_bias, max(var, OBSERVED_VARIANCE))

    def predictive_moments(self, scores: SuitabilityMatrix) -> ScorePosterior:
        mean = self.global_mean + self.user_bias[:, None] + self.item_bias[None, :]
        var = np.full(mean.shape, self.residual_variance)
        obs = scores.observed
        return ScorePosterior(
            np.where(obs, scores.values, mean), np.where(obs, self.observed_variance, var)
        )
