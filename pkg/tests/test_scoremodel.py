import numpy as np
import pytest

from activematch.core import OBSERVED_VARIANCE, ModelFitError, SuitabilityMatrix
from activematch.data import generate_synthetic
from activematch.numerics import RngStream
from activematch.scoremodel import (
    JOKES,
    BiasBaseline,
    ModelConfig,
    fit,
    predictive_moments,
    sample_score_matrix,
)

U = np.array([1.0, 2.0, -1.0, 0.5, 1.5])
V = np.array([2.0, -1.0, 1.0, 0.5, -2.0])
RANK1 = np.outer(U, V)
RANK1_CFG = ModelConfig(latent_dim=1, alpha=100.0, beta0_u=0.1, beta0_v=10.0)


@pytest.fixture(scope="module")
def rank1_full():
    scores = SuitabilityMatrix.from_dense(RANK1).fully_observed()
    return scores, fit(scores, RANK1_CFG, RngStream(0))


@pytest.fixture(scope="module")
def rank1_partial():
    obs = np.ones((5, 5), dtype=bool)
    obs[0, 0] = obs[2, 3] = obs[4, 1] = obs[1, 4] = False
    scores = SuitabilityMatrix.from_dense(RANK1, obs)
    return scores, fit(scores, RANK1_CFG, RngStream(1))


@pytest.fixture(scope="module")
def synthetic_fit():
    data = generate_synthetic(20, 8, 2, noise_sd=0.5, seed=4)
    obs = np.random.default_rng(4).random(data.shape) < 0.4
    scores = data.with_observed(obs)
    cfg = ModelConfig(latent_dim=2, alpha=2.0, beta0_u=0.1, beta0_v=0.1)
    return scores, cfg, fit(scores, cfg, RngStream(9))


def test_rank1_recovery_fully_observed(rank1_full):
    scores, model = rank1_full
    hidden = scores.with_observed(np.zeros(scores.shape, dtype=bool))
    assert np.abs(predictive_moments(model, hidden).mean - RANK1).max() < 0.1


def test_rank1_recovery_unobserved_entries(rank1_partial):
    scores, model = rank1_partial
    post = predictive_moments(model, scores)
    assert np.abs(post.mean - RANK1)[~scores.observed].max() < 0.2


def test_no_observations_is_an_error():
    with pytest.raises(ModelFitError, match="no observed"):
        fit(SuitabilityMatrix.from_dense(np.ones((3, 3))), ModelConfig(), RngStream(0))


def test_jokes_defaults_run_end_to_end():
    data = generate_synthetic(30, 10, 1, noise_sd=2.0, seed=1)
    obs = np.random.default_rng(1).random(data.shape) < 0.3
    scores = data.with_observed(obs)
    post = predictive_moments(fit(scores, JOKES, RngStream(2)), scores)
    assert np.all(np.isfinite(post.mean))
    assert JOKES.latent_dim == 1 and JOKES.alpha == 0.1
    assert JOKES.beta0_u == 0.1 and JOKES.beta0_v == 10.0


def test_observed_entry_contract(synthetic_fit):
    scores, cfg, model = synthetic_fit
    post = predictive_moments(model, scores)
    obs = scores.observed
    np.testing.assert_array_equal(post.mean[obs], scores.values[obs])
    assert np.all(post.variance[obs] == OBSERVED_VARIANCE)


def test_unobserved_variance_floor(synthetic_fit):
    scores, cfg, model = synthetic_fit
    post = predictive_moments(model, scores)
    unobs = ~scores.observed
    assert np.all(post.variance[unobs] >= 1.0 / cfg.alpha)
    assert post.variance[unobs].min() > post.variance[scores.observed].max()


def test_retained_sample_count(synthetic_fit):
    _, cfg, model = synthetic_fit
    assert model.num_samples == cfg.num_collected
    assert model.u_samples.shape == (cfg.num_collected, 20, 2)


def test_gibbs_reproducible(synthetic_fit):
    scores, cfg, model = synthetic_fit
    again = fit(scores, cfg, RngStream(9))
    assert np.array_equal(model.u_samples, again.u_samples)
    assert np.array_equal(model.v_samples, again.v_samples)


def test_sampled_matrix_keeps_observed(synthetic_fit):
    scores, _, model = synthetic_fit
    stream = RngStream(3)
    for _ in range(5):
        grid = sample_score_matrix(model, scores, stream)
        np.testing.assert_array_equal(grid[scores.observed], scores.values[scores.observed])


def test_sampled_matrix_deterministic(synthetic_fit):
    scores, _, model = synthetic_fit
    a = sample_score_matrix(model, scores, RngStream(21))
    b = sample_score_matrix(model, scores, RngStream(21))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("mode", ["joint", "independent"])
def test_sample_mean_consistent_with_moments(synthetic_fit, mode):
    scores, cfg, model = synthetic_fit
    if mode != model.config.sampling:
        model = type(model)(ModelConfig(**{**cfg.__dict__, "sampling": mode}), model.u_samples,
                            model.v_samples, model.states)
    post = predictive_moments(model, scores)
    stream = RngStream(77)
    draws = np.array([sample_score_matrix(model, scores, stream) for _ in range(500)])
    se = np.sqrt(post.variance / 500)
    unobs = ~scores.observed
    assert np.all(np.abs(draws.mean(axis=0) - post.mean)[unobs] <= 3 * se[unobs])


def test_new_observation_gets_observed_variance(synthetic_fit):
    scores, cfg, _ = synthetic_fit
    r, p = map(int, np.argwhere(~scores.observed)[0])
    obs = scores.observed.copy()
    obs[r, p] = True
    refit = scores.with_observed(obs)
    post = predictive_moments(fit(refit, cfg, RngStream(5)), refit)
    assert post.variance[r, p] == OBSERVED_VARIANCE
    assert post.mean[r, p] == scores.values[r, p]


def test_posterior_mean_beats_global_mean_on_full_matrix():
    data = generate_synthetic(25, 10, 2, noise_sd=0.5, seed=8)
    scores = data.fully_observed()
    model = fit(scores, ModelConfig(latent_dim=2, alpha=4.0, beta0_u=0.1, beta0_v=0.1), RngStream(3))
    pred = model.prediction_samples().mean(axis=0)
    rmse = np.sqrt(np.mean((pred - data.values) ** 2))
    baseline = np.sqrt(np.mean((data.values.mean() - data.values) ** 2))
    assert rmse <= baseline


def test_bias_baseline(synthetic_fit):
    scores, _, _ = synthetic_fit
    base = BiasBaseline.fit(scores)
    post = base.predictive_moments(scores)
    assert np.all(post.variance[~scores.observed] == base.residual_variance)
    assert np.all(post.variance[scores.observed] == OBSERVED_VARIANCE)
    with pytest.raises(ModelFitError):
        BiasBaseline.fit(scores.with_observed(np.zeros(scores.shape, dtype=bool)))


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(latent_dim=0)
    with pytest.raises(ValueError):
        ModelConfig(alpha=0.0)
    with pytest.raises(ValueError):
        ModelConfig(sampling="per-entry")
