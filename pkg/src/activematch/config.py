"""YAML run configuration.

Every key is optional::

    dataset:
      path: ratings.csv            # or a synthetic block
      synthetic: {num_users: 60, num_items: 12, rank: 2, noise_sd: 1.0,
                  score_range: [-10, 10], density: 1.0, seed: 0}
      filter: {min_ratings_per_user: 0, top_items: null, max_users: null, seed: 0}
    constraints: {r_min: 4, r_max: 6, p_min: 1, p_max: 1}
    model: {latent_dim: 1, alpha: 0.1, beta0_u: 0.1, beta0_v: 10.0, burn_in: 50,
            num_collected: 50, thinning: 2, sampling: joint}
    model_grid: [{...}, ...]       # optional validation pass over model settings
    simulation: {batch_size: 10, num_rounds: null, mode: parallel, init_observed: 20,
                 init_train: 15, init_validation: 5, num_trials: 1, base_seed: 0,
                 num_prob_samples: 50, match_threshold: 0.01,
                 strategies: [random, se, sm, ym, ybar_m, ybar_e]}
    output: results.csv
    summary: summary.csv

Missing constraints default to one item per user with items shared as evenly
as possible.
"""

from __future__ import annotations

import math
from dataclasses import fields
from pathlib import Path
from typing import Any

import yaml

from .core import ActiveMatchError, MatchConstraints
from .scoremodel import ModelConfig
from .simulator import SimConfig


class ConfigError(ActiveMatchError, ValueError):
    pass


def load_config(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def default_constraints(n_users: int, n_items: int) -> MatchConstraints:
    return MatchConstraints(
        r_min=n_users // n_items, r_max=math.ceil(n_users / n_items), p_min=1, p_max=1
    )


def _pick(cls, section: dict | None, what: str) -> dict:
    section = section or {}
    if not isinstance(section, dict):
        raise ConfigError(f"{what} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    return dict(section)


def model_config(section: dict | None) -> ModelConfig:
    try:
        return ModelConfig(**_pick(ModelConfig, section, "model"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def sim_config(doc: dict[str, Any], n_users: int, n_items: int) -> SimConfig:
    """Build a ``SimConfig`` from a parsed document (flags already merged in)."""
    cons = doc.get("constraints") or {}
    if not isinstance(cons, dict):
        raise ConfigError("constraints must be a mapping")
    try:
        # missing bounds fall back to the defaults for this grid
        constraints = MatchConstraints(**{**default_constraints(n_users, n_items).__dict__, **cons})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"constraints: {exc}") from exc
    sim = _pick(SimConfig, doc.get("simulation"), "simulation")
    for key in ("constraints", "model", "model_grid"):
        if key in sim:
            raise ConfigError(f"simulation.{key} belongs at the top level")
    if "init_observed" in sim and "init_train" not in sim and "init_validation" not in sim:
        n = int(sim["init_observed"])
        sim["init_train"] = math.floor(0.75 * n + 0.5)
        sim["init_validation"] = n - sim["init_train"]
    grid = tuple(model_config(g) for g in doc.get("model_grid") or ())
    try:
        return SimConfig(constraints=constraints, model=model_config(doc.get("model")), model_grid=grid, **sim)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"simulation: {exc}") from exc
