"""Cross-entropy method over linear policies (desk-scale trainer)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from armada.env.core import EpisodeConfig, make_rng, task_config
from armada.env.policies import LinearPolicy
from armada.env.rollout import run_episodes

TRAINABLE_TASKS = ("card-lite",)


@dataclass
class CemResult:
    mean: np.ndarray  # final parameter mean
    std: np.ndarray
    curve: np.ndarray  # mean population return per iteration
    elite_curve: np.ndarray  # mean elite return per iteration
    best_params: np.ndarray
    best_return: float


def train_cem(task: str = "card-lite", iterations: int = 30, population: int = 64, elite_frac: float = 0.2,
              seed: int = 0, episodes_per_candidate: int = 2, init_std: float = 0.3, min_std: float = 0.02,
              fixed_seeds: bool = True, config: EpisodeConfig | None = None, callback=None) -> CemResult:
    """Fit a :class:`LinearPolicy` by the cross-entropy method.

    Every candidate in an iteration sees the same episode seeds, so returns
    are compared under common random numbers.  With ``fixed_seeds`` the
    same training episodes are reused every iteration, which makes the
    learning curve comparable across iterations.
    """
    if task not in TRAINABLE_TASKS:
        raise ValueError(f"task {task!r} is not trainable; valid: {', '.join(TRAINABLE_TASKS)}")
    if iterations < 1 or population < 1 or episodes_per_candidate < 1:
        raise ValueError("iterations, population and episodes_per_candidate must be >= 1")
    if not 0 < elite_frac <= 1:
        raise ValueError("elite_frac must be in (0, 1]")
    if population < 2:
        warnings.warn("population of 1: the distribution only follows its single sample", stacklevel=2)
    config = config or task_config(task)
    rng = make_rng(seed)
    n = LinearPolicy.n_params()
    mean = np.zeros(n)
    std = np.full(n, init_std)
    n_elite = max(1, int(round(elite_frac * population)))
    curve, elite_curve = [], []
    best_params, best_return = mean.copy(), -np.inf
    seeds = [int(s) for s in rng.integers(0, 2**31 - 1, episodes_per_candidate)]
    for it in range(iterations):
        samples = mean + std * rng.standard_normal((population, n))
        if not fixed_seeds and it > 0:
            seeds = [int(s) for s in rng.integers(0, 2**31 - 1, episodes_per_candidate)]
        returns = np.empty(population)
        for k in range(population):
            params = samples[k]
            traces = run_episodes(lambda p=params: LinearPolicy(p), config, seeds)
            returns[k] = np.mean([traces[s].total_return for s in seeds])
        order = np.argsort(-returns, kind="stable")
        elite = samples[order[:n_elite]]
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), min_std) if n_elite > 1 else np.maximum(std * 0.9, min_std)
        curve.append(float(returns.mean()))
        elite_curve.append(float(returns[order[:n_elite]].mean()))
        if returns[order[0]] > best_return:
            best_return = float(returns[order[0]])
            best_params = samples[order[0]].copy()
        if callback is not None:
            callback(it, curve[-1], elite_curve[-1])
    return CemResult(mean, std, np.array(curve), np.array(elite_curve), best_params, best_return)
