"""Episode rollouts, evaluation over seeds, and trace export."""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from armada.env.core import ArmadaEnv, EpisodeConfig


@dataclass
class EpisodeTrace:
    seed: int
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    infos: list = field(default_factory=list)

    @property
    def total_return(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def success(self) -> bool:
        return bool(self.infos and self.infos[-1].success)

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def final_kp_error(self) -> float:
        return self.infos[-1].kp_error if self.infos else float("nan")

    def to_jsonl(self) -> str:
        lines = []
        for k, (obs, act, rew, info) in enumerate(zip(self.observations, self.actions, self.rewards, self.infos)):
            rec = {
                "seed": self.seed,
                "tick": k,
                "obs": [float(v) for v in obs.flat()],
                "action": [float(v) for v in act],
                "reward": float(rew),
                "done": info.reason is not None,
                "reason": info.reason,
                "clamped": info.clamped,
                "kp_error": info.kp_error,
            }
            lines.append(json.dumps(rec))
        return "\n".join(lines) + ("\n" if lines else "")


def rollout(policy, config: EpisodeConfig, seed: int | None = None, env: ArmadaEnv | None = None,
            record: bool = True) -> EpisodeTrace:
    env = env or ArmadaEnv(config)
    seed = config.seed if seed is None else seed
    obs = env.reset(seed)
    policy.reset(seed)
    trace = EpisodeTrace(seed)
    done = False
    while not done:
        action = policy(obs)
        next_obs, reward, done, info = env.step(action)
        if record:
            trace.observations.append(obs)
        trace.actions.append(next_obs.prev_action)
        trace.rewards.append(reward)
        trace.infos.append(info)
        obs = next_obs
    return trace


def worker_count() -> int:
    cap = os.environ.get("ARMADA_SIM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def run_episodes(make_policy, config: EpisodeConfig, seeds, record: bool = False) -> dict[int, EpisodeTrace]:
    """Run one episode per seed; results are keyed by seed.

    ``make_policy`` builds a fresh policy per episode so threads share no
    state.  Each episode's randomness depends only on its seed.
    """
    seeds = list(seeds)

    def one(seed):
        return seed, rollout(make_policy(), config, seed, record=record)

    workers = min(worker_count(), len(seeds)) or 1
    if workers == 1:
        return dict(map(one, seeds))
    with ThreadPoolExecutor(workers) as pool:
        return dict(pool.map(one, seeds))


@dataclass
class Evaluation:
    traces: dict

    @property
    def success_rate(self) -> float:
        return float(np.mean([t.success for t in self.traces.values()]))

    @property
    def mean_return(self) -> float:
        return float(np.mean([t.total_return for t in self.traces.values()]))

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "success", "steps", "final_kp_err"])
        for seed in sorted(self.traces):
            t = self.traces[seed]
            w.writerow([seed, int(t.success), t.steps, f"{t.final_kp_error:.6f}"])
        return buf.getvalue()


def evaluate(make_policy, config: EpisodeConfig, n_episodes: int, base_seed: int = 0,
             record: bool = False) -> Evaluation:
    """Success statistics over seeds ``base_seed .. base_seed + n - 1``."""
    return Evaluation(run_episodes(make_policy, config, range(base_seed, base_seed + n_episodes), record))
