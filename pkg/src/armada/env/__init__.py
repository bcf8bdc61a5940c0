"""Tabletop MDPs, policies, rollouts and a CEM trainer."""
from armada.env.core import (
    ACTION_DIM, OBS_DIM, TASKS, ActionBounds, ArmadaEnv, EnvError, EpisodeConfig, Observation, Region,
    RewardWeights, StepInfo, make_rng, project_keypoints, task_config,
)
from armada.env.policies import (
    POLICIES, LinearPolicy, Policy, RandomPolicy, ScriptedPushPolicy, ZeroPolicy, linear_features, make_policy,
)
from armada.env.rollout import EpisodeTrace, Evaluation, evaluate, rollout, run_episodes
from armada.env.train import CemResult, train_cem

__all__ = [
    "ACTION_DIM", "OBS_DIM", "TASKS", "ActionBounds", "ArmadaEnv", "EnvError", "EpisodeConfig", "Observation",
    "Region", "RewardWeights", "StepInfo", "make_rng", "project_keypoints", "task_config", "POLICIES",
    "LinearPolicy", "Policy", "RandomPolicy", "ScriptedPushPolicy", "ZeroPolicy", "linear_features",
    "make_policy", "EpisodeTrace", "Evaluation", "evaluate", "rollout", "run_episodes", "CemResult", "train_cem",
]
