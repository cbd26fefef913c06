"""Advantage actor-critic with a diagonal-Gaussian policy over the thrust box."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import DivergenceError
from .nn import (
    AdamState,
    MlpParams,
    actor_forward,
    adam_update,
    backward,
    clip_by_global_norm,
    critic_forward,
    global_norm,
    init_mlp,
)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class A2cConfig:
    gamma: float = 1.0
    learning_rate: float = 1e-3
    n_rollout: int = 5
    value_loss_weight: float = 0.5
    entropy_weight: float = 0.0
    grad_clip_norm: float = 0.5
    total_steps: int = 500_000
    hidden: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.n_rollout < 1 or self.hidden < 1 or self.total_steps < 0:
            raise ValueError("n_rollout and hidden must be >= 1, total_steps >= 0")
        if self.learning_rate <= 0.0 or self.grad_clip_norm <= 0.0:
            raise ValueError("learning_rate and grad_clip_norm must be positive")


class Env(Protocol):
    observation_dim: int
    action_dim: int

    def reset(self, seed: int | None = None) -> np.ndarray: ...

    def step(self, action): ...


@dataclass
class PolicySample:
    action: np.ndarray
    raw: np.ndarray
    log_prob: float
    mean: np.ndarray
    std: np.ndarray


def gaussian_log_prob(x: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density summed over the last axis."""
    z = (x - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + 0.5 * (1.0 + LOG_2PI)))


def sample_action(actor: MlpParams, observation: np.ndarray, rng: np.random.Generator) -> PolicySample:
    """Draw from N(mean, diag(std^2)); the environment sees the clamped draw."""
    mean = actor_forward(actor, observation)
    std = np.exp(actor.log_std)
    raw = mean + std * rng.standard_normal(mean.shape)
    return PolicySample(
        action=np.clip(raw, -1.0, 1.0),
        raw=raw,
        log_prob=float(gaussian_log_prob(raw, mean, actor.log_std)),
        mean=mean,
        std=std,
    )


@dataclass
class Rollout:
    observations: list[np.ndarray] = field(default_factory=list)
    actions: list[np.ndarray] = field(default_factory=list)  # pre-clamp samples
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    bootstrap_value: float = 0.0

    def add(self, obs, sample: PolicySample, reward: float, value: float, done: bool) -> None:
        self.observations.append(obs)
        self.actions.append(sample.raw)
        self.log_probs.append(sample.log_prob)
        self.rewards.append(reward)
        self.values.append(value)
        self.dones.append(done)

    def __len__(self) -> int:
        return len(self.rewards)


def compute_returns_and_advantages(rollout: Rollout, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """n-step bootstrapped returns and advantages ``G - V``.

    A ``done`` flag cuts the bootstrap: nothing flows back across an episode
    boundary, and if the last transition is terminal the bootstrap value is
    ignored.
    """
    n = len(rollout)
    returns = np.empty(n)
    running = rollout.bootstrap_value
    for t in range(n - 1, -1, -1):
        if rollout.dones[t]:
            running = 0.0
        running = rollout.rewards[t] + gamma * running
        returns[t] = running
    return returns, returns - np.asarray(rollout.values, dtype=float)


@dataclass
class LossReport:
    policy_loss: float
    value_loss: float
    entropy: float
    grad_norm: float


def loss_and_gradients(
    actor: MlpParams, critic: MlpParams, rollout: Rollout, config: A2cConfig
) -> tuple[LossReport, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Losses and unclipped parameter gradients for one rollout.

    Loss = -mean(logp * A) + c_v * mean((G - V)^2) - c_e * entropy, with the
    advantage treated as a constant. ``grad_norm`` in the report is the joint
    norm before clipping.
    """
    if len(rollout) == 0:
        raise ValueError("empty rollout")
    obs = np.asarray(rollout.observations, dtype=float)
    raw = np.asarray(rollout.actions, dtype=float)
    returns, advantages = compute_returns_and_advantages(rollout, config.gamma)
    n = len(rollout)

    mean = actor_forward(actor, obs)
    log_std = actor.log_std
    inv_var = np.exp(-2.0 * log_std)
    diff = raw - mean
    logp = gaussian_log_prob(raw, mean, log_std)
    values = np.atleast_1d(critic_forward(critic, obs))

    policy_loss = -float(np.mean(logp * advantages))
    value_loss = float(np.mean((returns - values) ** 2))
    entropy = gaussian_entropy(log_std)
    total = policy_loss + config.value_loss_weight * value_loss - config.entropy_weight * entropy
    if not math.isfinite(total):
        raise DivergenceError(
            f"non-finite loss (policy {policy_loss}, value {value_loss}, entropy {entropy})"
        )

    w = advantages / n
    d_mean = -(w[:, None] * diff * inv_var)
    actor_grads = backward(actor, obs, d_mean, output="tanh")
    actor_grads["log_std"] = -np.sum(w[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    actor_grads["log_std"] -= config.entropy_weight
    d_value = config.value_loss_weight * 2.0 * (values - returns) / n
    critic_grads = backward(critic, obs, d_value, output="linear")
    report = LossReport(policy_loss, value_loss, entropy, global_norm(actor_grads, critic_grads))
    return report, actor_grads, critic_grads


def update(
    actor: MlpParams,
    critic: MlpParams,
    rollout: Rollout,
    config: A2cConfig,
    adam_actor: AdamState,
    adam_critic: AdamState,
) -> LossReport:
    """One synchronous actor-critic step: gradients of both networks are
    clipped jointly to ``config.grad_clip_norm``, then each gets an Adam step.

    Raises:
        DivergenceError: the loss is not finite; parameters are left untouched.
    """
    report, actor_grads, critic_grads = loss_and_gradients(actor, critic, rollout, config)
    clip_by_global_norm(config.grad_clip_norm, actor_grads, critic_grads)
    adam_update(actor, actor_grads, adam_actor)
    adam_update(critic, critic_grads, adam_critic)
    return report


class A2CAgent:
    """Actor, critic and optimizer state for one learner."""

    def __init__(self, obs_dim: int, action_dim: int, config: A2cConfig, seed: int):
        self.config = config
        init_seq, sample_seq = np.random.SeedSequence(seed).spawn(2)
        init_rng = np.random.default_rng(init_seq)
        self.actor = init_mlp(obs_dim, config.hidden, action_dim, init_rng, with_log_std=True)
        self.critic = init_mlp(obs_dim, config.hidden, 1, init_rng)
        self.rng = np.random.default_rng(sample_seq)
        adam = dict(
            lr=config.learning_rate,
            beta1=config.adam_beta1,
            beta2=config.adam_beta2,
            eps=config.adam_eps,
        )
        self.adam_actor = AdamState.for_params(self.actor, **adam)
        self.adam_critic = AdamState.for_params(self.critic, **adam)
        self.updates = 0

    def act(self, observation: np.ndarray, deterministic: bool = False) -> np.ndarray:
        if deterministic:
            return np.clip(actor_forward(self.actor, observation), -1.0, 1.0)
        return sample_action(self.actor, observation, self.rng).action

    def learn(
        self,
        env: Env,
        total_steps: int,
        on_episode_end: Callable[[int, int, float, dict], None] | None = None,
        on_update: Callable[[LossReport], None] | None = None,
    ) -> int:
        """Interact with ``env`` for ``total_steps`` steps, updating every
        ``n_rollout`` transitions. Returns the number of finished episodes.

        ``on_episode_end(episode, step, reward, info)`` fires after each
        completed training episode.
        """
        obs = env.reset()
        episode_reward = 0.0
        episodes = 0
        steps = 0
        while steps < total_steps:
            rollout = Rollout()
            for _ in range(self.config.n_rollout):
                sample = sample_action(self.actor, obs, self.rng)
                value = critic_forward(self.critic, obs)
                next_obs, reward, done, info = env.step(sample.action)
                rollout.add(obs, sample, reward, value, done)
                steps += 1
                episode_reward += reward
                if done:
                    episodes += 1
                    if on_episode_end is not None:
                        on_episode_end(episodes, steps, episode_reward, info)
                    episode_reward = 0.0
                    obs = env.reset()
                else:
                    obs = next_obs
                if steps >= total_steps:
                    break
            rollout.bootstrap_value = 0.0 if rollout.dones[-1] else critic_forward(self.critic, obs)
            report = update(self.actor, self.critic, rollout, self.config, self.adam_actor, self.adam_critic)
            self.updates += 1
            if on_update is not None:
                on_update(report)
        return episodes
