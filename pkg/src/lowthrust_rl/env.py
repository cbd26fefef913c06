"""Episodic pericenter-raising environment with a single terminal reward.

The interface follows the usual ``reset(seed) -> obs`` /
``step(action) -> (obs, reward, done, info)`` loop so external agents can
drive it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .astro import (
    TWO_PI,
    Epoch,
    OrbitalElements,
    StateVector,
    cartesian_to_elements,
    elements_to_cartesian,
    orbital_period,
)
from .errors import EpisodeDoneError, PropellantExhaustedError
from .forces import DynamicsProfile, SatelliteParams
from .propagate import IntegratorConfig, propagate_step

OBS_DIM = 8
ACTION_DIM = 3


@dataclass(frozen=True)
class RewardWeights:
    """Terminal reward weights: pericenter and apocenter per km, mass per kg."""

    w_rp: float = 0.1
    w_ra: float = 0.1
    w_m: float = 20.0

    def __post_init__(self) -> None:
        if min(self.w_rp, self.w_ra, self.w_m) <= 0.0:
            raise ValueError("reward weights must be positive")


def terminal_reward(d_rp: float, d_ra: float, d_m: float, weights: RewardWeights = RewardWeights()) -> float:
    """Reward for pericenter gain ``d_rp`` [km], apocenter change ``d_ra`` [km]
    and mass change ``d_m`` [kg, non-positive]."""
    return weights.w_rp * d_rp - weights.w_ra * abs(d_ra) + weights.w_m * d_m


@dataclass(frozen=True)
class EpisodeConfig:
    dt: float = 300.0  # s
    n_steps: int = 166
    weights: RewardWeights = field(default_factory=RewardWeights)
    ra0: float = 11000.0  # km
    rp0: float = 9000.0  # km
    i0: float = math.pi / 3
    raan0: float = 2 * math.pi / 3
    argp0: float = 4 * math.pi / 3
    m0: float = 100.0  # kg
    d_char: float = 22000.0  # km
    v_char: float = 8.0  # km/s
    profile: DynamicsProfile = field(default_factory=DynamicsProfile.training)
    satellite: SatelliteParams = field(default_factory=SatelliteParams)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dt <= 0.0 or self.n_steps < 1:
            raise ValueError("dt must be positive and n_steps at least 1")
        if not self.ra0 >= self.rp0 > 0.0:
            raise ValueError("require ra0 >= rp0 > 0")
        if min(self.m0, self.d_char, self.v_char) <= 0.0:
            raise ValueError("m0, d_char and v_char must be positive")

    def initial_elements(self, mean_anomaly: float) -> OrbitalElements:
        return OrbitalElements.from_apsides(
            self.ra0, self.rp0, self.i0, self.raan0, self.argp0, mean_anomaly
        )

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    def orbits_per_episode(self) -> float:
        return self.duration / orbital_period(0.5 * (self.ra0 + self.rp0))


def normalize_observation(state: StateVector, config: EpisodeConfig) -> np.ndarray:
    """Map (t, r, v, m) to the 8-vector seen by the agent, clamped to [-1, 1]."""
    obs = np.empty(OBS_DIM)
    obs[0] = 2.0 * state.epoch.seconds_since_t0 / config.duration - 1.0
    obs[1:4] = state.position / config.d_char
    obs[4:7] = state.velocity / config.v_char
    obs[7] = 2.0 * state.mass / config.m0 - 1.0
    return np.clip(obs, -1.0, 1.0)


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict

    def __iter__(self):
        return iter((self.observation, self.reward, self.done, self.info))


class SatelliteEnv:
    """Pericenter raising of a MEO satellite with three inertially fixed thruster pairs.

    ``reset`` draws the initial mean anomaly uniformly from a seeded
    generator; thruster errors, when the profile enables them, come from an
    independent stream spawned from the same seed.
    """

    observation_dim = OBS_DIM
    action_dim = ACTION_DIM

    def __init__(self, config: EpisodeConfig | None = None):
        self.config = config or EpisodeConfig()
        self._seed_seq = np.random.SeedSequence(self.config.seed)
        self._anomaly_rng, self._noise_rng = (
            np.random.default_rng(s) for s in self._seed_seq.spawn(2)
        )
        self.state: StateVector | None = None
        self.step_count = 0
        self.done = True
        self.initial_ra = self.initial_rp = math.nan
        self.mean_anomaly0 = math.nan

    def reset(self, seed: int | None = None, mean_anomaly: float | None = None) -> np.ndarray:
        if seed is not None:
            self._anomaly_rng, self._noise_rng = (
                np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
            )
        cfg = self.config
        m0 = self._anomaly_rng.uniform(0.0, TWO_PI) if mean_anomaly is None else mean_anomaly
        el = cfg.initial_elements(m0)
        self.mean_anomaly0 = el.mean_anomaly
        r, v = elements_to_cartesian(el)
        self.state = StateVector(Epoch(0.0), r, v, cfg.m0)
        osc = cartesian_to_elements(r, v)
        self.initial_ra, self.initial_rp = osc.ra, osc.rp
        self.step_count = 0
        self.done = False
        return normalize_observation(self.state, cfg)

    def _info(self) -> dict:
        osc = cartesian_to_elements(self.state.position, self.state.velocity)
        return {
            "ra": osc.ra,
            "rp": osc.rp,
            "mass": self.state.mass,
            "state": self.state,
            "step": self.step_count,
            "truncated": False,
        }

    def step(self, action) -> StepOutcome:
        if self.done:
            raise EpisodeDoneError("episode is over; call reset() first")
        cmd = np.clip(np.asarray(action, dtype=float).reshape(ACTION_DIM), -1.0, 1.0)
        if not np.all(np.isfinite(cmd)):
            raise ValueError(f"action must be finite, got {action}")
        cfg = self.config
        truncated = False
        try:
            self.state = propagate_step(
                self.state, cmd, cfg.profile, cfg.satellite, cfg.integrator, cfg.dt, self._noise_rng
            )
        except PropellantExhaustedError:
            truncated = True
        self.step_count += 1
        info = self._info()
        info["action"] = cmd
        reward = 0.0
        if truncated or self.step_count >= cfg.n_steps:
            self.done = True
            info["truncated"] = truncated
            info["d_rp"] = info["rp"] - self.initial_rp
            info["d_ra"] = info["ra"] - self.initial_ra
            info["d_m"] = info["mass"] - cfg.m0
            reward = terminal_reward(info["d_rp"], info["d_ra"], info["d_m"], cfg.weights)
        return StepOutcome(normalize_observation(self.state, cfg), reward, self.done, info)
