"""Adaptive Dormand-Prince 8(5,3) propagation of the (r, v, m) state."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _dop853 as tableau
from .astro import StateVector
from .errors import IntegrationError, PropellantExhaustedError
from .forces import DynamicsProfile, SatelliteParams, draw_thruster_noise, make_rhs

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
_ERR_EXPONENT = -1.0 / 8.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Step-size bounds [s] and per-component error tolerances."""

    min_step: float = 1.0
    max_step: float = 1000.0
    initial_step: float = 100.0
    abs_tol_position: float = 1e-3  # km
    abs_tol_velocity: float = 1e-10  # km/s
    abs_tol_mass: float = 1e-9  # kg
    rel_tol: float = 1e-12
    method_order: str = "8(5,3)"

    def __post_init__(self) -> None:
        if not 0.0 < self.min_step <= self.max_step:
            raise ValueError("require 0 < min_step <= max_step")
        tols = (self.abs_tol_position, self.abs_tol_velocity, self.abs_tol_mass, self.rel_tol)
        if min(tols) <= 0.0:
            raise ValueError("tolerances must be positive")

    @property
    def abs_tol(self) -> np.ndarray:
        return np.array([self.abs_tol_position] * 3 + [self.abs_tol_velocity] * 3 + [self.abs_tol_mass])


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0
    min_h: float = math.inf
    max_h: float = 0.0


def _dop853_step(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t: float,
    y: np.ndarray,
    f0: np.ndarray,
    h: float,
    k: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One trial step; returns (y_new, 5th-order error, 3rd-order error)."""
    k[0] = f0
    a, c = tableau.A, tableau.C
    for s in range(1, tableau.N_STAGES):
        k[s] = rhs(t + c[s] * h, y + h * (a[s, :s] @ k[:s]))
    y_new = y + h * (tableau.B @ k)
    err5 = tableau.E5[:-1] @ k
    err3 = tableau.E3[:-1] @ k
    return y_new, err5, err3


def _error_norm(err5: np.ndarray, err3: np.ndarray, h: float, scale: np.ndarray) -> float:
    e5 = float(np.sum((err5 / scale) ** 2))
    e3 = float(np.sum((err3 / scale) ** 2))
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    denom = e5 + 0.01 * e3
    return abs(h) * e5 / math.sqrt(denom * scale.size)


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    duration: float,
    config: IntegratorConfig = IntegratorConfig(),
    stats: StepStats | None = None,
) -> np.ndarray:
    """Integrate ``y' = rhs(t, y)`` from t=0 to ``duration`` with step control.

    Raises:
        IntegrationError: tolerance not met at ``config.min_step``.
        PropellantExhaustedError: the mass component reached zero.
    """
    if not duration > 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    atol = config.abs_tol
    rtol = config.rel_tol
    k = np.empty((tableau.N_STAGES, y0.size))
    t = 0.0
    y = np.array(y0, dtype=float)
    f = rhs(t, y)
    h = min(max(config.initial_step, config.min_step), config.max_step)
    n_eval = 1
    while t < duration:
        remaining = duration - t
        last = h >= remaining
        h_try = remaining if last else h
        y_new, err5, err3 = _dop853_step(rhs, t, y, f, h_try, k)
        n_eval += tableau.N_STAGES - 1
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _error_norm(err5, err3, h_try, scale)
        if not math.isfinite(err):
            raise IntegrationError(f"non-finite error estimate at t={t:.3f} s")
        if err > 1.0:
            if stats is not None:
                stats.rejected += 1
            if h_try <= config.min_step:
                raise IntegrationError(
                    f"step size underflow at t={t:.3f} s (h={h_try:.3g} s, error {err:.3g})"
                )
            factor = max(MIN_FACTOR, SAFETY * err**_ERR_EXPONENT)
            h = max(config.min_step, h_try * factor)
            continue
        if y_new[6] <= 0.0:
            raise PropellantExhaustedError(f"propellant exhausted at t={t + h_try:.3f} s")
        if stats is not None:
            stats.accepted += 1
            stats.min_h = min(stats.min_h, h_try)
            stats.max_h = max(stats.max_h, h_try)
        t = duration if last else t + h_try
        y = y_new
        factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err**_ERR_EXPONENT)
        h = min(config.max_step, max(config.min_step, h_try * factor))
        if t < duration:
            f = rhs(t, y)
            n_eval += 1
    if stats is not None:
        stats.evaluations += n_eval
    return y


def propagate_step(
    state: StateVector,
    cmd: np.ndarray,
    profile: DynamicsProfile,
    params: SatelliteParams,
    config: IntegratorConfig,
    duration: float,
    rng: np.random.Generator | None = None,
    stats: StepStats | None = None,
) -> StateVector:
    """Advance ``state`` by ``duration`` seconds with the command held constant.

    Thruster errors, when the profile enables them, are drawn once from
    ``rng`` and held for the whole step.
    """
    noise = draw_thruster_noise(profile, rng)
    rhs = make_rhs(cmd, profile, params, state.epoch, noise)
    y0 = state.as_array()
    # mass flow is constant under a held command, so exhaustion is known up front
    mdot = rhs(0.0, y0)[6]
    if state.mass + mdot * duration <= 0.0:
        raise PropellantExhaustedError(
            f"propellant exhausted {-state.mass / mdot:.3f} s into a {duration:.3f} s step"
        )
    y = integrate(rhs, y0, duration, config, stats)
    return StateVector.from_array(state.epoch + duration, y)


def dense_sample(
    state: StateVector,
    cmd: np.ndarray,
    profile: DynamicsProfile,
    params: SatelliteParams,
    config: IntegratorConfig,
    duration: float,
    n_samples: int,
    rng: np.random.Generator | None = None,
) -> list[StateVector]:
    """States at ``n_samples`` equally spaced epochs spanning one held command."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    noise = draw_thruster_noise(profile, rng)
    rhs = make_rhs(cmd, profile, params, state.epoch, noise)
    times = np.linspace(0.0, duration, n_samples)
    out = [state]
    y = state.as_array()
    for t_prev, t_next in zip(times[:-1], times[1:]):
        # rhs is parameterized by time since the segment start epoch
        seg = _shifted(rhs, t_prev)
        y = integrate(seg, y, t_next - t_prev, config)
        out.append(StateVector.from_array(state.epoch + t_next, y))
    return out


def _shifted(rhs: Callable[[float, np.ndarray], np.ndarray], offset: float):
    if offset == 0.0:
        return rhs
    return lambda t, y: rhs(t + offset, y)
