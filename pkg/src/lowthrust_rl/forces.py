"""Acceleration contributions and the thruster mass-flow model.

Every function returns km/s^2. Thrust enters in mN and solar pressure in
N/m^2; both are converted to km-based units here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .astro import CONSTANTS, Constants, Epoch, StateVector
from .ephemeris import moon_position, sun_position
from .gravity import GravityCoefficients, harmonics_accel, load_default_field

SUN = "sun"
MOON = "moon"


@dataclass(frozen=True)
class DynamicsProfile:
    """Which force rows are active. Degree 0 means point-mass gravity only."""

    harmonics_degree: int = 0
    harmonics_order: int = 0
    third_bodies: frozenset[str] = frozenset()
    srp_enabled: bool = False
    thruster_noise_stddev: float = 0.0

    def __post_init__(self) -> None:
        if not self.harmonics_degree >= self.harmonics_order >= 0:
            raise ValueError("harmonics degree must be >= order >= 0")
        if self.thruster_noise_stddev < 0.0:
            raise ValueError("thruster noise stddev must be non-negative")
        object.__setattr__(self, "third_bodies", frozenset(b.lower() for b in self.third_bodies))
        unknown = self.third_bodies - {SUN, MOON}
        if unknown:
            raise ValueError(f"unknown third bodies: {sorted(unknown)}")

    @classmethod
    def training(cls) -> DynamicsProfile:
        return cls()

    @classmethod
    def evaluation(cls) -> DynamicsProfile:
        return cls(16, 16, frozenset({SUN, MOON}), True, 0.10)

    @property
    def gravity(self) -> GravityCoefficients | None:
        if self.harmonics_degree == 0:
            return None
        return _default_field(self.harmonics_degree, self.harmonics_order)


@lru_cache(maxsize=8)
def _default_field(degree: int, order: int) -> GravityCoefficients:
    return load_default_field(degree, order)


@dataclass(frozen=True)
class SatelliteParams:
    f_max: float = 10.0  # mN per thruster pair
    isp: float = 4000.0  # s
    area: float = 1.0  # m^2
    reflection_coeff: float = 2.0

    def __post_init__(self) -> None:
        for name in ("f_max", "isp", "area"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not 1.0 <= self.reflection_coeff <= 2.0:
            raise ValueError("reflection coefficient must lie in [1, 2]")


@dataclass(frozen=True)
class ThrustCommand:
    """Normalized per-axis force along the GCRF axes, clamped to [-1, 1]."""

    normalized_force: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        cmd = np.clip(np.asarray(self.normalized_force, dtype=float).reshape(3), -1.0, 1.0)
        object.__setattr__(self, "normalized_force", cmd)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.normalized_force)


def point_mass_accel(position: np.ndarray, mu: float = CONSTANTS.mu_earth) -> np.ndarray:
    r = np.asarray(position, dtype=float)
    r_norm = math.sqrt(float(r @ r))
    return -mu * r / r_norm**3


def third_body_accel(position: np.ndarray, body_position: np.ndarray, mu_body: float) -> np.ndarray:
    """Tidal acceleration from a body at ``body_position`` (Earth-centred)."""
    rb = np.asarray(body_position, dtype=float)
    d = rb - np.asarray(position, dtype=float)
    d_norm = math.sqrt(float(d @ d))
    rb_norm = math.sqrt(float(rb @ rb))
    return mu_body * (d / d_norm**3 - rb / rb_norm**3)


def in_umbra(position: np.ndarray, sun_pos: np.ndarray, earth_radius: float = CONSTANTS.earth_radius) -> bool:
    """Cylindrical Earth shadow test."""
    s_hat = sun_pos / math.sqrt(float(sun_pos @ sun_pos))
    along = float(position @ s_hat)
    if along >= 0.0:
        return False
    perp = position - along * s_hat
    return float(perp @ perp) < earth_radius**2


def srp_accel(
    position: np.ndarray,
    sun_pos: np.ndarray,
    params: SatelliteParams,
    mass: float,
    constants: Constants = CONSTANTS,
) -> np.ndarray:
    """Cannonball radiation pressure pushing away from the Sun, zero in umbra."""
    if in_umbra(position, sun_pos, constants.earth_radius):
        return np.zeros(3)
    u = np.asarray(position, dtype=float) - sun_pos
    dist = math.sqrt(float(u @ u))
    pressure = constants.solar_pressure * (constants.au / dist) ** 2
    # N/kg = m/s^2 -> km/s^2
    magnitude = pressure * params.reflection_coeff * params.area / mass * 1e-3
    return magnitude * u / dist


def thrust_accel_and_mdot(
    cmd: np.ndarray,
    params: SatelliteParams,
    mass: float,
    noise_draw: np.ndarray | None = None,
    constants: Constants = CONSTANTS,
) -> tuple[np.ndarray, float]:
    """Thrust acceleration [km/s^2] and mass flow [kg/s] for a normalized command.

    Each axis is an independent thruster pair, so propellant flow is the sum
    of the per-axis force magnitudes. ``noise_draw`` holds the multiplicative
    per-axis errors.
    """
    force = np.clip(np.asarray(cmd, dtype=float), -1.0, 1.0) * (params.f_max * 1e-3)  # N
    if noise_draw is not None:
        force = force * (1.0 + np.asarray(noise_draw, dtype=float))
    mdot = -float(np.sum(np.abs(force))) / (params.isp * constants.g0)
    return force / mass * 1e-3, mdot


def draw_thruster_noise(profile: DynamicsProfile, rng: np.random.Generator | None) -> np.ndarray | None:
    """One multiplicative error per axis for a whole environment step."""
    if profile.thruster_noise_stddev == 0.0 or rng is None:
        return None
    return rng.normal(0.0, profile.thruster_noise_stddev, size=3)


def gravity_accel(position: np.ndarray, epoch: Epoch, profile: DynamicsProfile, constants: Constants = CONSTANTS) -> np.ndarray:
    coeffs = profile.gravity
    if coeffs is None:
        return point_mass_accel(position, constants.mu_earth)
    return harmonics_accel(position, coeffs, epoch)


def perturbation_accel(
    position: np.ndarray,
    mass: float,
    epoch: Epoch,
    profile: DynamicsProfile,
    params: SatelliteParams,
    constants: Constants = CONSTANTS,
) -> np.ndarray:
    """Third-body and radiation-pressure terms (gravity field excluded)."""
    accel = np.zeros(3)
    sun = None
    if SUN in profile.third_bodies or profile.srp_enabled:
        sun = sun_position(epoch)
    if SUN in profile.third_bodies:
        accel += third_body_accel(position, sun, constants.mu_sun)
    if MOON in profile.third_bodies:
        accel += third_body_accel(position, moon_position(epoch), constants.mu_moon)
    if profile.srp_enabled:
        accel += srp_accel(position, sun, params, mass, constants)
    return accel


def total_accel(
    state: StateVector,
    cmd: np.ndarray,
    profile: DynamicsProfile,
    params: SatelliteParams,
    noise_draw: np.ndarray | None = None,
    constants: Constants = CONSTANTS,
) -> tuple[np.ndarray, float]:
    """Sum of the contributions enabled by ``profile`` and the mass flow."""
    thrust, mdot = thrust_accel_and_mdot(cmd, params, state.mass, noise_draw, constants)
    accel = gravity_accel(state.position, state.epoch, profile, constants) + thrust
    if profile.third_bodies or profile.srp_enabled:
        accel = accel + perturbation_accel(
            state.position, state.mass, state.epoch, profile, params, constants
        )
    return accel, mdot


def make_rhs(
    cmd: np.ndarray,
    profile: DynamicsProfile,
    params: SatelliteParams,
    epoch0: Epoch,
    noise_draw: np.ndarray | None = None,
    constants: Constants = CONSTANTS,
) -> Callable[[float, np.ndarray], np.ndarray]:
    """Right-hand side ``f(t, y)`` of the 7-state ODE with the command held fixed.

    ``t`` is seconds since ``epoch0``.
    """
    force = np.clip(np.asarray(cmd, dtype=float), -1.0, 1.0) * (params.f_max * 1e-3)
    if noise_draw is not None:
        force = force * (1.0 + np.asarray(noise_draw, dtype=float))
    force_km = force * 1e-3
    mdot = -float(np.sum(np.abs(force))) / (params.isp * constants.g0)
    mu = constants.mu_earth
    t0 = epoch0.seconds_since_t0
    simple = profile.gravity is None and not profile.third_bodies and not profile.srp_enabled

    if simple:
        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            r = y[0:3]
            r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
            k = -mu / (r2 * math.sqrt(r2))
            out = np.empty(7)
            out[0:3] = y[3:6]
            out[3:6] = k * r + force_km / y[6]
            out[6] = mdot
            return out

        return rhs

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        epoch = Epoch(t0 + t)
        r = y[0:3]
        accel = gravity_accel(r, epoch, profile, constants) + force_km / y[6]
        accel += perturbation_accel(r, y[6], epoch, profile, params, constants)
        out = np.empty(7)
        out[0:3] = y[3:6]
        out[3:6] = accel
        out[6] = mdot
        return out

    return rhs
