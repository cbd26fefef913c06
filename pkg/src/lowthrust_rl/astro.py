"""Time, constants and two-body orbital element conversions.

Internal units are km, km/s, kg and s throughout. Positions and velocities
are expressed in the inertial GCRF frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import UnboundOrbitError

TWO_PI = 2.0 * math.pi

# Reference epoch of every episode.
T0_UTC = datetime(2022, 6, 16, 0, 0, 0, tzinfo=timezone.utc)
JD_T0_UTC = 2459746.5
# TAI-UTC was 37 s on the reference date; TT = TAI + 32.184 s.
TT_MINUS_UTC = 69.184
JD_J2000 = 2451545.0
SECONDS_PER_DAY = 86400.0

SINGULAR_TOL = 1e-11


@dataclass(frozen=True)
class Constants:
    """Physical constants shared by every force and conversion."""

    mu_earth: float = 398600.4418  # km^3/s^2
    g0: float = 9.80665  # m/s^2
    earth_radius: float = 6378.137  # km
    mu_sun: float = 1.32712440018e11  # km^3/s^2
    mu_moon: float = 4902.800066  # km^3/s^2
    au: float = 149597870.7  # km
    solar_pressure: float = 4.56e-6  # N/m^2 at 1 AU
    earth_rotation_rate: float = 7.2921158553e-5  # rad/s

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not value > 0.0:
                raise ValueError(f"constant {name} must be strictly positive, got {value}")


CONSTANTS = Constants()
MU_EARTH = CONSTANTS.mu_earth


@dataclass(frozen=True, order=True)
class Epoch:
    """Elapsed seconds since the fixed scenario epoch ``T0_UTC``."""

    seconds_since_t0: float = 0.0

    def __add__(self, seconds: float) -> Epoch:
        return Epoch(self.seconds_since_t0 + float(seconds))

    @property
    def t0_utc(self) -> datetime:
        return T0_UTC

    @property
    def utc(self) -> datetime:
        return T0_UTC + timedelta(seconds=self.seconds_since_t0)

    @property
    def jd_utc(self) -> float:
        return JD_T0_UTC + self.seconds_since_t0 / SECONDS_PER_DAY

    def julian_centuries_tt(self) -> float:
        """Julian centuries of TT elapsed since J2000.0."""
        jd_tt = self.jd_utc + TT_MINUS_UTC / SECONDS_PER_DAY
        return (jd_tt - JD_J2000) / 36525.0

    def gmst(self) -> float:
        """Greenwich mean sidereal angle [rad] from the linear model (UT1 ~ UTC)."""
        d = self.jd_utc - JD_J2000
        deg = 280.46061837 + 360.98564736629 * d
        return math.radians(deg % 360.0)


def normalize_angle(angle: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    wrapped = math.fmod(angle, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


@dataclass(frozen=True)
class OrbitalElements:
    """Classical Keplerian elements; angles in radians, ``a`` in km."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    mean_anomaly: float

    def __post_init__(self) -> None:
        if not self.a > 0.0:
            raise ValueError(f"semi-major axis must be positive, got {self.a}")
        if not 0.0 <= self.e < 1.0:
            raise ValueError(f"eccentricity must lie in [0, 1), got {self.e}")
        if not 0.0 <= self.i <= math.pi:
            raise ValueError(f"inclination must lie in [0, pi], got {self.i}")

    @classmethod
    def from_apsides(
        cls, ra: float, rp: float, i: float, raan: float, argp: float, mean_anomaly: float
    ) -> OrbitalElements:
        """Build elements from apocenter and pericenter radii."""
        a = 0.5 * (ra + rp)
        e = (ra - rp) / (ra + rp)
        return cls(
            a, e, i, normalize_angle(raan), normalize_angle(argp), normalize_angle(mean_anomaly)
        )

    @property
    def ra(self) -> float:
        return self.a * (1.0 + self.e)

    @property
    def rp(self) -> float:
        return self.a * (1.0 - self.e)

    def with_mean_anomaly(self, mean_anomaly: float) -> OrbitalElements:
        return replace(self, mean_anomaly=normalize_angle(mean_anomaly))


@dataclass
class StateVector:
    """Propagated truth: epoch, GCRF position/velocity and spacecraft mass."""

    epoch: Epoch
    position: np.ndarray
    velocity: np.ndarray
    mass: float

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.mass = float(self.mass)

    def as_array(self) -> np.ndarray:
        """The 7-vector (x, y, z, vx, vy, vz, m) integrated by the propagator."""
        return np.concatenate((self.position, self.velocity, [self.mass]))

    @classmethod
    def from_array(cls, epoch: Epoch, y: np.ndarray) -> StateVector:
        return cls(epoch, y[0:3].copy(), y[3:6].copy(), float(y[6]))


def solve_kepler(mean_anomaly: float, e: float, tol: float = 1e-14, max_iter: int = 60) -> float:
    """Solve Kepler's equation ``E - e sin E = M`` for the eccentric anomaly.

    Newton iteration seeded with ``M + e sin M``; any iterate that leaves the
    bracket ``[M - e, M + e]`` (which always contains the root) is replaced by
    a bisection step, so the solver converges for every ``0 <= e < 1``.
    """
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must lie in [0, 1), got {e}")
    m = normalize_angle(mean_anomaly)
    if e == 0.0:
        return m
    lo, hi = m - e, m + e
    ecc = m + e * math.sin(m)
    for _ in range(max_iter):
        f = ecc - e * math.sin(ecc) - m
        if abs(f) < tol:
            return ecc
        if f > 0.0:
            hi = min(hi, ecc)
        else:
            lo = max(lo, ecc)
        step = ecc - f / (1.0 - e * math.cos(ecc))
        if not lo <= step <= hi:
            step = 0.5 * (lo + hi)
        if step == ecc:
            return ecc
        ecc = step
    raise RuntimeError(f"Kepler solver did not converge for M={mean_anomaly}, e={e}")


def true_from_eccentric(ecc_anomaly: float, e: float) -> float:
    beta = math.sqrt(1.0 - e * e)
    return normalize_angle(
        math.atan2(beta * math.sin(ecc_anomaly), math.cos(ecc_anomaly) - e)
    )


def mean_from_true(nu: float, e: float) -> float:
    ecc_anomaly = math.atan2(math.sqrt(1.0 - e * e) * math.sin(nu), e + math.cos(nu))
    return normalize_angle(ecc_anomaly - e * math.sin(ecc_anomaly))


def elements_to_cartesian(
    el: OrbitalElements, mu: float = MU_EARTH
) -> tuple[np.ndarray, np.ndarray]:
    """Position [km] and velocity [km/s] for a set of Keplerian elements."""
    ecc_anomaly = solve_kepler(el.mean_anomaly, el.e)
    cos_e, sin_e = math.cos(ecc_anomaly), math.sin(ecc_anomaly)
    beta = math.sqrt(1.0 - el.e * el.e)
    # perifocal coordinates
    x_pf = el.a * (cos_e - el.e)
    y_pf = el.a * beta * sin_e
    rate = math.sqrt(mu / el.a) / (1.0 - el.e * cos_e)
    vx_pf = -rate * sin_e
    vy_pf = rate * beta * cos_e

    cw, sw = math.cos(el.argp), math.sin(el.argp)
    co, so = math.cos(el.raan), math.sin(el.raan)
    ci, si = math.cos(el.i), math.sin(el.i)
    p = np.array([co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si])
    q = np.array([-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si])
    return x_pf * p + y_pf * q, vx_pf * p + vy_pf * q


def cartesian_to_elements(
    position: np.ndarray, velocity: np.ndarray, mu: float = MU_EARTH
) -> OrbitalElements:
    """Osculating Keplerian elements of a bound Cartesian state.

    For a circular orbit the argument of pericenter is reported as 0 and the
    anomaly measured from the node; for an equatorial orbit the node is 0 and
    the pericenter longitude is reported as the argument of pericenter.

    Raises:
        UnboundOrbitError: if the specific orbital energy is not negative.
    """
    r_vec = np.asarray(position, dtype=float)
    v_vec = np.asarray(velocity, dtype=float)
    r = math.sqrt(float(r_vec @ r_vec))
    v2 = float(v_vec @ v_vec)
    energy = 0.5 * v2 - mu / r
    if energy >= 0.0:
        raise UnboundOrbitError(f"state is not a bound orbit (specific energy {energy:.6g})")
    a = -mu / (2.0 * energy)

    h_vec = np.cross(r_vec, v_vec)
    h = math.sqrt(float(h_vec @ h_vec))
    e_vec = np.cross(v_vec, h_vec) / mu - r_vec / r
    e = math.sqrt(float(e_vec @ e_vec))
    i = math.acos(max(-1.0, min(1.0, h_vec[2] / h)))

    n_vec = np.array([-h_vec[1], h_vec[0], 0.0])
    n = math.hypot(n_vec[0], n_vec[1])
    equatorial = n / h < SINGULAR_TOL
    circular = e < SINGULAR_TOL

    raan = 0.0 if equatorial else math.atan2(n_vec[1], n_vec[0])
    # in-plane reference direction from which the pericenter is measured
    if equatorial:
        ref = np.array([1.0, 0.0, 0.0])
    else:
        ref = n_vec / n
    ref_perp = np.cross(h_vec / h, ref)

    if circular:
        argp = 0.0
        nu = math.atan2(float(r_vec @ ref_perp), float(r_vec @ ref))
        e = 0.0
    else:
        argp = math.atan2(float(e_vec @ ref_perp), float(e_vec @ ref))
        e_hat = e_vec / e
        nu = math.atan2(float(r_vec @ np.cross(h_vec / h, e_hat)), float(r_vec @ e_hat))

    return OrbitalElements(
        a=a,
        e=e,
        i=i,
        raan=normalize_angle(raan),
        argp=normalize_angle(argp),
        mean_anomaly=mean_from_true(normalize_angle(nu), e),
    )


def apsides(position: np.ndarray, velocity: np.ndarray, mu: float = MU_EARTH) -> tuple[float, float]:
    """Osculating (apocenter, pericenter) radii in km."""
    el = cartesian_to_elements(position, velocity, mu)
    return el.ra, el.rp


def orbital_period(a: float, mu: float = MU_EARTH) -> float:
    """Keplerian period [s] for semi-major axis ``a`` [km]."""
    if not a > 0.0:
        raise ValueError(f"semi-major axis must be positive, got {a}")
    return TWO_PI * math.sqrt(a**3 / mu)


def kepler_propagate(
    position: np.ndarray, velocity: np.ndarray, dt: float, mu: float = MU_EARTH
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic two-body propagation through the mean anomaly."""
    el = cartesian_to_elements(position, velocity, mu)
    n = math.sqrt(mu / el.a**3)
    return elements_to_cartesian(el.with_mean_anomaly(el.mean_anomaly + n * dt), mu)
