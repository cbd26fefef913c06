"""Spherical-harmonic geopotential: ICGEM ``gfc`` parsing and acceleration.

The acceleration uses the Cunningham V/W recursion on unnormalized
coefficients (Montenbruck & Gill, Satellite Orbits, sec. 3.2). At degree 16
the normalization factors stay well inside double range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .astro import CONSTANTS, Epoch
from .errors import GravityFileError

FIXTURE_NAME = "egm2008_16x16.gfc"


@dataclass(frozen=True)
class GravityCoefficients:
    """Fully normalized Stokes coefficients ``cbar[n, m]``, ``sbar[n, m]``."""

    max_degree: int
    max_order: int
    cbar: np.ndarray
    sbar: np.ndarray
    reference_radius: float  # km
    gm: float  # km^3/s^2

    def __post_init__(self) -> None:
        if not self.max_degree >= self.max_order >= 0:
            raise ValueError("require max_degree >= max_order >= 0")
        shape = (self.max_degree + 1, self.max_degree + 1)
        if self.cbar.shape != shape or self.sbar.shape != shape:
            raise ValueError(f"coefficient arrays must have shape {shape}")
        if self.cbar[0, 0] != 1.0:
            raise ValueError("cbar[0, 0] must equal 1")

    @cached_property
    def _unnormalized(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unnormalized C, S and the (n-m+2)!/(n-m)! factors of the x/y terms."""
        norm = _normalization(self.max_degree)
        n = np.arange(self.max_degree + 1)[:, None]
        m = np.arange(self.max_degree + 1)[None, :]
        fac = np.where(m <= n, (n - m + 2) * (n - m + 1), 0).astype(float)
        return self.cbar * norm, self.sbar * norm, fac

    def truncated(self, degree: int, order: int | None = None) -> GravityCoefficients:
        """Copy limited to ``degree`` x ``order`` (order defaults to degree)."""
        order = degree if order is None else order
        if degree > self.max_degree or order > self.max_order or order > degree:
            raise ValueError(
                f"cannot truncate {self.max_degree}x{self.max_order} field to {degree}x{order}"
            )
        c = self.cbar[: degree + 1, : degree + 1].copy()
        s = self.sbar[: degree + 1, : degree + 1].copy()
        c[:, order + 1 :] = 0.0
        s[:, order + 1 :] = 0.0
        return GravityCoefficients(degree, order, c, s, self.reference_radius, self.gm)

    @classmethod
    def zonal(cls, cbar_n0: dict[int, float], gm: float, reference_radius: float) -> GravityCoefficients:
        """Axisymmetric field from a ``{degree: cbar}`` mapping."""
        nmax = max([0, *cbar_n0])
        c = np.zeros((nmax + 1, nmax + 1))
        c[0, 0] = 1.0
        for n, value in cbar_n0.items():
            c[n, 0] = value
        return cls(nmax, 0, c, np.zeros_like(c), reference_radius, gm)


def _to_float(token: str, lineno: int) -> float:
    try:
        return float(token.replace("D", "e").replace("d", "e"))
    except ValueError:
        raise GravityFileError(f"cannot parse numeric field {token!r}", lineno) from None


def parse_gravity_coefficients(
    text: str, max_degree: int | None = None, max_order: int | None = None
) -> GravityCoefficients:
    """Parse ICGEM-style ``gfc n m C S [sigmaC sigmaS]`` records.

    Lines beginning with ``#`` are comments. Header keywords before
    ``end_of_head`` are read for ``earth_gravity_constant`` [m^3/s^2] and
    ``radius`` [m]; without a header the package constants are used. Terms
    beyond the requested truncation are skipped, and every term inside it
    must be present exactly once.
    """
    gm = CONSTANTS.mu_earth
    radius = CONSTANTS.earth_radius
    entries: dict[tuple[int, int], tuple[float, float, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        key = fields[0].lower()
        if key == "earth_gravity_constant" and len(fields) >= 2:
            gm = _to_float(fields[1], lineno) * 1e-9
            continue
        if key == "radius" and len(fields) >= 2:
            radius = _to_float(fields[1], lineno) * 1e-3
            continue
        if key != "gfc":
            # remaining header keywords carry nothing the field needs
            continue
        if len(fields) < 5:
            raise GravityFileError("gfc record needs at least n, m, C, S", lineno)
        try:
            n, m = int(fields[1]), int(fields[2])
        except ValueError:
            raise GravityFileError("degree and order must be integers", lineno) from None
        if n < 0 or m < 0 or m > n:
            raise GravityFileError(f"invalid degree/order ({n}, {m})", lineno)
        if (n, m) in entries:
            raise GravityFileError(
                f"duplicate term ({n}, {m}), first seen on line {entries[(n, m)][2]}", lineno
            )
        entries[(n, m)] = (_to_float(fields[3], lineno), _to_float(fields[4], lineno), lineno)

    if not entries:
        raise GravityFileError("no gfc records found")
    file_degree = max(n for n, _ in entries)
    nmax = file_degree if max_degree is None else max_degree
    mmax = nmax if max_order is None else min(max_order, nmax)
    cbar = np.zeros((nmax + 1, nmax + 1))
    sbar = np.zeros((nmax + 1, nmax + 1))
    cbar[0, 0] = 1.0
    missing = []
    for n in range(nmax + 1):
        for m in range(min(n, mmax) + 1):
            if (n, m) in entries:
                cbar[n, m], sbar[n, m], _ = entries[(n, m)]
            elif (n, m) != (0, 0):
                missing.append((n, m))
    if missing:
        shown = ", ".join(f"({n}, {m})" for n, m in missing[:5])
        raise GravityFileError(f"incomplete coefficient triangle, missing {shown}")
    if cbar[0, 0] != 1.0:
        raise GravityFileError(f"C(0,0) must be 1, got {cbar[0, 0]}", entries[(0, 0)][2])
    return GravityCoefficients(nmax, mmax, cbar, sbar, radius, gm)


def load_gravity_file(
    path: str | Path, max_degree: int | None = None, max_order: int | None = None
) -> GravityCoefficients:
    return parse_gravity_coefficients(Path(path).read_text(), max_degree, max_order)


def load_default_field(degree: int = 16, order: int | None = None) -> GravityCoefficients:
    """The bundled EGM2008 field truncated at ``degree`` x ``order``."""
    text = resources.files("lowthrust_rl").joinpath("data", FIXTURE_NAME).read_text()
    return parse_gravity_coefficients(text, degree, degree if order is None else order)


def _normalization(nmax: int) -> np.ndarray:
    """Factors N[n, m] with C_nm = N[n, m] * Cbar_nm."""
    out = np.zeros((nmax + 1, nmax + 1))
    for n in range(nmax + 1):
        for m in range(n + 1):
            delta = 1.0 if m == 0 else 2.0
            out[n, m] = math.sqrt(
                delta * (2 * n + 1) * math.factorial(n - m) / math.factorial(n + m)
            )
    return out


def _vw(r_bf: np.ndarray, radius: float, nmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Cunningham V/W functions up to degree/order ``nmax`` at a body-fixed point."""
    x, y, z = r_bf
    r2 = float(r_bf @ r_bf)
    rho = radius / r2
    x0, y0, z0 = x * rho, y * rho, z * rho
    rho2 = radius * rho
    v = np.zeros((nmax + 1, nmax + 1))
    w = np.zeros((nmax + 1, nmax + 1))
    v[0, 0] = radius / math.sqrt(r2)
    for m in range(nmax + 1):
        if m > 0:
            k = 2 * m - 1
            v[m, m] = k * (x0 * v[m - 1, m - 1] - y0 * w[m - 1, m - 1])
            w[m, m] = k * (x0 * w[m - 1, m - 1] + y0 * v[m - 1, m - 1])
        if m + 1 <= nmax:
            k = 2 * m + 1
            v[m + 1, m] = k * z0 * v[m, m]
            w[m + 1, m] = k * z0 * w[m, m]
        for n in range(m + 2, nmax + 1):
            a = (2 * n - 1) / (n - m)
            b = (n + m - 1) / (n - m)
            v[n, m] = a * z0 * v[n - 1, m] - b * rho2 * v[n - 2, m]
            w[n, m] = a * z0 * w[n - 1, m] - b * rho2 * w[n - 2, m]
    return v, w


def body_fixed_accel(r_bf: np.ndarray, coeffs: GravityCoefficients) -> np.ndarray:
    """Gradient of the truncated potential at a body-fixed position [km/s^2]."""
    nmax = coeffs.max_degree
    v, w = _vw(r_bf, coeffs.reference_radius, nmax + 1)
    c, s, fac = coeffs._unnormalized
    ax = ay = az = 0.0
    for n in range(nmax + 1):
        # zonal term
        cn0 = c[n, 0]
        ax -= cn0 * v[n + 1, 1]
        ay -= cn0 * w[n + 1, 1]
        az -= (n + 1) * cn0 * v[n + 1, 0]
        for m in range(1, min(n, coeffs.max_order) + 1):
            cnm, snm = c[n, m], s[n, m]
            f = fac[n, m]
            ax += 0.5 * (
                -cnm * v[n + 1, m + 1] - snm * w[n + 1, m + 1]
                + f * (cnm * v[n + 1, m - 1] + snm * w[n + 1, m - 1])
            )
            ay += 0.5 * (
                -cnm * w[n + 1, m + 1] + snm * v[n + 1, m + 1]
                + f * (-cnm * w[n + 1, m - 1] + snm * v[n + 1, m - 1])
            )
            az += (n - m + 1) * (-cnm * v[n + 1, m] - snm * w[n + 1, m])
    scale = coeffs.gm / coeffs.reference_radius**2
    return scale * np.array([ax, ay, az])


def potential(r_bf: np.ndarray, coeffs: GravityCoefficients) -> float:
    """Truncated gravitational potential U (positive convention) [km^2/s^2]."""
    c, s, _ = coeffs._unnormalized
    v, w = _vw(r_bf, coeffs.reference_radius, coeffs.max_degree)
    total = float(np.sum(np.tril(c * v + s * w)))
    return coeffs.gm / coeffs.reference_radius * total


def earth_rotation(epoch: Epoch) -> np.ndarray:
    """Rotation matrix GCRF -> Earth-fixed for the uniform sidereal model."""
    theta = epoch.gmst()
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def harmonics_accel(position: np.ndarray, coeffs: GravityCoefficients, epoch: Epoch) -> np.ndarray:
    """Inertial acceleration [km/s^2] of the truncated field, central term included.

    Raises:
        ValueError: if ``position`` lies inside the reference sphere.
    """
    position = np.asarray(position, dtype=float)
    r = math.sqrt(float(position @ position))
    if r <= coeffs.reference_radius:
        raise ValueError(
            f"position radius {r:.3f} km is inside the reference sphere "
            f"({coeffs.reference_radius:.3f} km)"
        )
    if coeffs.max_degree == 0:
        return -coeffs.gm * position / r**3
    rot = earth_rotation(epoch)
    return rot.T @ body_fixed_accel(rot @ position, coeffs)
