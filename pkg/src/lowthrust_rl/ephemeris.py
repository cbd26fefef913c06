"""Low-precision analytic Sun and Moon positions (geocentric, GCRF, km).

Truncated series from Montenbruck & Gill, Satellite Orbits, sec. 3.3.2.
Accuracy is of order 0.1 deg for the Sun and a few arcminutes for the Moon,
ample for tidal and radiation-pressure magnitudes.
"""

from __future__ import annotations

import math

import numpy as np

from .astro import Epoch

_ARCSEC = math.pi / (180.0 * 3600.0)
_OBLIQUITY = math.radians(23.43929111)
_COS_EPS = math.cos(_OBLIQUITY)
_SIN_EPS = math.sin(_OBLIQUITY)


def _ecliptic_to_equatorial(lon: float, lat: float, dist: float) -> np.ndarray:
    cl, sl = math.cos(lon), math.sin(lon)
    cb, sb = math.cos(lat), math.sin(lat)
    x = dist * cl * cb
    y = dist * sl * cb
    z = dist * sb
    return np.array([x, _COS_EPS * y - _SIN_EPS * z, _SIN_EPS * y + _COS_EPS * z])


def sun_position(epoch: Epoch) -> np.ndarray:
    t = epoch.julian_centuries_tt()
    m = math.radians(357.5256 + 35999.049 * t)
    lon = math.radians(282.9400) + m + (6892.0 * math.sin(m) + 72.0 * math.sin(2.0 * m)) * _ARCSEC
    dist = (149.619 - 2.499 * math.cos(m) - 0.021 * math.cos(2.0 * m)) * 1e6
    return _ecliptic_to_equatorial(lon, 0.0, dist)


def moon_position(epoch: Epoch) -> np.ndarray:
    t = epoch.julian_centuries_tt()
    deg = math.radians
    l0 = deg(218.31617 + 481267.88088 * t - 1.3972 * t)
    l = deg(134.96292 + 477198.86753 * t)  # Moon mean anomaly
    lp = deg(357.52543 + 35999.04944 * t)  # Sun mean anomaly
    f = deg(93.27283 + 483202.01873 * t)  # mean argument of latitude
    d = deg(297.85027 + 445267.11135 * t)  # mean elongation

    s = math.sin
    lon = l0 + _ARCSEC * (
        22640.0 * s(l) + 769.0 * s(2 * l)
        - 4586.0 * s(l - 2 * d) + 2370.0 * s(2 * d)
        - 668.0 * s(lp) - 412.0 * s(2 * f)
        - 212.0 * s(2 * l - 2 * d) - 206.0 * s(l + lp - 2 * d)
        + 192.0 * s(l + 2 * d) - 165.0 * s(lp - 2 * d)
        + 148.0 * s(l - lp) - 125.0 * s(d)
        - 110.0 * s(l + lp) - 55.0 * s(2 * f - 2 * d)
    )
    lat = _ARCSEC * (
        18520.0 * s(f + lon - l0 + _ARCSEC * (412.0 * s(2 * f) + 541.0 * s(lp)))
        - 526.0 * s(f - 2 * d) + 44.0 * s(l + f - 2 * d)
        - 31.0 * s(-l + f - 2 * d) - 25.0 * s(-2 * l + f)
        - 23.0 * s(lp + f - 2 * d) + 21.0 * s(-l + f)
        + 11.0 * s(-lp + f - 2 * d)
    )
    c = math.cos
    dist = (
        385000.0 - 20905.0 * c(l) - 3699.0 * c(2 * d - l) - 2956.0 * c(2 * d)
        - 570.0 * c(2 * l) + 246.0 * c(2 * l - 2 * d) - 205.0 * c(lp - 2 * d)
        - 171.0 * c(l + 2 * d) - 152.0 * c(l + lp - 2 * d)
    )
    return _ecliptic_to_equatorial(lon, lat, dist)
