import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowthrust_rl.astro import MU_EARTH, Epoch
from lowthrust_rl.errors import GravityFileError
from lowthrust_rl.forces import point_mass_accel
from lowthrust_rl.gravity import (
    GravityCoefficients,
    body_fixed_accel,
    earth_rotation,
    harmonics_accel,
    load_default_field,
    parse_gravity_coefficients,
    potential,
)
from oracles import j2_closed_form, legendre_potential, random_exterior_points

FIELD = load_default_field(16)
RE = FIELD.reference_radius


class TestJ2:
    C20 = FIELD.cbar[2, 0]
    J2 = -C20 * math.sqrt(5.0)

    def zonal_field(self):
        return GravityCoefficients.zonal({2: self.C20}, FIELD.gm, RE)

    def test_j2_value(self):
        assert self.J2 == pytest.approx(1.08263e-3, rel=1e-4)

    def test_closed_form_100_random_points(self):
        field = self.zonal_field()
        rng = np.random.default_rng(42)
        epoch = Epoch(12345.0)
        for r in random_exterior_points(rng, 100):
            got = harmonics_accel(r, field, epoch)
            want = j2_closed_form(r, FIELD.gm, RE, self.J2)
            assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-12

    def test_equatorial_point(self):
        r = np.array([9000.0, 0.0, 0.0])
        got = harmonics_accel(r, self.zonal_field(), Epoch(0.0))
        want = j2_closed_form(r, FIELD.gm, RE, self.J2)
        assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-12

    def test_polar_vs_equatorial_oblateness(self):
        field = self.zonal_field()
        ep = Epoch(0.0)
        r = 9000.0
        eq = harmonics_accel(np.array([r, 0, 0]), field, ep) - point_mass_accel([r, 0, 0], FIELD.gm)
        pole = harmonics_accel(np.array([0, 0, r]), field, ep) - point_mass_accel([0, 0, r], FIELD.gm)
        # extra inward pull at the equator, outward push at the pole, twice as strong
        assert eq[0] < 0.0 and pole[2] > 0.0
        assert abs(pole[2]) / abs(eq[0]) == pytest.approx(2.0, rel=1e-12)
        assert np.linalg.norm(harmonics_accel(np.array([r, 0, 0]), field, ep)) != pytest.approx(
            np.linalg.norm(harmonics_accel(np.array([0, 0, r]), field, ep)), rel=1e-6
        )


class TestFullField:
    def test_degree_zero_equals_point_mass(self):
        field = FIELD.truncated(0)
        r = np.array([7000.0, -3000.0, 2500.0])
        np.testing.assert_array_equal(harmonics_accel(r, field, Epoch(0.0)), point_mass_accel(r, field.gm))

    def test_potential_against_scipy_legendre(self):
        rng = np.random.default_rng(7)
        for r in random_exterior_points(rng, 10):
            assert potential(r, FIELD) == pytest.approx(legendre_potential(r, FIELD), rel=1e-12)

    def test_acceleration_is_gradient_of_potential(self):
        rng = np.random.default_rng(3)
        h = 0.1  # km
        for r in random_exterior_points(rng, 100):
            grad = np.empty(3)
            for k in range(3):
                dr = np.zeros(3)
                dr[k] = h
                grad[k] = (potential(r + dr, FIELD) - potential(r - dr, FIELD)) / (2 * h)
            acc = body_fixed_accel(r, FIELD)
            assert np.linalg.norm(acc - grad) / np.linalg.norm(acc) < 1e-6

    def test_perturbation_gradient_at_meo(self):
        # non-central part alone is ~1e-3 of the total; check it separately
        rng = np.random.default_rng(5)
        h = 0.1
        for r in random_exterior_points(rng, 10, 8000.0, 12000.0):
            grad = np.empty(3)
            for k in range(3):
                dr = np.zeros(3)
                dr[k] = h
                up = potential(r + dr, FIELD) - FIELD.gm / np.linalg.norm(r + dr)
                dn = potential(r - dr, FIELD) - FIELD.gm / np.linalg.norm(r - dr)
                grad[k] = (up - dn) / (2 * h)
            acc = body_fixed_accel(r, FIELD) - point_mass_accel(r, FIELD.gm)
            assert np.linalg.norm(acc - grad) / np.linalg.norm(acc) < 1e-5

    def test_inertial_rotation_consistency(self):
        r = np.array([8000.0, 4000.0, 3000.0])
        ep = Epoch(5000.0)
        rot = earth_rotation(ep)
        np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(
            harmonics_accel(r, FIELD, ep), rot.T @ body_fixed_accel(rot @ r, FIELD), rtol=1e-14
        )

    def test_inside_reference_sphere_rejected(self):
        with pytest.raises(ValueError, match="reference sphere"):
            harmonics_accel(np.array([6000.0, 0, 0]), FIELD, Epoch(0.0))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(6400.0, 50000.0), st.floats(-1.0, 1.0), st.floats(0.0, 2 * math.pi))
    def test_field_dominated_by_central_term(self, r, sinlat, lon):
        c = math.sqrt(1 - sinlat**2)
        pos = r * np.array([c * math.cos(lon), c * math.sin(lon), sinlat])
        full = harmonics_accel(pos, FIELD, Epoch(0.0))
        pm = point_mass_accel(pos, FIELD.gm)
        assert np.linalg.norm(full - pm) < 5e-3 * np.linalg.norm(pm)


class TestParser:
    MINIMAL = "gfc 0 0 1.0 0.0\ngfc 1 0 0 0\ngfc 1 1 0 0\ngfc 2 0 -4.84D-04 0.0\n"

    def test_bundled_fixture(self):
        assert FIELD.max_degree == 16 and FIELD.max_order == 16
        assert FIELD.gm == pytest.approx(398600.4415, rel=1e-12)
        assert RE == pytest.approx(6378.1363, rel=1e-12)
        assert FIELD.cbar[0, 0] == 1.0
        assert np.all(FIELD.sbar[:, 0] == 0.0)

    def test_minimal_zonal_file(self):
        c = parse_gravity_coefficients(self.MINIMAL, max_order=0)
        assert c.max_degree == 2 and c.max_order == 0
        assert c.cbar[2, 0] == -4.84e-4
        assert c.gm == MU_EARTH

    def test_degree_clamp_ignores_higher_terms(self):
        c = parse_gravity_coefficients(self.MINIMAL + "gfc 3 0 1e-6 0\n", max_degree=2, max_order=0)
        assert c.cbar.shape == (3, 3)

    def test_garbled_number_names_line(self):
        text = "# header\ngfc 0 0 1.0 0.0\ngfc 1 0 0 0\ngfc 1 1 0 0\ngfc 2 0 -4.8x4e-4 0\n"
        with pytest.raises(GravityFileError, match="line 5") as info:
            parse_gravity_coefficients(text, max_order=0)
        assert info.value.line == 5

    def test_duplicate_names_both_lines(self):
        with pytest.raises(GravityFileError, match=r"line 5.*line 4|first seen on line 4"):
            parse_gravity_coefficients(self.MINIMAL + "gfc 2 0 1e-4 0\n", max_order=0)

    def test_incomplete_triangle_rejected(self):
        with pytest.raises(GravityFileError, match=r"missing \(2, 1\)"):
            parse_gravity_coefficients(self.MINIMAL)

    def test_short_record_rejected(self):
        with pytest.raises(GravityFileError, match="line 1"):
            parse_gravity_coefficients("gfc 2 0 1.0\n")

    def test_order_above_degree_rejected(self):
        with pytest.raises(GravityFileError, match="invalid degree/order"):
            parse_gravity_coefficients("gfc 0 0 1 0\ngfc 1 2 0 0\n")

    def test_truncation(self):
        t = FIELD.truncated(4, 2)
        assert t.max_degree == 4 and t.max_order == 2
        assert np.all(t.cbar[:, 3:] == 0.0)
        with pytest.raises(ValueError):
            FIELD.truncated(20)
