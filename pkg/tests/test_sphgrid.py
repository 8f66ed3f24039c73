import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatdense import specfun
from scatdense.sphgrid import (
    Direction,
    GridConfigError,
    HarmonicCoeffs,
    ResolutionError,
    ShapeError,
    analyze,
    angles_of,
    grid_for_degree,
    hermitian_inner_product,
    inner_product,
    l2_norm,
    make_grid,
    plane_wave_coeffs,
    synthesize_function,
    truncation_degree,
    write_grid_csv,
)


def Y(ell, m, grid):
    return specfun.sph_harmonics_all(ell, grid.theta, grid.phi)[ell * ell + ell + m]


class TestDirection:
    def test_unit_check(self):
        with pytest.raises(ValueError):
            Direction(1.0, 1.0, 0.0)

    def test_round_trip(self):
        d = Direction.from_angles(1.1, 4.0)
        assert d.theta == pytest.approx(1.1, abs=1e-12)
        assert d.phi == pytest.approx(4.0, abs=1e-12)
        e = Direction.from_vector([3.0, -4.0, 12.0])
        assert Direction.from_angles(e.theta, e.phi).as_array() == pytest.approx(e.as_array(), abs=1e-12)
        assert (-e).as_array() == pytest.approx(-e.as_array())

    def test_angles_of_points(self):
        g = make_grid(5, 9)
        th, ph = angles_of(g.points)
        assert th == pytest.approx(g.theta, abs=1e-13)
        assert ph == pytest.approx(g.phi, abs=1e-13)


class TestGrid:
    def test_weights_sum(self):
        g = make_grid(16, 32)
        assert g.size == 512
        assert abs(g.weights.sum() - 4 * math.pi) <= 1e-13
        assert np.all(g.weights > 0)

    def test_y52_integral(self):
        g = make_grid(16, 32)
        assert abs(np.sum(g.weights * Y(5, 2, g))) <= 1e-13

    def test_exactness(self):
        g = make_grid(4, 8)
        assert g.exactness_degree == 7
        y = g.harmonics(7)
        integrals = y @ g.weights
        expected = np.zeros_like(integrals)
        expected[0] = math.sqrt(4 * math.pi)
        assert np.max(np.abs(integrals - expected)) <= 1e-12
        # beyond exactness: compare the Y_80 integral against a fine-grid oracle (which gives 0)
        fine = make_grid(40, 80)
        assert abs(np.sum(fine.weights * Y(8, 0, fine))) < 1e-13
        assert abs(np.sum(g.weights * Y(8, 0, g))) > 1e-3

    def test_config_errors(self):
        with pytest.raises(GridConfigError):
            make_grid(1, 8)
        with pytest.raises(GridConfigError):
            make_grid(4, 3)

    def test_grid_for_degree(self):
        for d in (0, 1, 7, 20, 61):
            assert grid_for_degree(d).exactness_degree >= d

    def test_truncation_rule(self):
        assert truncation_degree(2.0, 1.0) == 22
        assert truncation_degree(6.5, 1.0) == 27

    def test_orthonormality(self):
        g = grid_for_degree(24)
        y = g.harmonics(12)
        gram = (y * g.weights) @ np.conj(y).T
        assert np.max(np.abs(gram - np.eye(len(y)))) <= 1e-12

    def test_grid_csv(self):
        buf = io.StringIO()
        write_grid_csv(buf, make_grid(2, 4))
        lines = buf.getvalue().splitlines()
        assert lines[0] == "theta,phi,weight"
        assert len(lines) == 9
        assert sum(float(r.split(",")[2]) for r in lines[1:]) == pytest.approx(4 * math.pi, rel=1e-15)


class TestInnerProducts:
    g = make_grid(8, 16)

    def test_constant(self):
        one = np.ones(self.g.size)
        assert hermitian_inner_product(one, one, self.g) == pytest.approx(4 * math.pi, rel=1e-14)

    def test_y21_normalised(self):
        y = Y(2, 1, self.g)
        assert hermitian_inner_product(y, y, self.g) == pytest.approx(1.0, abs=1e-12)
        assert l2_norm(y, self.g) == pytest.approx(1.0, abs=1e-12)

    def test_bilinear_sign(self):
        assert inner_product(Y(2, 1, self.g), Y(2, -1, self.g), self.g) == pytest.approx(-1.0, abs=1e-12)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            inner_product(np.ones(3), np.ones(self.g.size), self.g)


class TestTransforms:
    def test_analyze_single_harmonic(self):
        g = grid_for_degree(16)
        c = analyze(Y(3, 1, g), g, 8)
        expected = np.zeros_like(c.coeffs)
        expected[3 * 3 + 3 + 1] = 1.0
        assert np.max(np.abs(c.coeffs - expected)) <= 1e-12

    def test_analyze_constant(self):
        g = grid_for_degree(10)
        c = analyze(np.ones(g.size), g, 5)
        assert c[0, 0] == pytest.approx(math.sqrt(4 * math.pi), abs=1e-13)
        assert np.max(np.abs(c.coeffs[1:])) <= 1e-13

    def test_resolution_error(self):
        g = make_grid(4, 8)
        with pytest.raises(ResolutionError):
            analyze(np.ones(g.size), g, 4)

    def test_synthesize_delta(self):
        g = make_grid(6, 12)
        f = synthesize_function(HarmonicCoeffs.from_dict({(0, 0): math.sqrt(4 * math.pi)}), g)
        assert np.allclose(f, 1.0, atol=1e-14)

    def test_plane_wave_analysis(self):
        # coefficients of exp(-ik beta.s) with k|s| = 2
        k, s = 1.0, np.array([0.6, -1.2, 1.2 * math.sqrt(2) / 2])
        s = 2.0 * s / np.linalg.norm(s)
        L = 30
        g = grid_for_degree(2 * L)
        got = analyze(np.exp(-1j * k * (g.points @ s)), g, L)
        ref = plane_wave_coeffs(k, s, L)
        assert np.max(np.abs(got.coeffs - ref.coeffs)) <= 1e-10

    @pytest.mark.parametrize("ks", [1.0, 5.0, 10.0])
    def test_plane_wave_synthesis(self, ks):
        rng = np.random.default_rng(7)
        s = rng.normal(size=3)
        s *= ks / np.linalg.norm(s)
        beta = rng.normal(size=(100, 3))
        beta /= np.linalg.norm(beta, axis=1, keepdims=True)
        c = plane_wave_coeffs(1.0, s, 40)
        th, ph = angles_of(beta)
        approx = c.coeffs @ specfun.sph_harmonics_all(40, th, ph)
        assert np.max(np.abs(approx - np.exp(-1j * beta @ s))) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(L=st.integers(0, 12), seed=st.integers(0, 2**32 - 1))
def test_round_trip_and_parseval(L, seed):
    rng = np.random.default_rng(seed)
    n = (L + 1) ** 2
    c = HarmonicCoeffs(L, rng.normal(size=n) + 1j * rng.normal(size=n))
    g = grid_for_degree(2 * L)
    f = synthesize_function(c, g)
    back = analyze(f, g, L)
    assert np.max(np.abs(back.coeffs - c.coeffs)) <= 1e-11 * max(1.0, c.norm())
    assert abs(l2_norm(f, g) ** 2 - c.norm() ** 2) <= 1e-10 * c.norm() ** 2


class TestCoeffs:
    def test_from_dict_and_access(self):
        c = HarmonicCoeffs.from_dict({(3, 1): 2 + 1j, (0, 0): 1})
        assert c.max_degree == 3
        assert c[3, 1] == 2 + 1j
        assert c[5, 0] == 0
        assert np.count_nonzero(c.degree_block(3)) == 1
        assert c.padded(5).max_degree == 5 and c.padded(5)[3, 1] == 2 + 1j

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            HarmonicCoeffs(2, np.zeros(5))

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        c = HarmonicCoeffs(4, rng.normal(size=25) + 1j * rng.normal(size=25))
        p = tmp_path / "c.csv"
        c.to_csv(p)
        assert p.read_text().splitlines()[0] == "ell,m,re,im"
        back = HarmonicCoeffs.from_csv(p)
        assert np.array_equal(back.coeffs, c.coeffs)


def test_polar_angle_near_pole():
    th, _ = angles_of(np.array([1e-12, 0.0, 1.0]))
    assert th == pytest.approx(1e-12, rel=1e-12)
    assert Direction(0.0, 1e-12, -1.0).theta == pytest.approx(math.pi - 1e-12, rel=1e-15)
