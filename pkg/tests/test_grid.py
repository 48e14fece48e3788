import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from elastipath.grid import (GridError, LiftedGrid, LiftedPoint, ScalarField,
                             index_of, make_grid, read_field, read_plane,
                             shift, write_field, write_plane)

TWO_PI = 2.0 * math.pi


class TestMakeGrid:
    def test_default_angular_spacing(self):
        g = make_grid(100, 100, 72, 1.0)
        assert g.h_theta == pytest.approx(TWO_PI / 72)
        assert g.h_theta == pytest.approx(0.08727, abs=1e-5)

    def test_minimal_grid(self):
        g = make_grid(2, 2, 2, 1.0)
        assert g.h_theta == pytest.approx(math.pi)

    def test_node_count(self):
        g = make_grid(64, 64, 60, 0.5)
        assert g.h_theta == pytest.approx(TWO_PI / 60)
        assert g.n_nodes == 245760

    @pytest.mark.parametrize("nx,ny,nt,h", [(1, 5, 5, 1.0), (5, 0, 5, 1.0),
                                            (5, 5, 1, 1.0), (5, 5, 5, 0.0),
                                            (5, 5, 5, -2.0)])
    def test_invalid_dimensions(self, nx, ny, nt, h):
        with pytest.raises(GridError):
            make_grid(nx, ny, nt, h)

    def test_angular_axis_closes(self):
        for nt in (2, 3, 7, 72, 360):
            g = make_grid(4, 4, nt, 1.0)
            assert abs(g.n_theta * g.h_theta - TWO_PI) <= 1e-12 * TWO_PI


class TestIndexOf:
    def test_origin(self):
        g = make_grid(10, 10, 72, 1.0)
        assert index_of(g, LiftedPoint(0.0, 0.0, 0.0)) == (0, 0, 0)

    def test_theta_wraps_to_zero(self):
        g = make_grid(10, 10, 72, 1.0)
        p = LiftedPoint(1.0, 1.0, TWO_PI - g.h_theta / 4)
        assert index_of(g, p)[2] == 0

    def test_theta_pi(self):
        g = make_grid(10, 10, 72, 1.0)
        assert index_of(g, LiftedPoint(1.0, 1.0, math.pi))[2] == 36

    def test_out_of_bounds(self):
        g = make_grid(10, 10, 8, 1.0)
        with pytest.raises(GridError):
            index_of(g, LiftedPoint(25.0, 1.0, 0.0))
        with pytest.raises(GridError):
            index_of(g, LiftedPoint(1.0, -3.0, 0.0))

    @given(st.integers(0, 9), st.integers(0, 7), st.integers(0, 35))
    def test_round_trip(self, ix, iy, it):
        g = make_grid(10, 8, 36, 0.7)
        assert index_of(g, g.point_at((ix, iy, it))) == (ix, iy, it)


class TestShift:
    def test_periodic_wrap(self):
        g = make_grid(10, 10, 72, 1.0)
        assert shift(g, (5, 5, 0), (0, 0, 1)) == (5, 5, 71)

    def test_outflow(self):
        g = make_grid(10, 10, 72, 1.0)
        assert shift(g, (0, 0, 0), (1, 0, 0)) is None

    def test_componentwise(self):
        g = make_grid(10, 10, 72, 1.0)
        assert shift(g, (3, 4, 10), (1, -2, 3)) == (2, 6, 7)

    @given(st.integers(0, 9), st.integers(0, 9), st.integers(0, 11),
           st.integers(-3, 3), st.integers(-3, 3), st.integers(-14, 14))
    def test_group_property(self, ix, iy, it, ex, ey, et):
        g = make_grid(10, 10, 12, 1.0)
        fwd = shift(g, (ix, iy, it), (ex, ey, et))
        if fwd is not None:
            back = shift(g, fwd, (-ex, -ey, -et))
            assert back == (ix, iy, it)


class TestLiftedPoint:
    def test_theta_reduced(self):
        assert LiftedPoint(0, 0, TWO_PI + 1.0).theta == pytest.approx(1.0)
        assert LiftedPoint(0, 0, -0.5).theta == pytest.approx(TWO_PI - 0.5)


class TestScalarField:
    def test_read_after_write(self):
        g = make_grid(4, 5, 6, 1.0)
        f = ScalarField.full(g, 0.0)
        rng = np.random.default_rng(0)
        vals = rng.normal(size=g.shape)
        for idx in np.ndindex(*g.shape):
            f[idx] = vals[idx]
        assert np.array_equal(f.values, vals)

    def test_shape_mismatch(self):
        g = make_grid(4, 5, 6, 1.0)
        with pytest.raises(GridError):
            ScalarField(g, np.zeros((4, 5, 7)))

    def test_inf_rejected_unless_allowed(self):
        g = make_grid(4, 5, 6, 1.0)
        vals = np.zeros(g.shape)
        vals[0, 0, 0] = np.inf
        with pytest.raises(GridError):
            ScalarField(g, vals)
        f = ScalarField(g, vals, allow_inf=True)
        assert np.isinf(f[0, 0, 0])

    def test_nan_always_rejected(self):
        g = make_grid(4, 5, 6, 1.0)
        vals = np.zeros(g.shape)
        vals[1, 1, 1] = np.nan
        with pytest.raises(GridError):
            ScalarField(g, vals, allow_inf=True)


class TestSerialization:
    def test_round_trip_lossless(self):
        g = make_grid(7, 5, 12, 0.25)
        rng = np.random.default_rng(3)
        f = ScalarField(g, rng.normal(size=g.shape))
        buf = io.BytesIO()
        write_field(f, buf)
        buf.seek(0)
        f2 = read_field(buf)
        assert f2.grid == g
        assert np.array_equal(f2.values, f.values)

    def test_header_magic(self):
        with pytest.raises(GridError):
            read_field(io.BytesIO(b"NOPE!" + b"\0" * 64))

    def test_inf_sentinel_round_trip(self, tmp_path):
        g = make_grid(3, 3, 4, 1.0)
        vals = np.zeros(g.shape)
        vals[2, 2, 3] = np.inf
        f = ScalarField(g, vals, allow_inf=True)
        p = tmp_path / "d.cpgf"
        write_field(f, p)
        f2 = read_field(p)
        assert np.isinf(f2[2, 2, 3])

    def test_plane_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(6, 9))
        p = tmp_path / "m.cpg2"
        write_plane(a, 0.5, p)
        b, h = read_plane(p)
        assert h == 0.5
        assert np.array_equal(a, b)
