import math

import numpy as np
import pytest

from mapseg.geodata import BBox
from mapseg.relief import (
    ElevationGrid,
    ReliefError,
    hachures,
    hillshade,
    horn_gradients,
    isolines,
    render_relief,
)


def grid_from(values, cell=1.0):
    return ElevationGrid(values=np.asarray(values, dtype=float), cell_size=cell)


class TestHillshade:
    def test_flat_grid_constant(self):
        g = grid_from(np.full((16, 16), 250.0))
        s = hillshade(g)
        assert np.allclose(s, s[0, 0])
        # flat terrain is lit at cos(zenith) for any azimuth
        assert s[0, 0] == pytest.approx(math.cos(math.radians(45.0)), abs=1e-12)

    def test_range_bounds(self):
        rng = np.random.default_rng(0)
        g = grid_from(rng.uniform(0, 500, (32, 32)), cell=10.0)
        s = hillshade(g, azimuth_deg=100, altitude_deg=30)
        assert s.min() >= 0.0 and s.max() <= 1.0

    def test_interior_pixel_matches_horn_closed_form(self):
        rng = np.random.default_rng(8)
        z = rng.uniform(0, 100, (5, 5))
        cell = 3.0
        az, alt = 315.0, 45.0
        s = hillshade(grid_from(z, cell), az, alt)
        # closed-form Horn stencil at the center cell (2, 2)
        a, b, c = z[1, 1], z[1, 2], z[1, 3]
        d, f = z[2, 1], z[2, 3]
        g_, h_, i_ = z[3, 1], z[3, 2], z[3, 3]
        dzdx = ((c + 2 * f + i_) - (a + 2 * d + g_)) / (8 * cell)
        dzdy = ((g_ + 2 * h_ + i_) - (a + 2 * b + c)) / (8 * cell)
        zen = math.radians(90 - alt)
        azr = math.radians((360 - az + 90) % 360)
        slope = math.atan(math.hypot(dzdx, dzdy))
        aspect = math.atan2(dzdy, -dzdx)
        expected = math.cos(zen) * math.cos(slope) + math.sin(zen) * math.sin(slope) * math.cos(azr - aspect)
        assert s[2, 2] == pytest.approx(max(0.0, min(1.0, expected)), abs=1e-12)

    def test_lit_face_brighter_than_shadow_face(self):
        # rows grow southward: z = 5(x+y) rises to the southeast, so the
        # slope descends northwest, straight into the default 315-degree sun
        yy, xx = np.mgrid[0:32, 0:32].astype(float)
        toward = grid_from((xx + yy) * 5.0, cell=1.0)
        away = grid_from(-(xx + yy) * 5.0, cell=1.0)
        assert hillshade(toward).mean() > hillshade(away).mean()
        # gradient aligned with the azimuth: cos(az - aspect) = 1, the maximum
        zen = math.radians(45.0)
        slope = math.atan(math.hypot(5.0, 5.0))
        expected_peak = math.cos(zen) * math.cos(slope) + math.sin(zen) * math.sin(slope)
        interior = hillshade(toward)[8:-8, 8:-8]
        assert interior.max() == pytest.approx(expected_peak, abs=1e-12)

    def test_all_nodata_raises(self):
        g = ElevationGrid(values=np.full((8, 8), -9999.0), cell_size=1.0, nodata=-9999.0)
        with pytest.raises(ReliefError):
            hillshade(g)


class TestIsolines:
    def test_flat_grid_has_no_contours(self):
        assert isolines(grid_from(np.full((16, 16), 100.0)), 10.0) == []

    def test_linear_ramp_vertical_lines_at_analytic_positions(self):
        # z = 4x: contours at levels k*20 are vertical lines at x = 5k
        xx = np.tile(np.arange(64, dtype=float), (32, 1))
        g = grid_from(4.0 * xx)
        lines = isolines(g, 20.0)
        assert lines, "expected contours on a ramp"
        xs = sorted(float(np.mean(line[:, 0])) for line in lines)
        expected = [lv / 4.0 for lv in np.arange(20.0, 4.0 * 63, 20.0)]
        assert len(xs) == len(expected)
        for got, want in zip(xs, expected):
            assert got == pytest.approx(want, abs=1e-6)
        # spacing = interval / slope
        assert np.allclose(np.diff(xs), 20.0 / 4.0, atol=1e-6)

    def test_contours_close_or_end_on_boundary(self):
        rng = np.random.default_rng(3)
        from scipy import ndimage
        z = ndimage.gaussian_filter(rng.standard_normal((40, 40)), 4.0) * 100
        for line in isolines(grid_from(z), 15.0):
            closed = np.allclose(line[0], line[-1])
            h, w = 40, 40
            def on_boundary(pt):
                x, y = pt
                return x <= 0 or y <= 0 or x >= w - 1 or y >= h - 1
            assert closed or (on_boundary(line[0]) and on_boundary(line[-1]))


class TestHachures:
    def test_flat_grid_no_strokes(self):
        g = grid_from(np.full((32, 32), 5.0))
        assert hachures(g, np.random.default_rng(0)) == []

    def test_strokes_align_with_downslope(self):
        xx = np.tile(np.arange(64, dtype=float), (64, 1))
        g = grid_from(10.0 * xx)  # gradient points +x; downslope is -x
        strokes = hachures(g, np.random.default_rng(1), density=1.0, min_slope=0.0)
        assert strokes
        for seg in strokes:
            d = seg[1] - seg[0]
            assert abs(d[1]) < 1e-9  # no y component
            assert d[0] < 0

    def test_steeper_means_denser(self):
        yy, xx = np.mgrid[0:64, 0:64].astype(float)
        half_flat = np.where(xx < 32, 0.0, (xx - 32) * 8.0)
        g = grid_from(half_flat)
        strokes = hachures(g, np.random.default_rng(5), density=0.9)
        xs = np.array([seg.mean(axis=0)[0] for seg in strokes])
        assert (xs > 32).sum() > (xs < 28).sum()


class TestRenderReliefDispatch:
    def test_modes(self):
        g = grid_from(np.random.default_rng(0).uniform(0, 200, (24, 24)))
        assert render_relief(g, "none").shade is None
        assert render_relief(g, "hillshade").shade is not None
        assert render_relief(g, "isolines", interval=30.0).polylines is not None
        assert render_relief(g, "hachure", rng=np.random.default_rng(1)).polylines is not None
        with pytest.raises(ReliefError):
            render_relief(g, "wireframe")

    def test_too_few_valid_cells(self):
        vals = np.full((8, 8), -9999.0)
        vals[0, 0] = 10.0
        g = ElevationGrid(values=vals, cell_size=1.0, nodata=-9999.0)
        with pytest.raises(ReliefError):
            hillshade(g)


class TestPng16RoundTrip:
    def test_save_load(self, tmp_path):
        rng = np.random.default_rng(12)
        vals = rng.uniform(50, 800, (32, 32))
        vals[3, 4] = -9999.0
        bbox = BBox(0, 0, 3200, 3200)
        g = ElevationGrid(values=vals, cell_size=100.0, nodata=-9999.0, bbox=bbox)
        path = tmp_path / "dem.png"
        g.save_png16(path)
        back = ElevationGrid.load_png16(path)
        valid = g.valid_mask()
        assert (back.valid_mask() == valid).all()
        assert np.allclose(back.values[valid], g.values[valid], atol=0.1)
        assert back.bbox == bbox
        assert back.cell_size == g.cell_size
