import numpy as np
import pytest
from scipy import stats

import tangentct as t
from tangentct.errors import ConfigError

from conftest import ANN_PX


def test_pure_annulus_mass():
    rec = t.PhantomRecipe(ann=ANN_PX, side=512, n_cracks=0, seed=0, wall_density=0.75)
    img = t.generate_annulus(rec)
    expected = np.pi * (235.0**2 - 115.0**2) * 0.75
    assert img.values.sum() == pytest.approx(expected, rel=1e-2)
    assert (img.values >= 0.0).all()


def test_seed_determinism():
    rec = t.PhantomRecipe(ann=ANN_PX.scaled(0.5), side=256, n_cracks=3, seed=42)
    a = t.generate_annulus(rec)
    b = t.generate_annulus(rec)
    np.testing.assert_array_equal(a.values, b.values)
    c = t.generate_annulus(t.PhantomRecipe(ann=ANN_PX.scaled(0.5), side=256, n_cracks=3, seed=43))
    assert not np.array_equal(a.values, c.values)


def test_roi_fraction_matches_area():
    img = t.generate_annulus(t.PhantomRecipe(ann=ANN_PX, side=512, n_cracks=0))
    frac = img.roi_mask.mean()
    assert frac == pytest.approx(np.pi * (235.0**2 - 115.0**2) / 512**2, rel=1e-2)


def test_roi_is_pixel_center_rule():
    img = t.generate_annulus(t.PhantomRecipe(ann=ANN_PX.scaled(0.25), side=128))
    c = (128 - 1) / 2.0
    ii = np.arange(128) - c
    r = np.hypot(ii[None, :], ii[:, None])
    ann = ANN_PX.scaled(0.25)
    np.testing.assert_array_equal(img.roi_mask, (r >= ann.r_inner) & (r <= ann.r_outer))


def test_cracks_carve_wall():
    rec = t.PhantomRecipe(ann=ANN_PX, side=512, n_cracks=6, seed=5, crack_density=0.0)
    img = t.generate_annulus(rec)
    pure = t.generate_annulus(t.PhantomRecipe(ann=ANN_PX, side=512, n_cracks=0))
    diff = pure.values - img.values
    assert (diff >= -1e-12).all()  # cracks only remove material
    assert diff.sum() > 0
    # removed pixels lie inside the wall
    assert img.roi_mask[diff > 1e-9].all()


def test_crack_density_value():
    rec = t.PhantomRecipe(ann=ANN_PX.scaled(0.5), side=256, n_cracks=2, seed=1, crack_density=0.3)
    img = t.generate_annulus(rec)
    vals = np.unique(np.round(img.values, 6))
    assert 0.3 in vals


def test_impossible_crack_errors():
    rec = t.PhantomRecipe(
        ann=t.AnnulusSpec(10.0, 12.0), side=32, n_cracks=1,
        crack_size_range=(40, 40), seed=0,
    )
    with pytest.raises(ConfigError):
        t.generate_annulus(rec)


def test_crack_sizes_uniform():
    # both rectangle dimensions drawn uniformly over [10, 30]
    sizes = []
    for seed in range(100):
        rec = t.PhantomRecipe(ann=ANN_PX, side=512, n_cracks=4, seed=seed)
        for _, _, h, w in t.phantom.crack_rectangles(rec):
            sizes.extend([h, w])
    counts = np.bincount(sizes, minlength=31)[10:31]
    chi = stats.chisquare(counts)
    assert chi.pvalue > 0.01


class TestDownscale:
    def test_identity(self, phantom512):
        out = t.downscale(phantom512, 512)
        np.testing.assert_array_equal(out.values, phantom512.values)

    def test_constant_preserved(self):
        img = t.SliceImage(np.full((64, 64), 3.25), 1.0)
        out = t.downscale(img, 16)
        np.testing.assert_allclose(out.values, 3.25)

    def test_mass_preserved(self, phantom512):
        small = t.downscale(phantom512, 64, ANN_PX)
        mass_big = phantom512.values.sum() * phantom512.pixel_size**2
        mass_small = small.values.sum() * small.pixel_size**2
        assert mass_small == pytest.approx(mass_big, rel=1e-2)
        assert small.pixel_size == pytest.approx(phantom512.pixel_size * 8)

    def test_non_divisor_side(self, phantom512):
        out = t.downscale(phantom512, 100, ANN_PX)
        assert out.side == 100
        assert out.values.max() <= phantom512.values.max() + 1e-9

    def test_bad_target(self, phantom512):
        with pytest.raises(ConfigError):
            t.downscale(phantom512, 0)


class TestSliceImage:
    def test_validation(self):
        with pytest.raises(ConfigError):
            t.SliceImage(np.zeros((4, 5)), 1.0)
        with pytest.raises(ConfigError):
            t.SliceImage(np.full((4, 4), np.nan), 1.0)
        with pytest.raises(ConfigError):
            t.SliceImage(np.zeros((4, 4)), 0.0)

    def test_extent(self):
        img = t.SliceImage(np.zeros((10, 10)), 2.5)
        assert img.extent == pytest.approx(25.0)
