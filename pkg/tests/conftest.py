import numpy as np
import pytest

import tangentct as t

# Annulus of the standard test object: 470 px outer / 230 px inner diameter
# on a 512 grid, expressed in pixels.
ANN_PX = t.AnnulusSpec(115.0, 235.0)


@pytest.fixture(scope="session")
def full_geom():
    return t.default_scan_geometry()


@pytest.fixture(scope="session")
def px512(full_geom):
    return full_geom.fov / 512


@pytest.fixture(scope="session")
def ann_mm(px512):
    return ANN_PX.scaled(px512)


@pytest.fixture(scope="session")
def geom64(full_geom):
    return t.surrogate_geometry(64, full_geom)


@pytest.fixture(scope="session")
def phantom512(px512):
    rec = t.PhantomRecipe(ann=ANN_PX, side=512, n_cracks=4, seed=11)
    return t.generate_annulus(rec, pixel_size=px512)


@pytest.fixture(scope="session")
def phantom64(phantom512):
    return t.downscale(phantom512, 64, ANN_PX)


def supersampled_disk(side: int, radius_px: float, factor: int = 8) -> np.ndarray:
    """Area-weighted raster of a centered disk (shared test helper)."""
    s2 = side * factor
    c2 = (s2 - 1) / 2.0
    i2 = (np.arange(s2) - c2) / factor
    r2 = np.hypot(i2[None, :], i2[:, None])
    return (r2 <= radius_px).reshape(side, factor, side, factor).mean(axis=(1, 3))
