"""Randomized annulus phantoms with rectangular wall cracks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .geometry import AnnulusSpec


@dataclass
class SliceImage:
    """Square pixel grid of attenuation values (per mm).

    ``roi_mask`` marks the annulus wall region; it is true exactly where the
    pixel-center distance from the image center lies in [r_inner, r_outer].
    """

    values: np.ndarray
    pixel_size: float
    roi_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ConfigError(f"values must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("values must be finite")
        if self.pixel_size <= 0.0:
            raise ConfigError(f"pixel_size must be positive, got {self.pixel_size}")
        self.values = v
        if self.roi_mask is not None:
            m = np.asarray(self.roi_mask, dtype=bool)
            if m.shape != v.shape:
                raise ConfigError("roi_mask shape must match values")
            self.roi_mask = m

    @property
    def side(self) -> int:
        return self.values.shape[0]

    @property
    def extent(self) -> float:
        """Physical side length (mm)."""
        return self.side * self.pixel_size

    def copy_with(self, values: np.ndarray) -> "SliceImage":
        return SliceImage(values, self.pixel_size, self.roi_mask)


@dataclass(frozen=True)
class PhantomRecipe:
    """Recipe for one randomized annulus slice (all lengths in pixels)."""

    ann: AnnulusSpec = field(default_factory=lambda: AnnulusSpec(115.0, 235.0))
    side: int = 512
    n_cracks: int = 4
    crack_size_range: tuple[int, int] = (10, 30)
    wall_density: float = 1.0
    crack_density: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.crack_size_range
        if not (0 < lo <= hi):
            raise ConfigError(f"bad crack_size_range {self.crack_size_range}")
        if self.n_cracks < 0:
            raise ConfigError("n_cracks must be >= 0")
        if self.ann.r_outer >= self.side / 2.0:
            raise ConfigError("annulus must fit inside the image")


def pixel_center_radii(side: int) -> np.ndarray:
    """Distance of every pixel center from the image center, in pixels."""
    c = (side - 1) / 2.0
    i = np.arange(side, dtype=float)
    x = i - c
    return np.hypot(x[None, :], x[:, None])


def annulus_roi_mask(side: int, ann: AnnulusSpec) -> np.ndarray:
    r = pixel_center_radii(side)
    return (r >= ann.r_inner) & (r <= ann.r_outer)


def _rasterize_annulus(side: int, ann: AnnulusSpec, supersample: int = 4) -> np.ndarray:
    """Area-weighted [0, 1] coverage of the annulus wall per pixel."""
    s = side * supersample
    c = (s - 1) / 2.0
    i = (np.arange(s, dtype=float) - c) / supersample
    r = np.hypot(i[None, :], i[:, None])
    hi = (r >= ann.r_inner) & (r <= ann.r_outer)
    cov = hi.reshape(side, supersample, side, supersample).mean(axis=(1, 3))
    return cov


def crack_rectangles(recipe: PhantomRecipe) -> list[tuple[int, int, int, int]]:
    """Sample the crack placements for a recipe: (i0, j0, height, width) each.

    Rectangles are axis aligned with integer side lengths drawn uniformly
    from ``crack_size_range`` and centers drawn area-uniformly over the wall
    annulus; a rectangle that does not fit the image or misses the wall is
    resampled (bounded retries, then error). Deterministic given the seed.
    """
    side, ann = recipe.side, recipe.ann
    wall = annulus_roi_mask(side, ann)
    rng = np.random.default_rng(recipe.seed)
    lo, hi = recipe.crack_size_range
    rects = []
    for k in range(recipe.n_cracks):
        w = int(rng.integers(lo, hi + 1))
        h = int(rng.integers(lo, hi + 1))
        for _ in range(200):
            rad = np.sqrt(rng.uniform(ann.r_inner**2, ann.r_outer**2))
            phi = rng.uniform(0.0, 2.0 * np.pi)
            ci = (side - 1) / 2.0 + rad * np.sin(phi)
            cj = (side - 1) / 2.0 + rad * np.cos(phi)
            i0, j0 = int(round(ci - h / 2.0)), int(round(cj - w / 2.0))
            if i0 < 0 or j0 < 0 or i0 + h > side or j0 + w > side:
                continue
            if not wall[i0 : i0 + h, j0 : j0 + w].any():
                continue
            rects.append((i0, j0, h, w))
            break
        else:
            raise ConfigError(f"could not place crack {k} ({w}x{h}) inside the wall")
    return rects


def generate_annulus(recipe: PhantomRecipe, pixel_size: float = 1.0, supersample: int = 4) -> SliceImage:
    """Rasterize the annulus wall and cut randomized rectangular cracks.

    Deterministic given the recipe seed; see :func:`crack_rectangles` for the
    placement rule. Crack values are painted only where the rectangle
    overlaps the wall.
    """
    side, ann = recipe.side, recipe.ann
    cov = _rasterize_annulus(side, ann, supersample)
    values = recipe.wall_density * cov
    wall = cov > 0.5
    for i0, j0, h, w in crack_rectangles(recipe):
        patch = wall[i0 : i0 + h, j0 : j0 + w]
        values[i0 : i0 + h, j0 : j0 + w][patch] = recipe.crack_density
    return SliceImage(values, pixel_size, annulus_roi_mask(side, ann))


def downscale(img: SliceImage, target_side: int, ann: AnnulusSpec | None = None) -> SliceImage:
    """Mean-preserving downsampling to ``target_side`` pixels per side.

    Uses exact block averaging when ``target_side`` divides the side and
    bilinear resampling otherwise. The ROI mask is recomputed from the
    scaled annulus when one is given, otherwise rescaled from the source.
    """
    if target_side <= 0:
        raise ConfigError(f"target_side must be positive, got {target_side}")
    side = img.side
    if target_side == side:
        return SliceImage(img.values.copy(), img.pixel_size, img.roi_mask)
    if side % target_side == 0:
        f = side // target_side
        values = img.values.reshape(target_side, f, target_side, f).mean(axis=(1, 3))
    else:
        zoom = target_side / side
        values = ndimage.zoom(img.values, zoom, order=1, grid_mode=True, mode="nearest")
    pixel_size = img.pixel_size * side / target_side

    roi = None
    if ann is not None:
        roi = annulus_roi_mask(target_side, ann.scaled(target_side / side))
    elif img.roi_mask is not None:
        f = target_side / side
        roi = ndimage.zoom(img.roi_mask.astype(float), f, order=0, grid_mode=True, mode="nearest") > 0.5
    return SliceImage(values, pixel_size, roi)


def phantom_batch(base: PhantomRecipe, n: int, pixel_size: float = 1.0) -> list[SliceImage]:
    """n slices with seeds base.seed, base.seed + 1, ..."""
    return [
        generate_annulus(replace(base, seed=base.seed + k), pixel_size=pixel_size)
        for k in range(n)
    ]
