"""Fan-beam forward projector, exact adjoint, and the tangential ray mask.

Line integrals are taken in physical units: attenuation per mm times chord
length in mm. A ray is "measured" in a tangential scan when its signed
isocenter distance falls inside the band the offset detector actually sees,
from just inside the wall (inner radius minus the quantified tilt depth) to
just outside it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, GeometryError
from .geometry import AnnulusSpec, ScanGeometry, _ray_points
from .phantom import SliceImage


@dataclass
class Sinogram:
    """Fan-beam line integrals on a (view, bin) grid.

    ``mask`` flags the rays that were actually measured; ``None`` means all
    of them. ``values`` outside the mask are estimates (or zero), never data.
    """

    values: np.ndarray
    geom: ScanGeometry
    view_angles: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        a = np.asarray(self.view_angles, dtype=float)
        if v.ndim != 2:
            raise ConfigError(f"sinogram values must be 2-D, got {v.shape}")
        if a.shape != (v.shape[0],):
            raise ConfigError("view_angles length must match the view axis")
        if v.shape[1] != self.geom.n_bins:
            raise ConfigError(
                f"bin axis {v.shape[1]} does not match geometry ({self.geom.n_bins} bins)"
            )
        self.values = v
        self.view_angles = a
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != v.shape:
                raise ConfigError("mask shape must match values")
            self.mask = m

    @property
    def n_views(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    def measured(self) -> np.ndarray:
        return np.ones_like(self.values, dtype=bool) if self.mask is None else self.mask

    def copy_with(self, values: np.ndarray, mask: np.ndarray | None = None) -> "Sinogram":
        return Sinogram(
            values,
            self.geom,
            self.view_angles.copy(),
            self.mask.copy() if (mask is None and self.mask is not None) else mask,
        )


def forward_project(
    image: SliceImage, geom: ScanGeometry, view_angles: np.ndarray | None = None
) -> Sinogram:
    """Line integrals of ``image`` for every (view, bin) ray."""
    if view_angles is None:
        view_angles = geom.view_angles(geom.n_views_full)
    view_angles = np.ascontiguousarray(view_angles, dtype=float)
    srcs, dirs = _ray_points(geom, view_angles)
    out = np.empty((view_angles.size, geom.n_bins), dtype=float)
    _kernels.forward_kernel(
        np.ascontiguousarray(image.values), image.pixel_size, srcs, dirs, out
    )
    return Sinogram(out, geom, view_angles)


def adjoint_project(sino: Sinogram, side: int, pixel_size: float) -> np.ndarray:
    """Exact transpose of :func:`forward_project` (unfiltered, unweighted).

    Rays outside the sinogram mask contribute nothing.
    """
    srcs, dirs = _ray_points(sino.geom, sino.view_angles)
    out = np.zeros((side, side), dtype=float)
    _kernels.adjoint_kernel(
        np.ascontiguousarray(sino.values),
        np.ascontiguousarray(sino.measured()),
        pixel_size,
        srcs,
        dirs,
        out,
    )
    return out


def ray_coverage(
    geom: ScanGeometry, view_angles: np.ndarray, side: int, pixel_size: float,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-ray grid path length and per-pixel total length (SART normalizers)."""
    view_angles = np.ascontiguousarray(view_angles, dtype=float)
    srcs, dirs = _ray_points(geom, view_angles)
    if mask is None:
        mask = np.ones((view_angles.size, geom.n_bins), dtype=bool)
    row = np.zeros((view_angles.size, geom.n_bins), dtype=float)
    col = np.zeros((side, side), dtype=float)
    _kernels.row_sums_kernel(
        side, pixel_size, srcs, dirs, np.ascontiguousarray(mask), row, col
    )
    return row, col


def _tangent_offset(geom: ScanGeometry, r: float) -> float:
    """Detector offset u of the ray tangent to the circle of radius r."""
    if not 0.0 <= r < geom.sod:
        raise GeometryError(f"radius {r} outside [0, sod)")
    return r * geom.sdd / np.sqrt(geom.sod**2 - r**2)


def tangential_mask(
    geom: ScanGeometry,
    ann_mm: AnnulusSpec,
    d_prime_mm: float = 0.0,
    n_views: int | None = None,
    outer_margin_mm: float | None = None,
) -> np.ndarray:
    """Boolean (view, bin) mask of the rays a tangential scan measures.

    The measured band is one-sided in detector offset u: from the inner-wall
    tangent pulled back by the detector extension ``d_prime_mm`` out to the
    outer-wall tangent plus a margin (default: two bins of air). The opposite
    tangent rays (negative u) are the unmeasured conjugates. With
    ``d_prime_mm = 0`` the innermost measured ray grazes the inner circle.
    """
    if d_prime_mm < 0.0:
        raise GeometryError(f"detector extension must be >= 0, got {d_prime_mm}")
    if outer_margin_mm is None:
        outer_margin_mm = 2.0 * geom.bin_pitch
    u = geom.bin_offsets()
    lo = _tangent_offset(geom, ann_mm.r_inner) - d_prime_mm
    hi = _tangent_offset(geom, ann_mm.r_outer) + outer_margin_mm
    row = (u >= lo) & (u <= hi)
    if not row.any():
        raise GeometryError("tangential band contains no detector bins")
    nv = geom.n_views_full if n_views is None else n_views
    return np.broadcast_to(row, (nv, geom.n_bins)).copy()


@dataclass(frozen=True)
class NoiseModel:
    """Transmission Poisson statistics: counts ~ Poisson(n0 * exp(-p))."""

    n0: float = 2.0e5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n0 <= 0.0:
            raise ConfigError(f"n0 must be positive, got {self.n0}")


def apply_poisson_noise(sino: Sinogram, model: NoiseModel) -> Sinogram:
    """Resample measured rays through the count model; estimates untouched.

    Zero counts are clamped to one count before the log. Deterministic for a
    fixed seed, independent of the mask layout (draws are made for every bin
    and applied only where measured).
    """
    rng = np.random.default_rng(np.random.PCG64(model.seed))
    p = sino.values
    counts = rng.poisson(model.n0 * np.exp(-np.clip(p, 0.0, None)))
    noisy = -np.log(np.maximum(counts, 1) / model.n0)
    out = np.where(sino.measured(), noisy, p)
    return sino.copy_with(out)
