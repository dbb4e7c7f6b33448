"""Fan-beam scan geometry and tangential-ray trigonometry.

Conventions used throughout the package:

* The source rotates counterclockwise; at rotation angle ``beta`` it sits at
  ``SOD * (cos beta, sin beta)`` and looks at the isocenter.
* The detector is flat, at distance ``SDD`` from the source, with its
  tangent direction ``(-sin beta, cos beta)``. Bin ``j`` has signed offset
  ``u_j = (j - (n_bins - 1) / 2 + detector_offset) * bin_pitch``.
* The fan angle of a bin is ``gamma = atan(u / SDD)``, positive toward
  increasing bin index. A ray's signed distance from the isocenter is
  ``SOD * sin(gamma)``.

All lengths are millimetres unless a name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ScanGeometry:
    """Fan-beam acquisition description.

    Attributes
    ----------
    sod : float
        Source to isocenter distance (mm).
    sdd : float
        Source to detector distance (mm).
    n_bins : int
        Number of detector units.
    bin_pitch : float
        Detector unit size (mm).
    n_views_full : int
        Number of views covering ``[0, 2*pi)``.
    angle_step : float
        Angular step between views (radians).
    detector_offset : float
        Tangential offset of the detector center from the central ray,
        in (possibly fractional) bins.
    """

    sod: float
    sdd: float
    n_bins: int
    bin_pitch: float
    n_views_full: int
    angle_step: float
    detector_offset: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sod > 0.0):
            raise GeometryError(f"sod must be positive, got {self.sod}")
        if not (self.sdd > self.sod):
            raise GeometryError(f"sdd must exceed sod, got sdd={self.sdd} sod={self.sod}")
        if self.n_bins < 1:
            raise GeometryError(f"n_bins must be >= 1, got {self.n_bins}")
        if not (self.bin_pitch > 0.0):
            raise GeometryError(f"bin_pitch must be positive, got {self.bin_pitch}")
        if abs(self.n_views_full * self.angle_step - TWO_PI) > 1e-9:
            raise GeometryError(
                "n_views_full * angle_step must equal 2*pi within 1e-9, got "
                f"{self.n_views_full} * {self.angle_step}"
            )

    @property
    def magnification(self) -> float:
        return self.sdd / self.sod

    @property
    def fov(self) -> float:
        """Detector span projected to the isocenter plane (mm)."""
        return self.n_bins * self.bin_pitch / self.magnification

    def bin_offsets(self) -> np.ndarray:
        """Signed detector-plane offsets u_j of all bins (mm)."""
        j = np.arange(self.n_bins, dtype=float)
        return (j - (self.n_bins - 1) / 2.0 + self.detector_offset) * self.bin_pitch

    def bin_gammas(self) -> np.ndarray:
        """Fan angles of all bins (radians)."""
        return np.arctan(self.bin_offsets() / self.sdd)

    def bin_isocenter_distances(self) -> np.ndarray:
        """Signed ray-to-isocenter distances s_j = SOD * sin(gamma_j) (mm)."""
        return self.sod * np.sin(self.bin_gammas())

    def view_angles(self, n_views: int | None = None) -> np.ndarray:
        """Uniform source angles over [0, 2*pi) for ``n_views`` views."""
        n = self.n_views_full if n_views is None else int(n_views)
        if n < 1:
            raise GeometryError(f"n_views must be >= 1, got {n}")
        return np.arange(n, dtype=float) * (TWO_PI / n)


@dataclass(frozen=True)
class AnnulusSpec:
    """Annular object: wall between two concentric circles."""

    r_inner: float
    r_outer: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not (0.0 < self.r_inner < self.r_outer):
            raise GeometryError(
                f"need 0 < r_inner < r_outer, got {self.r_inner}, {self.r_outer}"
            )

    def scaled(self, factor: float) -> "AnnulusSpec":
        return AnnulusSpec(
            self.r_inner * factor,
            self.r_outer * factor,
            (self.center[0] * factor, self.center[1] * factor),
        )


@dataclass(frozen=True)
class RayIndex:
    """Index of one ray inside a sinogram grid."""

    view: int
    bin: int

    def __post_init__(self) -> None:
        if self.view < 0 or self.bin < 0:
            raise GeometryError(f"ray index must be non-negative, got {self}")

    def in_range(self, n_views: int, n_bins: int) -> bool:
        return self.view < n_views and self.bin < n_bins


def default_scan_geometry() -> ScanGeometry:
    """Industrial flat-panel geometry used as the toolkit default.

    Long standoff (1500 mm to isocenter, 150 mm more to the panel),
    3072 units of 0.139 mm, and a 0.25 degree rotation step.
    """
    return ScanGeometry(
        sod=1500.0,
        sdd=1650.0,
        n_bins=3072,
        bin_pitch=0.139,
        n_views_full=1440,
        angle_step=TWO_PI / 1440,
        detector_offset=0.0,
    )


def surrogate_geometry(side: int, base: ScanGeometry | None = None, n_views_full: int = 360) -> ScanGeometry:
    """Geometry for sampling analysis at a small working image side.

    Keeps the base SOD/SDD but resizes the detector to ``2 * side`` bins
    whose projection onto the isocenter plane is exactly one working pixel,
    so the detector span equals twice the image side. This is the detector
    model behind the relative sampling rate (views / (n / n_bins)).
    Distances stay in mm; one working pixel is ``base.fov / side`` mm.
    """
    if side < 2:
        raise GeometryError(f"side must be >= 2, got {side}")
    g = base if base is not None else default_scan_geometry()
    pixel = g.fov / side
    return ScanGeometry(
        sod=g.sod,
        sdd=g.sdd,
        n_bins=2 * side,
        bin_pitch=pixel * g.magnification,
        n_views_full=n_views_full,
        angle_step=TWO_PI / n_views_full,
        detector_offset=0.0,
    )


def angle_coverage(r: float, big_l: float) -> float:
    """Angular range over which a point at radius ``big_l`` is sampled.

    A point at radius L outside an unscanned core of radius r is seen by
    tangential rays over an arc of 2*arccos(r / L).
    """
    if not (0.0 < r <= big_l):
        raise GeometryError(f"need 0 < r <= L, got r={r}, L={big_l}")
    return 2.0 * math.acos(r / big_l)


def tilt_depth_for_angle(r: float, theta: float) -> float:
    """Tilt depth d giving an inner-circle point angular coverage ``theta``.

    Inverts theta = 2*arccos((r - d) / r): tilting the tangential ray
    inward by d enlarges the coverage of points on the core boundary.
    """
    if not (0.0 <= theta <= math.pi):
        raise GeometryError(f"theta must be in [0, pi], got {theta}")
    if r <= 0.0:
        raise GeometryError(f"r must be positive, got {r}")
    return r * (1.0 - math.cos(theta / 2.0))


def detector_extension(geom: ScanGeometry, r: float, d: float) -> float:
    """Extra detector length needed to tilt tangential rays inward by ``d``.

    Difference between the detector offsets of the ray tangent to radius r
    and the ray tangent to radius r - d:

        d' = r*SDD/sqrt(SOD^2 - r^2) - (r - d)*SDD/sqrt(SOD^2 - (r - d)^2)

    Returns mm on the detector plane; divide by ``geom.bin_pitch`` for bins.
    """
    if not (r < geom.sod):
        raise GeometryError(f"annulus radius {r} must be inside sod {geom.sod}")
    if not (0.0 <= d < r):
        raise GeometryError(f"need 0 <= d < r, got d={d}, r={r}")

    def tangent_offset(radius: float) -> float:
        return radius * geom.sdd / math.sqrt(geom.sod**2 - radius**2)

    return tangent_offset(r) - tangent_offset(r - d)


def conjugate_ray(geom: ScanGeometry, gamma: float, beta: float) -> tuple[float, float]:
    """The opposite-side parametrization of the same ray.

    In a circular fan-beam trajectory the line sampled at (gamma, beta) is
    identical to the one at (-gamma, beta + pi - 2*gamma); the rotation
    angle is reduced modulo 2*pi.
    """
    return -gamma, (beta + math.pi - 2.0 * gamma) % TWO_PI


def _ray_points(geom: ScanGeometry, view_angles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Source points (V, 2) and unit ray directions (V, B, 2)."""
    beta = np.asarray(view_angles, dtype=float)
    src = geom.sod * np.stack([np.cos(beta), np.sin(beta)], axis=-1)
    gam = geom.bin_gammas()
    # direction = -(cos(beta - gamma), sin(beta - gamma))
    ang = beta[:, None] - gam[None, :]
    dirs = -np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    return src, dirs


def ray_annulus_lengths(
    geom: ScanGeometry,
    ann: AnnulusSpec,
    view_angles: np.ndarray | None = None,
) -> np.ndarray:
    """Chord length of every fan ray inside the annulus wall.

    Outer-disk chord minus inner-disk chord; rays missing the outer disk
    get 0. Shape (n_views, n_bins), mm.
    """
    if view_angles is None:
        view_angles = geom.view_angles()
    src, dirs = _ray_points(geom, view_angles)
    rel = np.asarray(ann.center, dtype=float)[None, None, :] - src[:, None, :]
    # perpendicular distance from the annulus center to each ray
    h = np.abs(rel[..., 0] * dirs[..., 1] - rel[..., 1] * dirs[..., 0])

    def chord(radius: float) -> np.ndarray:
        inside = np.clip(radius**2 - h**2, 0.0, None)
        return 2.0 * np.sqrt(inside)

    return chord(ann.r_outer) - chord(ann.r_inner)
