"""Sampling-sufficiency analysis for tangential scan protocols.

A tangential protocol is summarized by the angular range ``theta`` under
which a wall point is viewed and by the number of views ``n_view``
spread across that range. At a small working side this module decides
which (theta, n_view) pairs make total-variation (TV) reconstruction of
a reference slice provably unique, and picks the cheapest certified pair
under a separable cost model.

Uniqueness for a reference image x is certified by two conditions on
the ray operator A and the finite-difference analysis operator D with
gradient-support set I (:func:`uniqueness_test`):

* the stacked matrix (A; D_{I^c}^T) has full column rank, and
* the linear program

      min t  s.t.  A^T w - D_{I^c} v = D_I sign(D_I^T x),  -t <= v <= t

  attains an optimum t* < 1 (solved by :mod:`tangentct.lp`).

:func:`quantify_projection` sweeps a (theta, n_view) grid, keeps the
candidates certified on every phantom of a representative batch, and
returns the argmin of :func:`sampling_objective` as a
:class:`SamplingSpec`. The view count is reported relative to the
sufficient count ``side / 2`` through ``r_view``, which transfers the
protocol to any image side, and ``d_prime`` gives the detector
extension needed to tilt tangential rays deep enough into the wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve

from ._kernels import rows_kernel
from .errors import ConfigError, InfeasibleError
from .geometry import (
    TWO_PI,
    AnnulusSpec,
    ScanGeometry,
    _ray_points,
    default_scan_geometry,
    detector_extension,
    surrogate_geometry,
    tilt_depth_for_angle,
)
from .lp import _FEAS_RELAX, solve_min_t
from .phantom import SliceImage

_BEAMS = ("fan", "parallel")


@dataclass(frozen=True)
class SamplingModelParams:
    """Thresholds and exponents of the protocol cost model."""

    t_theta: float = math.radians(90.0)
    t_nview: int = 32
    t_t: float = 0.999
    alpha: float = 1.5
    beta: float = 1.5
    gamma: float = 2.0

    def __post_init__(self) -> None:
        for name in ("t_theta", "t_nview", "t_t", "alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class SamplingSpec:
    """Certified tangential protocol at the working side.

    ``theta`` is the angular range in radians, ``n_view`` the view count
    at the working side, ``t_star`` the worst certified LP optimum over
    the phantom batch, ``r_view`` the view count relative to the
    sufficient count ``side / 2`` (transfers to other sides through
    :meth:`views_at`), and ``d_prime`` the detector extension in units
    of full-scale pixels on the detector plane.
    """

    theta: float
    n_view: int
    t_star: float
    r_view: float
    d_prime: float

    def __post_init__(self) -> None:
        if not 0.0 < self.theta <= TWO_PI:
            raise ConfigError(f"theta must be in (0, 2*pi], got {self.theta}")
        if self.n_view < 1:
            raise ConfigError(f"n_view must be >= 1, got {self.n_view}")
        if not (np.isfinite(self.t_star) and self.t_star >= 0.0):
            raise ConfigError(f"t_star must be finite and >= 0, got {self.t_star}")
        if not self.r_view > 0.0:
            raise ConfigError(f"r_view must be positive, got {self.r_view}")
        if not self.d_prime >= 0.0:
            raise ConfigError(f"d_prime must be >= 0, got {self.d_prime}")

    def views_at(self, side: int) -> int:
        """View count realizing the same relative rate at another side."""
        if side < 2:
            raise ConfigError(f"side must be >= 2, got {side}")
        return max(1, round(self.r_view * side / 2.0))


@dataclass(frozen=True)
class LPCertificate:
    """Outcome of the two uniqueness conditions for one phantom."""

    full_rank: bool
    t_star: float
    feasible: bool
    solver_status: str

    def __post_init__(self) -> None:
        if self.solver_status not in ("optimal", "infeasible", "iteration-limit"):
            raise ConfigError(f"unknown solver_status {self.solver_status!r}")
        if self.feasible and not np.isfinite(self.t_star):
            raise ConfigError("a feasible certificate needs a finite t_star")
        if np.isfinite(self.t_star) and self.t_star < 0.0:
            raise ConfigError(f"t_star must be >= 0, got {self.t_star}")

    @property
    def passes(self) -> bool:
        """Both uniqueness conditions hold with a converged solve."""
        return (
            self.full_rank
            and self.feasible
            and self.solver_status == "optimal"
            and self.t_star < 1.0
        )


def build_gradient_matrix(img_side: int) -> sparse.csc_matrix:
    """Finite-difference analysis operator D, shape (n, 2n), n = side**2.

    Column p of the first block pairs pixel p with its right neighbour,
    column n + p of the second block pairs it with the neighbour below
    (row-major layout), so ``D.T @ x`` stacks the horizontal forward
    differences first and the vertical ones second. The boundary is
    replicated: columns of the last image column / row stay empty.
    """
    if img_side < 2:
        raise ConfigError(f"img_side must be >= 2, got {img_side}")
    n = img_side * img_side
    p = np.arange(n)
    hsel = p[p % img_side < img_side - 1]
    vsel = p[p // img_side < img_side - 1]
    rows = np.concatenate([hsel, hsel + 1, vsel, vsel + img_side])
    cols = np.concatenate([hsel, hsel, n + vsel, n + vsel])
    data = np.concatenate(
        [
            -np.ones(hsel.size),
            np.ones(hsel.size),
            -np.ones(vsel.size),
            np.ones(vsel.size),
        ]
    )
    return sparse.csc_matrix((data, (rows, cols)), shape=(n, 2 * n))


def build_system_matrix(
    img_side: int,
    theta: float,
    n_view: int,
    geom: ScanGeometry | None = None,
    *,
    beam: str = "fan",
    max_cells: int = 1 << 26,
) -> sparse.csr_matrix:
    """Ray-intersection matrix of a limited-range protocol, m x n sparse.

    ``n_view`` views are spaced uniformly (endpoints included) across an
    arc of ``theta`` radians and hit a detector of ``2 * img_side`` bins,
    each one working pixel wide at the isocenter. Rows hold the exact
    ray-pixel intersection lengths (mm) in view-major order, so
    m = n_view * 2 * img_side and n = img_side**2. ``beam`` selects the
    fan layout of ``geom`` or a far-source parallel variant for
    sensitivity checks; ``max_cells`` caps m * n to keep the downstream
    dense factorizations affordable.
    """
    base = default_scan_geometry() if geom is None else geom
    if not 0.0 < theta <= TWO_PI:
        raise ConfigError(f"theta must be in (0, 2*pi], got {theta}")
    if n_view < 1:
        raise ConfigError(f"n_view must be >= 1, got {n_view}")
    if beam not in _BEAMS:
        raise ConfigError(f"beam must be one of {_BEAMS}, got {beam!r}")
    n = img_side * img_side
    m = n_view * 2 * img_side
    if m * n > max_cells:
        raise ConfigError(
            f"system matrix is {m} x {n}, above the cap of {max_cells} cells; "
            "reduce img_side or n_view, or raise max_cells"
        )
    pixel = base.fov / img_side
    surr = surrogate_geometry(img_side, base)
    if beam == "parallel":
        sod = 4096.0 * base.fov
        surr = ScanGeometry(
            sod=sod,
            sdd=sod * (1.0 + 1e-9),
            n_bins=2 * img_side,
            bin_pitch=pixel * (1.0 + 1e-9),
            n_views_full=surr.n_views_full,
            angle_step=surr.angle_step,
        )
    if n_view == 1:
        views = np.zeros(1)
    else:
        views = np.linspace(-theta / 2.0, theta / 2.0, n_view)
    srcs, dirs = _ray_points(surr, views)
    mask = np.ones((n_view, surr.n_bins), dtype=bool)
    cap = m * (2 * img_side + 4)
    indptr = np.zeros(m + 1, dtype=np.int64)
    indices = np.empty(cap, dtype=np.int64)
    lengths = np.empty(cap, dtype=np.float64)
    nnz = rows_kernel(img_side, pixel, srcs, dirs, mask, indptr, indices, lengths)
    return sparse.csr_matrix(
        (lengths[:nnz].copy(), indices[:nnz].copy(), indptr), shape=(m, n)
    )


def _full_column_rank(A: sparse.csr_matrix, Dc: sparse.csc_matrix) -> bool:
    """Full column rank of the stacked (A; Dc^T), decided on its Gram matrix.

    A Cholesky failure means the Gram matrix is numerically semidefinite;
    otherwise a few forward / inverse power iterations bracket its extreme
    eigenvalues, compared against an ``n * eps`` relative cutoff. On the
    Gram spectrum (squared singular values) this cutoff is stricter than
    the usual singular-value test, i.e. fails toward "rank deficient".
    """
    n = A.shape[1]
    G = (A.T @ A).toarray() + (Dc @ Dc.T).toarray()
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(20):
        v = G @ v
        v /= np.linalg.norm(v)
    lam_max = float(v @ (G @ v))
    if not (np.isfinite(lam_max) and lam_max > 0.0):
        return False
    try:
        cf = cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return False
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    for _ in range(20):
        u = cho_solve(cf, u, check_finite=False)
        u /= np.linalg.norm(u)
    lam_min = float(u @ (G @ u))
    return lam_min > n * np.finfo(float).eps * lam_max


def _min_t_without_free_columns(
    A: sparse.csr_matrix, h: np.ndarray
) -> tuple[float, bool, str]:
    """Certificate LP when every analysis column lies in the support.

    With no free columns the program reduces to the linear system
    A^T w = h, so t* = 0 exactly when that system is solvable.
    """
    At = A.toarray().T
    w, *_ = np.linalg.lstsq(At, h, rcond=None)
    if np.linalg.norm(At @ w - h) <= 1e-8 * max(1.0, np.linalg.norm(h)):
        return 0.0, True, "optimal"
    return math.inf, False, "infeasible"


def uniqueness_test(
    A: sparse.spmatrix,
    D: sparse.spmatrix,
    x_ref: SliceImage | np.ndarray,
    *,
    support_threshold: float = 1e-8,
    lp_tol: float = 1e-8,
    lp_max_iter: int = 100,
) -> LPCertificate:
    """Certify unique TV recovery of ``x_ref`` from the rays of ``A``.

    Splits the analysis columns of ``D`` by the gradient support
    I = {k : |(D^T x)_k| > support_threshold}, then checks (a) full
    column rank of the stacked (A; D_{I^c}^T) and (b) the optimum of the
    certificate LP of the module docstring. The certificate passes iff
    both conditions hold with t* < 1; an infeasible or unconverged solve
    fails conservatively ("iteration-limit" never passes even when a
    feasible iterate was found).
    """
    x = x_ref.values if isinstance(x_ref, SliceImage) else np.asarray(x_ref, dtype=float)
    flat = np.ascontiguousarray(x, dtype=float).ravel()
    A = sparse.csr_matrix(A)
    D = sparse.csc_matrix(D)
    m, n = A.shape
    side = math.isqrt(n)
    if side * side != n:
        raise ConfigError(f"A must act on a square image, got n = {n}")
    if D.shape != (n, 2 * n):
        raise ConfigError(f"D must be {n} x {2 * n}, got {D.shape}")
    if flat.size != n:
        raise ConfigError(f"x_ref has {flat.size} pixels, expected {n}")

    g = D.T @ flat
    on = np.abs(g) > support_threshold
    h = np.asarray(D[:, on] @ np.sign(g[on])).ravel() if on.any() else np.zeros(n)
    Dc = sparse.csc_matrix(D[:, ~on])
    full_rank = _full_column_rank(A, Dc)

    if Dc.nnz == 0:
        t_star, feasible, status = _min_t_without_free_columns(A, h)
    else:
        res = solve_min_t(A, Dc, h, side, tol=lp_tol, max_iter=lp_max_iter)
        if res.status == "optimal":
            t_star, feasible, status = res.t, True, "optimal"
        elif res.status == "infeasible":
            t_star, feasible, status = math.inf, False, "infeasible"
        else:
            feasible = res.primal_infeasibility < _FEAS_RELAX * lp_tol
            t_star = res.t if feasible else math.inf
            status = "iteration-limit"
    return LPCertificate(
        full_rank=full_rank, t_star=t_star, feasible=feasible, solver_status=status
    )


def _objective(
    theta: float, n_view: int, t_star: float, params: SamplingModelParams
) -> float:
    return (
        (theta / params.t_theta) ** params.alpha
        * (n_view / params.t_nview) ** params.beta
        * (t_star / params.t_t) ** params.gamma
    )


def sampling_objective(spec: SamplingSpec, params: SamplingModelParams) -> float:
    """Separable protocol cost (theta/T_th)^a * (n_view/T_nv)^b * (t/T_t)^g."""
    if spec.theta > params.t_theta * (1.0 + 1e-12):
        raise ConfigError(
            f"theta {spec.theta} exceeds the threshold {params.t_theta}"
        )
    if spec.n_view > params.t_nview:
        raise ConfigError(
            f"n_view {spec.n_view} exceeds the threshold {params.t_nview}"
        )
    return _objective(spec.theta, spec.n_view, spec.t_star, params)


@dataclass(frozen=True)
class _SupportData:
    """Per-phantom LP ingredients: rhs h and off-support columns Dc."""

    h: np.ndarray
    Dc: sparse.csc_matrix

    @staticmethod
    def from_phantom(
        D: sparse.csc_matrix, ph: SliceImage, threshold: float
    ) -> "_SupportData":
        g = D.T @ ph.values.ravel()
        on = np.abs(g) > threshold
        Dc = sparse.csc_matrix(D[:, ~on])
        if Dc.nnz == 0:
            raise ConfigError(
                "phantom gradient support covers every nonzero analysis column"
            )
        h = np.asarray(D[:, on] @ np.sign(g[on])).ravel() if on.any() else np.zeros(D.shape[0])
        return _SupportData(h=h, Dc=Dc)


def _sampling_grid(
    grid: tuple[Sequence[float], Sequence[int]] | None,
    params: SamplingModelParams,
) -> tuple[list[float], list[int]]:
    if grid is None:
        thetas = np.radians(np.append(np.arange(20.0, 90.0, 4.0), 90.0))
        n_views = np.arange(4, 33, 2)
    else:
        thetas = np.asarray(sorted(grid[0]), dtype=float)
        n_views = np.asarray(sorted(int(v) for v in grid[1]), dtype=int)
    if thetas.size == 0 or n_views.size == 0:
        raise ConfigError("the sampling grid must not be empty")
    if np.any(thetas <= 0.0) or np.any(n_views < 1):
        raise ConfigError("grid candidates must have theta > 0 and n_view >= 1")
    thetas = thetas[thetas <= params.t_theta * (1.0 + 1e-12)]
    n_views = n_views[n_views <= params.t_nview]
    if thetas.size == 0 or n_views.size == 0:
        raise ConfigError("every grid candidate lies outside the model thresholds")
    return thetas.tolist(), n_views.tolist()


def quantify_projection(
    phantoms: Sequence[SliceImage],
    geom: ScanGeometry | None = None,
    params: SamplingModelParams | None = None,
    grid: tuple[Sequence[float], Sequence[int]] | None = None,
    *,
    ann: AnnulusSpec | None = None,
    full_side: int = 512,
    frontier: int = 3,
    lp_tol: float = 1e-8,
    lp_max_iter: int = 100,
    support_threshold: float = 1e-8,
    beam: str = "fan",
) -> SamplingSpec:
    """Cheapest (theta, n_view) protocol certified on every phantom.

    The sweep relies on the empirical monotonicity of the certificate
    and probes with the first phantom, so callers should put the most
    demanding phantom (largest gradient support) first. For each theta
    (ascending) the minimal certified n_view is located by bisection
    with early-exit threshold probes of the LP, reusing the previous
    minimum as the upper bracket. The next ``frontier`` view counts
    above each minimum are solved to optimality and ranked by
    :func:`sampling_objective`; a frontier solve is abandoned early
    once its certified lower bound proves it cannot beat the best
    ranked candidate. Candidates are then validated in rank order with
    full :func:`uniqueness_test` runs (rank condition included) on
    every phantom, and the first fully certified one is returned with
    ``t_star`` aggregated over the batch. ``ann`` (mm; defaults to the
    standard wall annulus scaled to the field of view) and
    ``full_side`` only enter the reported ``d_prime``.

    Raises :class:`InfeasibleError` with the least-infeasible probe when
    no grid candidate certifies on all phantoms.
    """
    base = default_scan_geometry() if geom is None else geom
    params = SamplingModelParams() if params is None else params
    if not phantoms:
        raise ConfigError("need at least one phantom")
    side = phantoms[0].side
    if any(ph.side != side for ph in phantoms):
        raise ConfigError("phantoms must share one side")
    if full_side < 2:
        raise ConfigError(f"full_side must be >= 2, got {full_side}")
    if frontier < 1:
        raise ConfigError(f"frontier must be >= 1, got {frontier}")
    thetas, n_views = _sampling_grid(grid, params)
    wall = AnnulusSpec(115.0, 235.0).scaled(base.fov / 512.0) if ann is None else ann
    D = build_gradient_matrix(side)
    probe = _SupportData.from_phantom(D, phantoms[0], support_threshold)

    candidates: list[tuple[float, float, int]] = []
    diag: tuple[float, int, str, float] | None = None
    prev_min: int | None = None
    for theta in thetas:
        mats: dict[int, sparse.csr_matrix] = {}

        def amat(nv: int) -> sparse.csr_matrix:
            if nv not in mats:
                mats[nv] = build_system_matrix(side, theta, nv, base, beam=beam)
            return mats[nv]

        def certifies(nv: int) -> bool:
            nonlocal diag
            res = solve_min_t(
                amat(nv),
                probe.Dc,
                probe.h,
                side,
                tol=lp_tol,
                max_iter=lp_max_iter,
                decision_threshold=params.t_t,
            )
            if res.status == "below_threshold" or (
                res.status == "optimal" and res.t < params.t_t
            ):
                return True
            if diag is None or res.dual_bound < diag[3]:
                diag = (theta, nv, res.status, res.dual_bound)
            return False

        hi = len(n_views) - 1 if prev_min is None else prev_min
        while hi < len(n_views) and not certifies(n_views[hi]):
            hi += 1
        if hi >= len(n_views):
            continue
        lo = 0
        while lo < hi:
            mid = (lo + hi) // 2
            if certifies(n_views[mid]):
                hi = mid
            else:
                lo = mid + 1
        prev_min = hi

        for k in range(hi, min(hi + frontier, len(n_views))):
            nv = n_views[k]
            # t* beyond which this candidate cannot beat the ranked best
            cutoff = params.t_t
            if candidates:
                best_obj = min(c[0] for c in candidates)
                scale = _objective(theta, nv, params.t_t, params)
                cutoff = min(cutoff, params.t_t * (best_obj / scale) ** (1.0 / params.gamma))
            res = solve_min_t(
                amat(nv),
                probe.Dc,
                probe.h,
                side,
                tol=lp_tol,
                max_iter=lp_max_iter,
                abort_above=cutoff,
                decision_margin=1e-6,
            )
            if res.status == "optimal" and res.t < params.t_t:
                candidates.append((_objective(theta, nv, res.t, params), theta, nv))

    candidates.sort(key=lambda c: c[0])
    for _, theta, nv in candidates:
        A = build_system_matrix(side, theta, nv, base, beam=beam)
        t_max = 0.0
        certified = True
        for ph in phantoms:
            cert = uniqueness_test(
                A,
                D,
                ph,
                support_threshold=support_threshold,
                lp_tol=lp_tol,
                lp_max_iter=lp_max_iter,
            )
            if not (cert.passes and cert.t_star < params.t_t):
                certified = False
                if np.isfinite(cert.t_star) and (diag is None or cert.t_star < diag[3]):
                    diag = (theta, nv, f"batch {cert.solver_status}", cert.t_star)
                break
            t_max = max(t_max, cert.t_star)
        if certified:
            depth = tilt_depth_for_angle(wall.r_inner, theta)
            ext_mm = detector_extension(base, wall.r_inner, depth)
            return SamplingSpec(
                theta=theta,
                n_view=nv,
                t_star=t_max,
                r_view=nv / (side / 2.0),
                d_prime=ext_mm / (base.fov / full_side),
            )

    if diag is not None:
        theta, nv, status, bound = diag
        detail = (
            f"closest probe at theta = {math.degrees(theta):.1f} deg, "
            f"n_view = {nv}: {status}, certified lower bound {bound:.4g}"
        )
    else:
        detail = "no probe produced a diagnostic"
    raise InfeasibleError(
        f"no (theta, n_view) candidate certified on all {len(phantoms)} "
        f"phantom(s); {detail}"
    )
