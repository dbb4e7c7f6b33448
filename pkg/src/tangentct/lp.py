"""Interior-point solver for the sign-pattern certificate linear program.

The program, in the variables (w, v_c, t):

    minimize    t
    subject to  A^T w - D_c v_c = h,      -t <= v_c <= t

where A is the (m x n) ray matrix, D_c the (n x K) off-support gradient
columns, and h = D_I sign(D_I^T x). Its dual is

    maximize    h^T y
    subject to  A y = 0,  ||D_c^T y||_1 <= 1,

so any y with A y ~= 0 yields the certified lower bound h^T y / ||D_c^T y||_1.

A Mehrotra predictor-corrector iteration is specialized to the problem's
shape. Eliminating the box multipliers reduces each Newton step to a saddle
system in (dy, dw) whose leading block is B = D_c W D_c^T plus a rank-one
term: B is banded (gradient columns couple pixel pairs at offsets 1 and
`side`) but exactly singular along indicators of the connected components of
the pair graph. The step is therefore solved in bordered form - a banded
Cholesky of B + delta*I, a Woodbury lift of the known component null space,
and a small dense system coupling dw with the rank-one and null-space
coefficients - followed by iterative refinement against the exact sparse
operators. This avoids both a generic sparse LU and the severe
ill-conditioning of plain normal equations.

For sweep probes that only need "is t* below the threshold or not", pass
``decision_threshold``: iteration stops as soon as either the primal value
certifies t* below it or the certified dual bound places t* above it,
typically in a fraction of the iterations of a full solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve, cholesky_banded, cho_solve_banded, lu_factor, lu_solve
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError

_STEP = 0.995
_STALL_LIMIT = 8
_FEAS_RELAX = 1e3  # accepted primal residual, in units of tol, at the floor
_GAP_RELAX = 1e3  # accepted certified bracket width, in units of tol, at the floor
_TRACE = None  # debug hook: set to a callable taking a dict


@dataclass
class LPResult:
    """Outcome of one certificate LP solve."""

    status: str  # optimal | below_threshold | above_threshold | iteration_limit | infeasible
    t: float
    dual_bound: float
    iterations: int
    primal_infeasibility: float
    y: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.status in ("optimal", "below_threshold", "above_threshold")


def _classify_floor(res: LPResult, best_lower: float, tol: float, it: int) -> LPResult:
    """Label a stalled iterate.

    Near-degenerate instances settle at a linear-algebra floor a little above
    ``tol``; the run still counts as optimal when the residual of the best
    iterate and the certified bracket [dual bound, t] are tight enough.
    """
    res.dual_bound = best_lower
    res.iterations = it
    if (
        res.primal_infeasibility < _FEAS_RELAX * tol
        and res.t - best_lower < _GAP_RELAX * tol * (1.0 + abs(res.t))
    ):
        res.status = "optimal"
    else:
        res.status = "iteration_limit"
    return res


class _BandedGram:
    """Banded assembly of B = D_c diag(w) D_c^T plus its exact null space.

    Each column of D_c holds two entries (+1/-1 on a pixel pair at row offset
    1 or `side`), so B occupies three diagonals of the lower band.  Every
    column sums to zero, hence B annihilates indicators of the connected
    components of the pair graph; that null basis is fixed by the sparsity
    pattern and exposed as ``null_basis`` (columns scaled to unit norm).
    """

    def __init__(self, Dc: sparse.csc_matrix, n: int, side: int):
        self.n = n
        self.side = side
        indptr, indices, data = Dc.indptr, Dc.indices, Dc.data
        nnz_per_col = np.diff(indptr)
        if not np.all((nnz_per_col == 2) | (nnz_per_col == 0)):
            raise ConfigError("gradient columns must hold exactly 0 or 2 entries")
        if not np.all(np.abs(data) == 1.0):
            raise ConfigError("gradient entries must be +/-1")
        two = np.where(nnz_per_col == 2)[0]
        first = indices[indptr[two]]
        second = indices[indptr[two] + 1]
        lo = np.minimum(first, second)
        off = np.abs(second.astype(np.int64) - first)
        if not np.all((off == 1) | (off == side)):
            raise ConfigError("gradient columns must couple adjacent pixels")
        self.cols = two          # column index in Dc for each pair
        self.lo = lo             # lower pixel of each pair
        self.hi = np.maximum(first, second)
        self.off = off

        adj = sparse.csr_matrix(
            (np.ones(len(lo)), (self.lo, self.hi)), shape=(n, n)
        )
        n_comp, labels = connected_components(adj, directed=False)
        sizes = np.bincount(labels, minlength=n_comp).astype(float)
        basis = np.zeros((n, n_comp))
        basis[np.arange(n), labels] = 1.0 / np.sqrt(sizes[labels])
        self.null_basis = basis

    def build(self, w: np.ndarray, delta: float) -> np.ndarray:
        """Lower-banded array (side+1, n) of B + delta*I for LAPACK pbtrf."""
        n, side = self.n, self.side
        ab = np.zeros((side + 1, n))
        wp = w[self.cols]
        np.add.at(ab[0], self.lo, wp)
        np.add.at(ab[0], self.hi, wp)
        one = self.off == 1
        np.add.at(ab[1], self.lo[one], -wp[one])
        np.add.at(ab[side], self.lo[~one], -wp[~one])
        ab[0] += delta
        return ab


def solve_min_t(
    A: sparse.csr_matrix,
    Dc: sparse.csc_matrix,
    h: np.ndarray,
    side: int,
    tol: float = 1e-8,
    max_iter: int = 100,
    decision_threshold: float | None = None,
    decision_margin: float = 1e-4,
    abort_above: float | None = None,
) -> LPResult:
    """Solve the min-t certificate LP (see module docstring).

    ``A`` is m x n, ``Dc`` n x K with K >= 1 after zero columns are removed,
    ``h`` length n.  Returns the best primal value and the certified dual
    bound; ``status`` reports how the iteration ended.  "optimal" means
    either full convergence to ``tol`` or a stalled iterate whose primal
    residual and certified bracket [dual_bound, t] are within the relaxed
    floor (``_FEAS_RELAX``/``_GAP_RELAX`` times ``tol``); the achieved
    residual and bracket are always reported on the result, so callers that
    need the strict tolerance can check those fields directly.

    ``abort_above`` is the one-sided variant of ``decision_threshold``: the
    solve runs to optimality unless the certified dual bound proves
    t* > abort_above + decision_margin, in which case it stops early with
    status "above_threshold". Use it to skip candidates that a caller only
    cares about below a cutoff while still getting the exact optimum for
    the survivors.
    """
    m, n = A.shape
    if Dc.shape[0] != n or h.shape != (n,):
        raise ConfigError("inconsistent LP dimensions")
    keep = np.diff(Dc.indptr) > 0
    if not np.all(keep):
        Dc = Dc[:, keep]
    K = Dc.shape[1]
    if K == 0:
        raise ConfigError("no off-support gradient columns: certificate LP is degenerate")

    gram = _BandedGram(Dc, n, side)
    Zb = gram.null_basis
    nc = Zb.shape[1]
    At = A.T.tocsr()
    At_dense = np.ascontiguousarray(At.toarray())
    Dct = Dc.T.tocsr()

    # starting point: w=0, v=0, t=1 with exactly feasible box rows and an
    # exactly dual-feasible (y, mu) pair, so only the h-row starts infeasible
    t = 1.0
    w = np.zeros(m)
    v = np.zeros(K)
    sp = np.full(K, t)
    sm = np.full(K, t)
    mup = np.full(K, 0.5 / K)
    mum = np.full(K, 0.5 / K)
    y = np.zeros(n)

    h_scale = 1.0 + float(np.linalg.norm(h))
    best = LPResult("iteration_limit", np.inf, -np.inf, 0, np.inf)
    best_lower = -np.inf

    for it in range(1, max_iter + 1):
        # current KKT residuals
        F1 = A @ y
        F2 = Dct @ y + mup - mum
        F3 = 1.0 - (mup.sum() + mum.sum())
        F4 = At @ w - Dc @ v - h
        F5 = v - t + sp
        F6 = -v - t + sm
        gap = float(mup @ sp + mum @ sm)
        kbar = gap / (2 * K)
        pinf = float(np.linalg.norm(F4)) / h_scale
        ainf = float(np.linalg.norm(F1)) / (1.0 + float(np.linalg.norm(y)))

        # the rescaled iterate y / max(||D_c^T y||_1, 1) is dual-feasible
        # whenever A y = 0 holds tightly, so only then is the bound certified
        if ainf < 1e-8:
            denom = max(float(np.abs(Dct @ y).sum()), 1.0)
            best_lower = max(best_lower, float(h @ y) / denom)

        if pinf < best.primal_infeasibility or (pinf < tol and t < best.t):
            best = LPResult("iteration_limit", float(t), best_lower, it, pinf, y.copy())

        if (
            pinf < tol
            and gap / (1.0 + abs(t)) < tol
            and t - best_lower < 1e2 * tol * (1.0 + abs(t))
        ):
            return LPResult("optimal", float(t), best_lower, it, pinf, y.copy())
        if decision_threshold is not None:
            if pinf < _FEAS_RELAX * tol and t < decision_threshold - decision_margin:
                return LPResult("below_threshold", float(t), best_lower, it, pinf, y.copy())
            if best_lower > decision_threshold + decision_margin:
                return LPResult("above_threshold", float(t), best_lower, it, pinf, y.copy())
        if abort_above is not None and best_lower > abort_above + decision_margin:
            return LPResult("above_threshold", float(t), best_lower, it, pinf, y.copy())
        if t > 1e7 and pinf > 1e-4:
            return LPResult("infeasible", float(t), best_lower, it, pinf, y.copy())
        if it - best.iterations > _STALL_LIMIT:
            return _classify_floor(best, best_lower, tol, it)

        # scaling vectors for the eliminated box multipliers
        wp = np.clip(mup / sp, 1e-14, 1e14)
        wm = np.clip(mum / sm, 1e-14, 1e14)
        dv = wp + wm
        g = wp - wm
        inv_dv = 1.0 / dv
        phi = max(float(dv.sum() - g @ (inv_dv * g)), 0.0)
        q = Dc @ (inv_dv * g)

        # banded factor of B + delta*I; rho lifts the component null space
        ab = gram.build(inv_dv, 0.0)
        rho = max(float(np.median(ab[0])), 1e-2 * float(ab[0].mean()), 1e-12)
        delta = 1e-8 * rho
        ab[0] += delta
        try:
            cb = cholesky_banded(ab, lower=True)
        except np.linalg.LinAlgError:
            ab[0] += 1e-2 * rho
            cb = cholesky_banded(ab, lower=True)

        Wz = cho_solve_banded((cb, True), Zb)
        inner = np.eye(nc) + rho * (Zb.T @ Wz)
        ci = cho_factor(inner, lower=True)

        def apply_lifted_inverse(x):
            """(B + delta*I + rho*Z Z^T)^-1 applied to vector or matrix x."""
            bx = cho_solve_banded((cb, True), x)
            return bx - Wz @ cho_solve(ci, rho * (Wz.T @ x))

        # bordered blocks shared by predictor, corrector and refinement
        rhs_block = np.empty((n, m + 1))
        rhs_block[:, :m] = At_dense
        rhs_block[:, m] = q
        sol = apply_lifted_inverse(rhs_block)
        Tw = sol[:, :m]
        Tq = sol[:, m]
        Tz = apply_lifted_inverse(Zb)

        ATw = A @ Tw
        ATq = A @ Tq
        ATz = A @ Tz
        qTq = float(q @ Tq)
        qTz = q @ Tz
        ZTz = Zb.T @ Tz
        delta_w = 1e-10 * (1.0 + float(np.trace(ATw)) / m)

        mm = m + 1 + nc
        G = np.empty((mm, mm))
        G[:m, :m] = ATw
        G[np.arange(m), np.arange(m)] += delta_w
        G[:m, m] = ATq
        G[m, :m] = ATq
        G[m, m] = qTq + phi
        G[:m, m + 1:] = -rho * ATz
        G[m + 1:, :m] = ATz.T
        G[m, m + 1:] = -rho * qTz
        G[m + 1:, m] = qTz
        G[m + 1:, m + 1:] = np.eye(nc) - rho * ZTz
        glu = lu_factor(G)

        def solve_bordered(r1, r2, r3, r4):
            """One pass of the perturbed bordered system; returns (dy, dw, f)."""
            r1h = r1 + rho * (Zb @ r4)
            t1 = apply_lifted_inverse(r1h)
            rhs = np.empty(mm)
            rhs[:m] = A @ t1 - r2
            rhs[m] = float(q @ t1) - r3
            rhs[m + 1:] = Zb.T @ t1 - r4
            xs = lu_solve(glu, rhs)
            dw_ = xs[:m]
            f_ = xs[m]
            e_ = xs[m + 1:]
            dy_ = t1 - Tw @ dw_ - Tq * f_ + rho * (Tz @ e_)
            return dy_, dw_, f_

        def solve_saddle(r1, r2, r3):
            """Bordered solve refined against the exact sparse operators."""
            ref_tol = 1e-13 * (
                1.0
                + float(np.abs(r1).max())
                + float(np.abs(r2).max(initial=0.0))
                + abs(r3)
            )
            dy_, dw_, f_ = solve_bordered(r1, r2, r3, np.zeros(nc))
            best_res = np.inf
            best_sol = (dy_, dw_, f_)
            for _ in range(4):
                R1 = r1 - (Dc @ (inv_dv * (Dct @ dy_)) + q * f_ + At @ dw_)
                R2 = r2 - A @ dy_
                R3 = r3 - (float(q @ dy_) - phi * f_)
                res = max(
                    float(np.abs(R1).max()),
                    float(np.abs(R2).max(initial=0.0)),
                    abs(R3),
                )
                if res < best_res:
                    best_res = res
                    best_sol = (dy_.copy(), dw_.copy(), f_)
                else:
                    break
                if res < ref_tol:
                    break
                cy, cw, cf = solve_bordered(R1, R2, R3, np.zeros(nc))
                dy_ = dy_ + cy
                dw_ = dw_ + cw
                f_ = f_ + cf
            return best_sol

        def solve_newton(r7, r8):
            gv = -F2 - r7 / sp + r8 / sm - wp * F5 + wm * F6
            gt = F3 - float((r7 / sp + r8 / sm + wp * F5 + wm * F6).sum())
            gDg = float(g @ (inv_dv * gv))
            ry = -F4 + Dc @ (inv_dv * gv)
            dy, dw, f = solve_saddle(ry, -F1, -(gt - gDg))
            dt = -f
            dvv = inv_dv * (gv - Dct @ dy + g * dt)
            dsp = -F5 - dvv + dt
            dsm = -F6 + dvv + dt
            dmup = (r7 - mup * dsp) / sp
            dmum = (r8 - mum * dsm) / sm
            return dw, dvv, dt, dsp, dsm, dmup, dmum, dy

        # predictor
        r7 = -mup * sp
        r8 = -mum * sm
        dw, dvv, dt, dsp, dsm, dmup, dmum, dy = solve_newton(r7, r8)
        ap = _max_step(sp, dsp, sm, dsm)
        ad = _max_step(mup, dmup, mum, dmum)
        gap_aff = float(
            (mup + ad * dmup) @ (sp + ap * dsp) + (mum + ad * dmum) @ (sm + ap * dsm)
        )
        sigma = (gap_aff / gap) ** 3 if gap > 0 else 0.1
        sigma = min(max(sigma, 1e-8), 0.99)

        # corrector
        r7 = sigma * kbar - mup * sp - dmup * dsp
        r8 = sigma * kbar - mum * sm - dmum * dsm
        dw, dvv, dt, dsp, dsm, dmup, dmum, dy = solve_newton(r7, r8)

        dir_max = max(
            abs(dt),
            float(np.abs(dvv).max()),
            float(np.abs(dw).max(initial=0.0)),
            float(np.abs(dy).max()),
        )
        if not np.isfinite(dir_max) or dir_max > 1e13 * (1.0 + abs(t)):
            best.status = "iteration_limit"
            best.iterations = it
            return best

        ap = _STEP * _max_step(sp, dsp, sm, dsm)
        ad = _STEP * _max_step(mup, dmup, mum, dmum)

        if _TRACE is not None:
            _TRACE(dict(it=it, t=t, pinf=pinf, gap=gap, ainf=ainf,
                        lower=best_lower, sigma=sigma, ap=ap, ad=ad,
                        rho=rho, phi=phi, nc=nc, dt=dt, dir_max=dir_max))

        w += ap * dw
        v += ap * dvv
        t += ap * dt
        sp += ap * dsp
        sm += ap * dsm
        y += ad * dy
        mup += ad * dmup
        mum += ad * dmum

    return _classify_floor(best, best_lower, tol, max_iter)


def _max_step(a1, d1, a2, d2) -> float:
    """Largest step in [0, 1] keeping both vectors strictly positive."""
    step = 1.0
    for a, d in ((a1, d1), (a2, d2)):
        neg = d < 0
        if neg.any():
            step = min(step, float(np.min(-a[neg] / d[neg])))
    return max(min(step, 1.0), 0.0)
