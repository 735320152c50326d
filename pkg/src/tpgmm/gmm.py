"""Quadratic-form minimization and the iterated GMM driver.

The inner solver is Gauss-Newton with step-halving on the quadratic form;
G'CU and G'CG come analytically from the moments module.  The outer loop
alternates re-estimating the optimal weighting matrix with re-minimizing,
until the coefficient vector settles.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, NonConvergence, SeparationError, SingularNormalEquations
from .logistic import fit_logistic
from .moments import eval_moments

BETA_BOX_BOUND = 30.0
SEPARATION_DETECT = 10.0
_START_CLIP = 4.0
_RCOND_MIN = 1e-12


@dataclass
class WeightingMatrix:
    c: np.ndarray
    kind: str = "user"  # identity | optimal | user

    @classmethod
    def identity(cls, k):
        return cls(c=np.eye(k), kind="identity")

    def validate(self):
        if not np.allclose(self.c, self.c.T, atol=1e-10):
            raise ValueError("weighting matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (self.c + self.c.T))) < -1e-10:
            raise ValueError("weighting matrix must be positive semi-definite")
        return self


@dataclass
class GmmFit:
    beta_hat: np.ndarray
    c_used: WeightingMatrix
    qn_value: float
    outer_iterations: int
    inner_trace: list
    converged: bool


def invert_psd(mat):
    """Inverse of a PSD matrix with escalating ridge, then pseudo-inverse.

    Small phase-II cells can leave the moment variance ill-conditioned;
    rather than failing, add ridge eps*mean(diag)*I with eps stepping
    from 1e-8 to 1e-4 and fall back to the Moore-Penrose pseudo-inverse.
    """
    mat = 0.5 * (mat + mat.T)
    scale = float(np.mean(np.diag(mat)))
    for eps in (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4):
        m = mat if eps == 0.0 else mat + eps * scale * np.eye(mat.shape[0])
        w = np.linalg.eigvalsh(m)
        if w[0] > 0 and w[0] / w[-1] > _RCOND_MIN:
            inv = np.linalg.inv(m)
            return 0.5 * (inv + inv.T)
    inv = scipy.linalg.pinvh(mat)
    return 0.5 * (inv + inv.T)


def eval_qn(ctx, beta, c):
    """Quadratic form U_N(beta)' C U_N(beta)."""
    cmat = c.c if isinstance(c, WeightingMatrix) else np.asarray(c, dtype=float)
    u = eval_moments(ctx, beta).u
    if cmat.shape != (len(u), len(u)):
        raise DimensionError(
            f"weighting matrix is {cmat.shape}, need {(len(u), len(u))}"
        )
    return float(u @ cmat @ u)


def minimize_qn(ctx, c, beta_start, tol=1e-9, max_iter=600, max_step=2.0):
    """Gauss-Newton minimization of the quadratic form from beta_start."""
    cmat = c.c if isinstance(c, WeightingMatrix) else np.asarray(c, dtype=float)
    if cmat.shape != (ctx.n_moments, ctx.n_moments):
        raise DimensionError(
            f"weighting matrix is {cmat.shape}, need {(ctx.n_moments, ctx.n_moments)}"
        )
    beta = np.asarray(beta_start, dtype=float).copy()
    val = eval_moments(ctx, beta)
    qn = float(val.u @ cmat @ val.u)
    trace = [(beta.copy(), qn)]
    converged = False
    prev_step = None
    for _ in range(max_iter):
        g = val.g
        gcu = g.T @ cmat @ val.u
        gcg = 0.5 * (g.T @ cmat @ g + (g.T @ cmat @ g).T)
        w, vec = np.linalg.eigh(gcg)
        if not np.isfinite(w[-1]) or w[-1] <= 0:
            raise SingularNormalEquations(
                "G'CG is numerically singular"
            )
        if w[0] / w[-1] < _RCOND_MIN:
            # the Jacobian can lose rank along nearly separated directions;
            # solve in the well-conditioned eigenspace and leave the null
            # directions untouched (truncated pseudo-inverse)
            keep = w > w[-1] * _RCOND_MIN
            proj = vec.T @ gcu
            proj[keep] /= w[keep]
            proj[~keep] = 0.0
            step = vec @ proj
        else:
            step = np.linalg.solve(gcg, gcu)
        if np.max(np.abs(step)) < tol:
            converged = True
            break
        # nonzero-residual problems give Gauss-Newton a slow linear tail:
        # consecutive steps nearly (anti-)parallel with a stable signed
        # ratio lam.  Extrapolate the remaining geometric sum
        # (step / (1 - lam)) and keep it only when it actually lowers the
        # quadratic form.
        if prev_step is not None:
            nrm, pnrm = np.linalg.norm(step), np.linalg.norm(prev_step)
            if nrm > 0.0 and pnrm > 0.0:
                cosine = float(step @ prev_step) / (nrm * pnrm)
                lam = cosine * (nrm / pnrm)
                if abs(cosine) > 0.99 and 0.5 < abs(lam) < 0.9999:
                    cand = beta - step / (1.0 - lam)
                    val_c = eval_moments(ctx, cand)
                    qn_c = float(val_c.u @ cmat @ val_c.u)
                    if qn_c < qn and np.max(np.abs(cand)) <= BETA_BOX_BOUND:
                        beta, val, qn = cand, val_c, qn_c
                        trace.append((beta.copy(), qn))
                        prev_step = None
                        continue
        prev_step = step
        # cap the step so flat valley directions cannot run away
        step_norm = np.max(np.abs(step))
        scale = min(1.0, max_step / step_norm)
        descent = 2.0 * float(gcu @ step)  # directional derivative of Q
        accepted = False
        for _ in range(30):
            cand = beta - scale * step
            val_c = eval_moments(ctx, cand)
            qn_c = float(val_c.u @ cmat @ val_c.u)
            if qn_c <= qn - 1e-4 * scale * descent or qn_c <= qn * (1.0 - 1e-14):
                accepted = True
                break
            if qn_c <= qn and scale * step_norm < tol:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            # at the numerical floor of the quadratic form
            converged = True
            break
        at_floor = qn_c == qn and scale < 1.0
        beta = cand
        val = val_c
        qn = qn_c
        trace.append((beta.copy(), qn))
        if at_floor or scale * np.max(np.abs(step)) < tol:
            converged = True
            break
        if np.max(np.abs(beta)) > BETA_BOX_BOUND:
            raise SeparationError(
                f"|beta| exceeded the box bound {BETA_BOX_BOUND} during GMM"
            )
    if not converged:
        raise NonConvergence(f"Gauss-Newton not converged in {max_iter} iterations")
    cw = c if isinstance(c, WeightingMatrix) else WeightingMatrix(c=cmat)
    return GmmFit(
        beta_hat=beta,
        c_used=cw,
        qn_value=qn,
        outer_iterations=0,
        inner_trace=trace,
        converged=True,
    )


def optimal_c(ctx, beta, main_text_influence=False):
    """Optimal weighting matrix: inverse of the estimated variance of
    sqrt(N) U_N at (beta, theta_hat)."""
    from .variance import un_variance

    s = un_variance(ctx, beta, main_text_influence=main_text_influence)
    return WeightingMatrix(c=invert_psd(s), kind="optimal")


def wl_start(ctx):
    """Warm start: inverse-probability-weighted logistic fit on phase-II."""
    fit = fit_logistic(ctx.ysel, ctx.xsel, weights=1.0 / ctx.pisel)
    return fit.coef


def iterated_gmm(ctx, tol_outer=1e-8, max_outer=200, tol=1e-9, max_iter=600,
                 beta_start=None, main_text_influence=False):
    """Iterated GMM: identity-weighted fit, then alternate optimal-C
    re-weighting and re-minimization until the estimate settles.

    Re-weighting can enter a limit cycle when the quadratic form has a
    shallow valley (the minimizer under C(beta_A) is beta_B and vice
    versa).  When the outer deltas stop contracting, the loop freezes the
    weighting at the average of the matrices seen so far and finishes
    under that fixed C; the sandwich variance is valid for any fixed
    weighting, so inference is unaffected.
    """
    if beta_start is None:
        # clip the warm start: with a pure phase-II cell the IPW fit runs
        # off toward infinity, and starting in the saturated region leaves
        # the Jacobian column numerically zero there.  The quadratic form
        # can still have an interior minimum (the phase-I moments penalize
        # saturated predictions), which a moderate start can reach.
        beta_start = np.clip(wl_start(ctx), -_START_CLIP, _START_CLIP)
    try:
        fit = minimize_qn(ctx, WeightingMatrix.identity(ctx.n_moments), beta_start,
                          tol=tol, max_iter=max_iter)
    except (SeparationError, NonConvergence, SingularNormalEquations):
        # the identity-weighted form can lack a finite minimum along weakly
        # identified directions; the warm start is itself consistent, so use
        # it to seed the optimal weighting instead
        fit = GmmFit(beta_hat=np.asarray(beta_start, dtype=float).copy(),
                     c_used=WeightingMatrix.identity(ctx.n_moments),
                     qn_value=eval_qn(ctx, beta_start, WeightingMatrix.identity(ctx.n_moments)),
                     outer_iterations=0, inner_trace=[], converged=False)
    outer = 1
    c_seen = []
    frozen_c = None
    prev_delta = np.inf
    stalled = 0
    for outer in range(2, max_outer + 2):
        if frozen_c is None:
            c_opt = optimal_c(ctx, fit.beta_hat, main_text_influence=main_text_influence)
            c_seen.append(c_opt.c)
        else:
            c_opt = frozen_c
        new = minimize_qn(ctx, c_opt, fit.beta_hat, tol=tol, max_iter=max_iter)
        delta = np.max(np.abs(new.beta_hat - fit.beta_hat))
        fit = new
        if delta < tol_outer:
            break
        if frozen_c is None:
            stalled = stalled + 1 if delta >= 0.9 * prev_delta else 0
            if stalled >= 2:
                frozen_c = WeightingMatrix(
                    c=np.mean(c_seen, axis=0), kind="optimal")
            prev_delta = delta
    else:
        raise NonConvergence(f"iterated GMM not converged in {max_outer} outer rounds")
    if np.max(np.abs(fit.beta_hat)) > SEPARATION_DETECT:
        raise SeparationError(
            f"estimate settled beyond |beta| = {SEPARATION_DETECT}; "
            "the quadratic form has no interior minimum (quasi-separation)"
        )
    fit.outer_iterations = outer
    return fit
