"""Stacked estimating functions for the two-phase fit.

The stacked moment vector has a phase-I block (the reduced-model score
identity reweighted to the phase-II sample by 1/pi) and a phase-II block
(the offset-adjusted logistic score).  Analytic Jacobians with respect to
the target coefficients and the reduced-model parameters are evaluated in
the same pass.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DesignValidationError, DimensionError
from .logistic import expit


def moment_f(x, z, beta, theta):
    """Phase-I moment contribution {expit(b'x) - expit(t'z)} z."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    return (expit(float(x @ beta)) - expit(float(z @ theta))) * z


@dataclass
class MomentContext:
    """Frozen data for moment evaluation.

    xmat rows are only read where r=1 (unselected rows may be NaN).  When
    theta_hat is None the phase-I block is dropped and the system is the
    exactly identified phase-II score.
    """
    y: np.ndarray
    xmat: np.ndarray
    r: np.ndarray
    pi_row: np.ndarray
    offset_row: np.ndarray
    zmat: np.ndarray = None
    theta_hat: np.ndarray = None
    # selected-row views, filled in __post_init__
    sel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.r = np.asarray(self.r)
        self.sel = np.flatnonzero(self.r == 1)
        self.n_phase1 = len(self.y)
        self.n_phase2 = len(self.sel)
        self.xmat = np.asarray(self.xmat, dtype=float)
        self.pi_row = np.asarray(self.pi_row, dtype=float)
        self.offset_row = np.asarray(self.offset_row, dtype=float)
        self.xsel = np.ascontiguousarray(self.xmat[self.sel])
        self.ysel = np.ascontiguousarray(self.y[self.sel])
        self.pisel = np.ascontiguousarray(self.pi_row[self.sel])
        self.offsel = np.ascontiguousarray(self.offset_row[self.sel])
        if self.theta_hat is None:
            self.zmat = np.zeros((self.n_phase1, 0))
            self.theta = np.zeros(0)
        else:
            self.theta = np.ascontiguousarray(self.theta_hat, dtype=float)
            self.zmat = np.asarray(self.zmat, dtype=float)
            if self.zmat.shape != (self.n_phase1, len(self.theta)):
                raise DimensionError("zmat shape does not match theta_hat")
        self.zsel = np.ascontiguousarray(self.zmat[self.sel])
        self.q1 = self.zmat.shape[1]
        self.q2 = self.xmat.shape[1]
        if np.any(self.pisel <= 0):
            raise DesignValidationError("pi must be > 0 on selected rows")
        if not np.all(np.isfinite(self.offsel)):
            raise DesignValidationError("offset must be finite on selected rows")
        if not np.all(np.isfinite(self.xsel)):
            raise DesignValidationError("xmat has non-finite entries on selected rows")

    @property
    def n_moments(self):
        return self.q1 + self.q2


@dataclass
class MomentValue:
    u1: np.ndarray
    u2: np.ndarray
    g: np.ndarray   # (q1+q2) x q2 Jacobian of the stacked moments in beta
    v1: np.ndarray  # q1 x q1 Jacobian of the phase-I block in theta

    @property
    def u(self):
        return np.concatenate([self.u1, self.u2])


def eval_moments(ctx, beta):
    """Stacked moment values and both analytic Jacobians at beta."""
    beta = np.ascontiguousarray(beta, dtype=float)
    if beta.shape != (ctx.q2,):
        raise DimensionError(f"beta must have length {ctx.q2}")
    u1, u2, g_top, g_bot, v1 = kernels.moment_pieces(
        ctx.xsel, ctx.zsel, ctx.ysel, ctx.pisel, ctx.offsel,
        beta, ctx.theta, float(ctx.n_phase1), float(ctx.n_phase2),
    )
    return MomentValue(u1=u1, u2=u2, g=np.vstack([g_top, g_bot]), v1=v1)


def eval_u1(ctx, beta):
    """Phase-I moment block (1/N) sum R f(x, z, beta, theta_hat)/pi."""
    return eval_moments(ctx, beta).u1


def eval_u2(ctx, beta):
    """Phase-II offset-adjusted score block, averaged over the n selected rows."""
    return eval_moments(ctx, beta).u2


eval_jacobians = eval_moments
