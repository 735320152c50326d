"""Logistic link primitives and Newton-Raphson maximum likelihood fitting.

Supports per-observation offsets and nonnegative weights; the intercept is
always column 0 of the design matrix and offsets enter the linear
predictor additively, never as a modified column.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NonConvergence, RankDeficientError, SeparationError

DIVERGENCE_BOUND = 30.0


def expit(eta):
    """Logistic function 1/(1+exp(-eta)), stable for |eta| up to ~700."""
    if eta >= 0.0:
        return 1.0 / (1.0 + math.exp(-eta))
    e = math.exp(eta)
    return e / (1.0 + e)


def expit_prime(eta):
    """Derivative of the logistic function: expit(eta)*(1-expit(eta))."""
    p = expit(eta)
    return p * (1.0 - p)


@dataclass
class LogisticFit:
    coef: np.ndarray
    cov: np.ndarray
    information: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    column_names: list = field(default_factory=list)

    @property
    def se(self):
        return np.sqrt(np.diag(self.cov))


def _loglik(y, eta, w):
    # y*eta - log(1+exp(eta)), stable via logaddexp
    return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))


def _check_rank(x, w):
    active = x[w > 0]
    if np.linalg.matrix_rank(active) < x.shape[1]:
        raise RankDeficientError(
            f"design matrix has rank < {x.shape[1]} among weighted rows"
        )


def fit_logistic(y, xmat, offset=None, weights=None, tol=1e-10, max_iter=100,
                 column_names=None):
    """Fit a logistic regression by Newton-Raphson with step-halving.

    Solves sum_i w_i (y_i - expit(offset_i + b'x_i)) x_i = 0.  Raises
    SeparationError when the coefficient norm exceeds the divergence
    bound, RankDeficientError for a singular weighted design and
    NonConvergence when max_iter is exhausted.
    """
    y = np.ascontiguousarray(y, dtype=float)
    x = np.ascontiguousarray(xmat, dtype=float)
    n, p = x.shape
    w = np.ones(n) if weights is None else np.ascontiguousarray(weights, dtype=float)
    off = np.zeros(n) if offset is None else np.ascontiguousarray(offset, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    wy = y[w > 0]
    if not (np.any(wy == 1) and np.any(wy == 0)):
        raise ValueError("need at least one case and one control among weighted rows")
    _check_rank(x, w)

    coef = np.zeros(p)
    eta = off.copy()
    ll = _loglik(y, eta, w)
    iterations = 0
    while True:
        score, info = kernels.score_info(x, y, w, eta)
        if np.max(np.abs(score)) < tol:
            break
        if iterations >= max_iter:
            raise NonConvergence(
                f"score not below tol={tol} after {max_iter} iterations"
            )
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise RankDeficientError(f"singular information matrix: {exc}") from exc
        # step-halving until the log-likelihood does not decrease; the
        # tolerance is relative to |ll| since rounding noise scales with it
        scale = 1.0
        ll_floor = ll - 1e-12 * (1.0 + abs(ll))
        for _ in range(20):
            cand = coef + scale * step
            eta_c = off + x @ cand
            ll_c = _loglik(y, eta_c, w)
            if ll_c >= ll_floor:
                break
            scale *= 0.5
        coef = coef + scale * step
        eta = off + x @ coef
        ll = _loglik(y, eta, w)
        iterations += 1
        if np.max(np.abs(coef)) > DIVERGENCE_BOUND:
            raise SeparationError(
                f"|coef| exceeded {DIVERGENCE_BOUND}; data may be separated"
            )
    cov = np.linalg.inv(info)
    return LogisticFit(
        coef=coef,
        cov=cov,
        information=info,
        converged=True,
        iterations=iterations,
        loglik=ll,
        column_names=list(column_names) if column_names else [],
    )
