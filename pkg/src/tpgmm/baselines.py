"""Comparator estimators: IPW weighted likelihood and the full-data MLE."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .logistic import fit_logistic


@dataclass
class BaselineFit:
    coef: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    method: str


def fit_wl(ctx):
    """Weighted-likelihood fit: logistic regression on the phase-II rows
    with weights 1/pi and a robust IPW sandwich variance."""
    w = 1.0 / ctx.pisel
    fit = fit_logistic(ctx.ysel, ctx.xsel, weights=w)
    mu = kernels.expit_vec(ctx.xsel @ fit.coef)
    scores = ctx.xsel * (w * (ctx.ysel - mu))[:, None]
    bread = np.linalg.inv(fit.information)
    cov = bread @ (scores.T @ scores) @ bread
    return BaselineFit(coef=fit.coef, se=np.sqrt(np.diag(cov)), cov=cov, method="wl")


def fit_oracle(full_y, full_x):
    """Ordinary MLE on the complete phase-I data (ground-truth anchor)."""
    fit = fit_logistic(full_y, full_x)
    return BaselineFit(coef=fit.coef, se=fit.se, cov=fit.cov, method="oracle")
