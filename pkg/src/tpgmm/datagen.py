"""Correlated mixed-type covariate generation (latent-Gaussian thresholding).

Four covariates -- two binaries, one ordinal, one standard normal -- are
produced by thresholding a latent multivariate normal vector.  The latent
pairwise correlations are calibrated by 1-D root finding so that the
post-threshold correlations hit their targets; the induced-correlation
function is evaluated by Gauss-Legendre quadrature of the bivariate
normal orthant integrals.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.special

from .errors import UnattainableCorrelation
from .kernels import expit_vec

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_TAIL = 8.5


def _phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def norm_quantile(p):
    """Standard normal quantile."""
    return float(scipy.special.ndtri(p))


def orthant_prob(a, b, r):
    """P(Z1 > a, Z2 > b) for standard bivariate normal with correlation r.

    Computed as a 1-D Gauss-Legendre quadrature of
    phi(z) * Qbar((b - r z)/sqrt(1-r^2)) over [a, tail].
    """
    if abs(r) >= 1.0 - 1e-12:
        r = math.copysign(1.0 - 1e-12, r)
    lo, hi = a, _TAIL
    if lo >= hi:
        return 0.0
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    z = mid + half * _GL_NODES
    dens = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    tail = 1.0 - scipy.special.ndtr((b - r * z) / math.sqrt(1.0 - r * r))
    return float(half * np.sum(_GL_WEIGHTS * dens * tail))


class _Margin:
    """One marginal: either continuous standard normal or a threshold
    transform X = sum_k 1(Z > tau_k)."""

    def __init__(self, name, thresholds=None):
        self.name = name
        self.thresholds = thresholds  # None means continuous
        if thresholds is None:
            self.mean = 0.0
            self.sd = 1.0
        else:
            # X = v exactly when Z falls between consecutive thresholds
            edges = [-np.inf] + sorted(thresholds) + [np.inf]
            probs = np.array([
                scipy.special.ndtr(edges[i + 1]) - scipy.special.ndtr(edges[i])
                for i in range(len(edges) - 1)
            ])
            vals = np.arange(len(probs), dtype=float)
            self.mean = float(np.sum(vals * probs))
            self.sd = float(math.sqrt(np.sum(vals * vals * probs) - self.mean ** 2))

    @property
    def continuous(self):
        return self.thresholds is None

    def apply(self, z):
        if self.continuous:
            return z
        out = np.zeros(len(z))
        for t in self.thresholds:
            out += z > t
        return out


def induced_corr(m1, m2, r):
    """Post-threshold correlation of the pair given latent correlation r."""
    if m1.continuous and m2.continuous:
        return r
    if m1.continuous:
        m1, m2 = m2, m1
    if m2.continuous:
        # E[X Z2] = r * sum_k phi(tau_k)
        cross = r * sum(_phi(t) for t in m1.thresholds)
        return (cross - 0.0) / (m1.sd * m2.sd)
    cross = sum(
        orthant_prob(t1, t2, r)
        for t1 in m1.thresholds
        for t2 in m2.thresholds
    )
    return (cross - m1.mean * m2.mean) / (m1.sd * m2.sd)


@dataclass
class CovariateSpec:
    p_x1: float
    p_x2: float
    x3_probs: tuple           # P(X3 = 0), P(X3 = 1), P(X3 = 2); remainder is level 3
    target_corr: np.ndarray   # 4 x 4 with unit diagonal
    _margins: list = field(init=False, repr=False)

    def __post_init__(self):
        cum = np.cumsum(self.x3_probs)
        if cum[-1] >= 1.0:
            raise ValueError("x3 category probabilities must sum to < 1")
        self._margins = [
            _Margin("x1", [norm_quantile(1.0 - self.p_x1)]),
            _Margin("x2", [norm_quantile(1.0 - self.p_x2)]),
            _Margin("x3", [norm_quantile(c) for c in cum]),
            _Margin("x4", None),
        ]


def default_covariate_spec():
    """Marginals and pairwise correlations of the simulated cohort."""
    rho = {(0, 1): .73, (0, 2): .13, (0, 3): -.01,
           (1, 2): .09, (1, 3): .01, (2, 3): .27}
    corr = np.eye(4)
    for (i, j), v in rho.items():
        corr[i, j] = corr[j, i] = v
    return CovariateSpec(p_x1=.9, p_x2=.89, x3_probs=(.39, .26, .23), target_corr=corr)


def calibrate_latent_corr(spec, tol=1e-8):
    """Latent normal correlation matrix reproducing the target pairwise
    correlations; eigenvalue-clipped to PSD if pairwise calibration left
    it slightly indefinite."""
    margins = spec._margins
    latent = np.eye(4)
    for i in range(4):
        for j in range(i + 1, 4):
            target = float(spec.target_corr[i, j])
            if target == 0.0:
                continue
            fn = lambda r: induced_corr(margins[i], margins[j], r) - target
            lo, hi = -0.999, 0.999
            if fn(lo) * fn(hi) > 0:
                raise UnattainableCorrelation(
                    f"target corr {target} for pair ({i},{j}) outside attainable range"
                )
            r = scipy.optimize.brentq(fn, lo, hi, xtol=tol)
            latent[i, j] = latent[j, i] = r
    w, v = np.linalg.eigh(latent)
    if w[0] < 1e-8:
        clipped = (v * np.maximum(w, 1e-8)) @ v.T
        d = np.sqrt(np.diag(clipped))
        clipped = clipped / np.outer(d, d)
        warnings.warn(
            "latent correlation matrix clipped to PSD "
            f"(Frobenius distance {np.linalg.norm(clipped - latent):.3e})"
        )
        latent = clipped
    return latent


def gen_covariates(spec, n, rng, latent=None):
    """Draw n rows of (x1, x2, x3, x4) plus the x3 dummies d1..d3."""
    if latent is None:
        latent = calibrate_latent_corr(spec)
    chol = np.linalg.cholesky(latent)
    z = rng.standard_normal((n, 4)) @ chol.T
    cols = {}
    for k, margin in enumerate(spec._margins):
        cols[margin.name] = margin.apply(z[:, k])
    for level in (1, 2, 3):
        cols[f"d{level}"] = (cols["x3"] == level).astype(float)
    # complement of x2: the outcome model loads on the rare level, which is
    # what reproduces the ~6% prevalence at the stated coefficients
    cols["x2c"] = 1.0 - cols["x2"]
    return cols


@dataclass
class OutcomeSpec:
    terms: list
    beta: np.ndarray


def default_outcome_spec():
    """True extended-model coefficients for the simulated cohort."""
    from .model import FULL_MODEL_TERMS

    beta = np.array([
        -3.6, 1.16, .60, .46, .81, .22, .44, 1.03, 1.63, -.67, .20, .33, .06,
    ])
    return OutcomeSpec(terms=list(FULL_MODEL_TERMS), beta=beta)


def gen_outcomes(columns, spec, rng):
    """Bernoulli outcomes from the logistic model over the given columns."""
    from .model import build_design

    x = build_design(columns, spec.terms)
    p = expit_vec(x @ np.asarray(spec.beta, dtype=float))
    return (rng.random(len(p)) < p).astype(float)
