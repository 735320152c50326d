import numpy as np
import pytest

from tpgmm.design import sample_case_control
from tpgmm.logistic import fit_logistic
from tpgmm.model import REDUCED_M1_TERMS, REDUCED_M2_TERMS, build_design
from tpgmm.moments import MomentContext
from tpgmm.rng import replicate_rng


def small_population(n, seed=7):
    """A small synthetic cohort with the standard column layout."""
    from tpgmm.harness import simulate_population

    rng = replicate_rng(seed, 0)
    cols, y, spec = simulate_population(n, rng)
    return cols, y, spec, rng


def two_phase_context(n=800, seed=7, terms=None, design_kind="case-control"):
    """A fitted moment context on a small simulated two-phase sample."""
    from tpgmm.harness import _phase2_draw, build_context

    cols, y, spec, rng = small_population(n, seed)
    sample, design, s = _phase2_draw(y, cols["x1"], design_kind, rng)
    terms = REDUCED_M1_TERMS if terms is None else terms
    ctx, theta_fit = build_context(cols, y, sample, design, s, terms)
    return ctx


def full_ascertainment_context(n=500, seed=3, with_phase1=True):
    """pi = 1 everywhere: phase-II equals phase-I."""
    from tpgmm.harness import build_context
    from tpgmm.design import PhaseTwoSample, TwoPhaseDesign

    cols, y, spec, rng = small_population(n, seed)
    r = np.ones(n, dtype=np.int8)
    sample = PhaseTwoSample(r=r, indices=np.arange(n))
    design = TwoPhaseDesign(j=1, pi={(0, 1): 1.0, (1, 1): 1.0},
                            counts_phase1={(0, 1): int(np.sum(y == 0)),
                                           (1, 1): int(np.sum(y == 1))},
                            counts_phase2={(0, 1): int(np.sum(y == 0)),
                                           (1, 1): int(np.sum(y == 1))}).validate()
    s = np.ones(n, dtype=int)
    terms = REDUCED_M1_TERMS if with_phase1 else None
    ctx, _ = build_context(cols, y, sample, design, s, terms)
    return ctx, cols, y


@pytest.fixture
def tiny_context():
    """A fully hand-specifiable context: 5 rows, 2 x-columns, 2 z-columns."""
    y = np.array([1.0, 0.0, 1.0, 0.0, 1.0])
    xmat = np.array([
        [1.0, 0.5],
        [1.0, -1.0],
        [1.0, 2.0],
        [1.0, 0.0],   # unselected
        [1.0, 1.5],
    ])
    zmat = np.array([
        [1.0, 1.0],
        [1.0, -0.5],
        [1.0, 0.3],
        [1.0, 0.0],
        [1.0, 2.0],
    ])
    r = np.array([1, 1, 1, 0, 1])
    pi_row = np.array([0.8, 0.4, 0.8, 0.4, 0.8])
    offset_row = np.full(5, np.log(0.8 / 0.4))
    theta = np.array([0.2, -0.3])
    return MomentContext(y=y, xmat=xmat, r=r, pi_row=pi_row,
                         offset_row=offset_row, zmat=zmat, theta_hat=theta)
