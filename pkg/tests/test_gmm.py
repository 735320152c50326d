import numpy as np
import pytest

from tpgmm.errors import DimensionError
from tpgmm.gmm import (
    WeightingMatrix,
    eval_qn,
    invert_psd,
    iterated_gmm,
    minimize_qn,
    optimal_c,
    wl_start,
)
from tpgmm.logistic import fit_logistic
from tpgmm.moments import eval_moments

from conftest import full_ascertainment_context, two_phase_context


def test_invert_psd_matches_spectral_inverse():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    mat = a @ a.T + 0.5 * np.eye(6)
    inv = invert_psd(mat)
    # spectral oracle
    w, v = np.linalg.eigh(mat)
    oracle = (v / w) @ v.T
    assert np.allclose(inv, oracle, atol=1e-10)
    assert np.allclose(inv @ mat, np.eye(6), atol=1e-8)


def test_invert_psd_handles_singular_with_pseudo_inverse():
    u = np.array([[1.0, 0.0], [0.0, 0.0]])
    inv = invert_psd(u)
    assert np.isfinite(inv).all()
    # acts as inverse on the range
    assert inv[0, 0] == pytest.approx(1.0, rel=1e-3)


def test_weighting_matrix_validation():
    WeightingMatrix.identity(3).validate()
    with pytest.raises(ValueError):
        WeightingMatrix(c=np.array([[1.0, 2.0], [0.0, 1.0]])).validate()
    with pytest.raises(ValueError):
        WeightingMatrix(c=np.array([[1.0, 0.0], [0.0, -1.0]])).validate()


def test_eval_qn_is_quadratic_form(tiny_context):
    beta = np.array([0.2, -0.1])
    c = WeightingMatrix.identity(tiny_context.n_moments)
    u = eval_moments(tiny_context, beta).u
    assert eval_qn(tiny_context, beta, c) == pytest.approx(float(u @ u), abs=1e-15)
    with pytest.raises(DimensionError):
        eval_qn(tiny_context, beta, np.eye(3))


def test_exactly_identified_gmm_equals_mle():
    """With pi = 1 and no phase-I block, the GMM solution is the MLE."""
    ctx, cols, y = full_ascertainment_context(n=400, with_phase1=False)
    fit = minimize_qn(ctx, WeightingMatrix.identity(ctx.n_moments),
                      np.zeros(ctx.q2), tol=1e-12)
    mle = fit_logistic(y, ctx.xmat)
    assert np.max(np.abs(fit.beta_hat - mle.coef)) < 1e-8


def test_exactly_identified_solution_invariant_to_weighting():
    ctx, cols, y = full_ascertainment_context(n=400, with_phase1=False)
    rng = np.random.default_rng(3)
    a = rng.normal(size=(ctx.n_moments, ctx.n_moments))
    c_rand = WeightingMatrix(c=a @ a.T + 0.1 * np.eye(ctx.n_moments)).validate()
    f1 = minimize_qn(ctx, WeightingMatrix.identity(ctx.n_moments),
                     np.zeros(ctx.q2), tol=1e-12)
    f2 = minimize_qn(ctx, c_rand, np.zeros(ctx.q2), tol=1e-12)
    assert np.max(np.abs(f1.beta_hat - f2.beta_hat)) < 1e-7


def test_minimize_qn_reduces_objective(tiny_context):
    c = WeightingMatrix.identity(tiny_context.n_moments)
    start = np.zeros(2)
    fit = minimize_qn(tiny_context, c, start)
    assert fit.qn_value <= eval_qn(tiny_context, start, c) + 1e-15
    assert fit.converged
    # trace is monotonically non-increasing
    qs = [q for _, q in fit.inner_trace]
    assert all(b <= a + 1e-12 for a, b in zip(qs, qs[1:]))


def test_optimal_c_is_inverse_of_moment_variance(tiny_context):
    from tpgmm.variance import un_variance

    beta = np.array([0.1, 0.2])
    c = optimal_c(tiny_context, beta)
    s = un_variance(tiny_context, beta)
    assert c.kind == "optimal"
    assert np.allclose(c.c @ s, np.eye(tiny_context.n_moments), atol=1e-6)


def test_wl_start_is_ipw_fit():
    ctx = two_phase_context(n=800, seed=3)
    coef = wl_start(ctx)
    direct = fit_logistic(ctx.ysel, ctx.xsel, weights=1.0 / ctx.pisel)
    assert np.allclose(coef, direct.coef)


def test_iterated_gmm_converges_on_two_phase_data():
    ctx = two_phase_context(n=800, seed=3)
    fit = iterated_gmm(ctx)
    assert fit.converged
    assert fit.c_used.kind == "optimal"
    assert np.all(np.isfinite(fit.beta_hat))
    # first-order condition under the final weighting
    val = eval_moments(ctx, fit.beta_hat)
    grad = 2.0 * val.g.T @ fit.c_used.c @ val.u
    assert np.max(np.abs(grad)) < 1e-5


def test_iterated_gmm_deterministic():
    ctx = two_phase_context(n=800, seed=4)
    f1 = iterated_gmm(ctx)
    f2 = iterated_gmm(ctx)
    assert np.array_equal(f1.beta_hat, f2.beta_hat)
