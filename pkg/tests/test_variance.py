import numpy as np
import pytest

from tpgmm.gmm import WeightingMatrix, iterated_gmm, minimize_qn
from tpgmm.moments import MomentContext, eval_moments
from tpgmm.variance import (
    influence_pieces,
    reduced_info_bar,
    sandwich_cov,
    transform_matrix,
    un_variance,
    wald_ci,
)

from conftest import full_ascertainment_context, two_phase_context


def test_influence_rows_hand_check(tiny_context):
    import math

    ctx = tiny_context
    beta = np.array([0.3, -0.2])
    pieces = influence_pieces(ctx, beta)

    def h(t):
        return 1.0 / (1.0 + math.exp(-t))

    # row 1 is selected: psi1 = z (h(b'x) - h(t'z)) / pi
    i = 1
    want1 = ctx.zmat[i] * (h(ctx.xmat[i] @ beta) - h(ctx.zmat[i] @ ctx.theta)) / ctx.pi_row[i]
    assert np.allclose(pieces.psi1[i], want1, atol=1e-14)
    want2 = ctx.xmat[i] * (ctx.y[i] - h(ctx.xmat[i] @ beta + ctx.offset_row[i]))
    assert np.allclose(pieces.psi2[i], want2, atol=1e-14)
    want3 = ctx.zmat[i] * (ctx.y[i] - h(ctx.zmat[i] @ ctx.theta))
    assert np.allclose(pieces.psi3[i], want3, atol=1e-14)
    # row 3 is unselected: psi1, psi2 zero, psi3 not
    assert np.all(pieces.psi1[3] == 0.0)
    assert np.all(pieces.psi2[3] == 0.0)
    assert not np.all(pieces.psi3[3] == 0.0)
    assert pieces.lambda_hat == pytest.approx(4.0 / 5.0)


def test_omega_is_psd(tiny_context):
    pieces = influence_pieces(tiny_context, np.array([0.1, 0.1]))
    psi = pieces.stacked
    omega = psi.T @ psi / 5.0
    assert np.min(np.linalg.eigvalsh(omega)) >= -1e-12


def test_un_variance_is_psd_and_symmetric():
    ctx = two_phase_context(n=800, seed=3)
    s = un_variance(ctx, np.zeros(ctx.q2))
    assert np.allclose(s, s.T)
    assert np.min(np.linalg.eigvalsh(s)) >= -1e-10


def test_transform_matrix_blocks(tiny_context):
    ctx = tiny_context
    val = eval_moments(ctx, np.zeros(2))
    d = transform_matrix(ctx, val.v1)
    q1, q2 = ctx.q1, ctx.q2
    assert d.shape == (q1 + q2, 2 * q1 + q2)
    assert np.allclose(d[:q1, :q1], np.eye(q1))
    assert np.allclose(d[q1:, q1:q1 + q2], (5.0 / 4.0) * np.eye(q2))
    assert np.allclose(d[q1:, :q1], 0.0)
    # derived top-right block: V1 Ibar^{-1}
    want = val.v1 @ np.linalg.inv(reduced_info_bar(ctx))
    assert np.allclose(d[:q1, q1 + q2:], want)
    # simplified main-text block is the identity
    d2 = transform_matrix(ctx, val.v1, main_text_influence=True)
    assert np.allclose(d2[:q1, q1 + q2:], np.eye(q1))


def test_sandwich_invariant_to_c_when_exactly_identified():
    ctx, cols, y = full_ascertainment_context(n=400, with_phase1=False)
    rng = np.random.default_rng(11)
    fit = minimize_qn(ctx, WeightingMatrix.identity(ctx.n_moments),
                      np.zeros(ctx.q2), tol=1e-12)
    covs = [sandwich_cov(ctx, fit).cov_beta]
    for _ in range(2):
        a = rng.normal(size=(ctx.n_moments, ctx.n_moments))
        fit.c_used = WeightingMatrix(c=a @ a.T + 0.2 * np.eye(ctx.n_moments)).validate()
        covs.append(sandwich_cov(ctx, fit).cov_beta)
    scale = np.max(np.abs(covs[0]))
    assert np.max(np.abs(covs[0] - covs[1])) / scale < 1e-7
    assert np.max(np.abs(covs[0] - covs[2])) / scale < 1e-7


def test_se_shrinks_by_sqrt2_under_duplication():
    ctx = two_phase_context(n=1500, seed=9)
    fit = iterated_gmm(ctx)
    cov = sandwich_cov(ctx, fit)
    dup = MomentContext(
        y=np.tile(ctx.y, 2), xmat=np.tile(ctx.xmat, (2, 1)),
        r=np.tile(ctx.r, 2), pi_row=np.tile(ctx.pi_row, 2),
        offset_row=np.tile(ctx.offset_row, 2), zmat=np.tile(ctx.zmat, (2, 1)),
        theta_hat=ctx.theta,
    )
    fit2 = iterated_gmm(dup, beta_start=fit.beta_hat)
    cov2 = sandwich_cov(dup, fit2)
    assert np.max(np.abs(fit2.beta_hat - fit.beta_hat)) < 1e-7
    ratio = cov2.se / cov.se
    assert np.max(np.abs(ratio - 1.0 / np.sqrt(2.0))) < 1e-6


def test_weighting_correction_enlarges_or_keeps_se():
    ctx = two_phase_context(n=800, seed=3)
    fit = iterated_gmm(ctx)
    plain = sandwich_cov(ctx, fit, weighting_correction=False)
    corr = sandwich_cov(ctx, fit, weighting_correction=True)
    assert np.allclose(plain.cov_beta, plain.cov_plain)
    assert np.allclose(corr.cov_plain, plain.cov_beta)
    # the correction should be a modest perturbation, not a blow-up
    ratio = corr.se / plain.se
    assert np.all(ratio > 0.7) and np.all(ratio < 1.6)


def test_wald_ci_width():
    class F:
        beta_hat = np.array([1.0, -2.0])

    class C:
        se = np.array([0.5, 0.1])

    cis = wald_ci(F, C, level=0.95)
    z = 1.959963984540054
    assert cis[0][0] == pytest.approx(1.0 - z * 0.5)
    assert cis[0][1] == pytest.approx(1.0 + z * 0.5)
    assert cis[1][0] == pytest.approx(-2.0 - z * 0.1)
