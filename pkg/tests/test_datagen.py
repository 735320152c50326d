import math

import numpy as np
import pytest
import scipy.special

from tpgmm.datagen import (
    CovariateSpec,
    calibrate_latent_corr,
    gen_covariates,
    gen_outcomes,
    induced_corr,
    norm_quantile,
    default_covariate_spec,
    default_outcome_spec,
    orthant_prob,
    _Margin,
)
from tpgmm.errors import UnattainableCorrelation
from tpgmm.rng import replicate_rng


def test_norm_quantile_round_trip():
    for p in (0.01, 0.25, 0.5, 0.89, 0.999):
        assert scipy.special.ndtr(norm_quantile(p)) == pytest.approx(p, abs=1e-12)


def test_orthant_prob_independence():
    # r = 0: P(Z1 > a, Z2 > b) = Qbar(a) Qbar(b)
    for a, b in ((0.0, 0.0), (-1.0, 0.5), (1.2, 2.0)):
        want = (1 - scipy.special.ndtr(a)) * (1 - scipy.special.ndtr(b))
        assert orthant_prob(a, b, 0.0) == pytest.approx(want, abs=1e-10)


def test_orthant_prob_symmetry_and_limits():
    assert orthant_prob(0.3, -0.7, 0.4) == pytest.approx(
        orthant_prob(-0.7, 0.3, 0.4), abs=1e-10)
    # r -> 1: P(Z > max(a,b))
    assert orthant_prob(0.5, -0.2, 0.9999999) == pytest.approx(
        1 - scipy.special.ndtr(0.5), abs=1e-4)


def test_orthant_prob_monte_carlo():
    rng = np.random.default_rng(0)
    r = 0.6
    z1 = rng.standard_normal(400_000)
    z2 = r * z1 + math.sqrt(1 - r * r) * rng.standard_normal(400_000)
    emp = np.mean((z1 > 0.2) & (z2 > -0.4))
    assert orthant_prob(0.2, -0.4, r) == pytest.approx(emp, abs=3e-3)


def test_induced_corr_binary_pair_monte_carlo():
    m1 = _Margin("a", [norm_quantile(0.3)])
    m2 = _Margin("b", [norm_quantile(0.6)])
    r = 0.5
    rng = np.random.default_rng(1)
    z1 = rng.standard_normal(400_000)
    z2 = r * z1 + math.sqrt(1 - r * r) * rng.standard_normal(400_000)
    x1 = (z1 > norm_quantile(0.3)).astype(float)
    x2 = (z2 > norm_quantile(0.6)).astype(float)
    emp = np.corrcoef(x1, x2)[0, 1]
    assert induced_corr(m1, m2, r) == pytest.approx(emp, abs=5e-3)


def test_induced_corr_continuous_pair_is_identity():
    m = _Margin("x", None)
    assert induced_corr(m, m, 0.37) == 0.37


def test_calibration_reproduces_targets():
    spec = default_covariate_spec()
    latent = calibrate_latent_corr(spec)
    margins = spec._margins
    for i in range(4):
        for j in range(i + 1, 4):
            got = induced_corr(margins[i], margins[j], latent[i, j])
            assert got == pytest.approx(spec.target_corr[i, j], abs=1e-6)
    # PSD
    assert np.min(np.linalg.eigvalsh(latent)) > -1e-10


def test_unattainable_correlation_raises():
    corr = np.eye(4)
    corr[0, 1] = corr[1, 0] = 0.99  # two rare binaries cannot reach 0.99
    spec = CovariateSpec(p_x1=0.95, p_x2=0.05, x3_probs=(.39, .26, .23),
                         target_corr=corr)
    with pytest.raises(UnattainableCorrelation):
        calibrate_latent_corr(spec)


def test_gen_covariates_marginals_and_dummies():
    spec = default_covariate_spec()
    rng = replicate_rng(42, 0)
    cols = gen_covariates(spec, 60_000, rng)
    assert cols["x1"].mean() == pytest.approx(0.9, abs=0.006)
    assert cols["x2"].mean() == pytest.approx(0.89, abs=0.006)
    assert np.mean(cols["x3"] == 0) == pytest.approx(0.39, abs=0.01)
    assert np.mean(cols["x3"] == 3) == pytest.approx(0.12, abs=0.01)
    assert abs(cols["x4"].mean()) < 0.02
    assert cols["x4"].std() == pytest.approx(1.0, abs=0.02)
    for level in (1, 2, 3):
        assert np.array_equal(cols[f"d{level}"], (cols["x3"] == level).astype(float))
    assert np.array_equal(cols["x2c"], 1.0 - cols["x2"])


def test_gen_outcomes_prevalence():
    spec = default_covariate_spec()
    rng = replicate_rng(42, 1)
    cols = gen_covariates(spec, 60_000, rng)
    y = gen_outcomes(cols, default_outcome_spec(), rng)
    assert set(np.unique(y)) <= {0.0, 1.0}
    assert 0.05 <= y.mean() <= 0.07


def test_gen_outcomes_respects_probabilities():
    # with an intercept-only model the prevalence is expit(beta0)
    from tpgmm.datagen import OutcomeSpec

    rng = replicate_rng(5, 0)
    cols = {"x4": rng.standard_normal(50_000)}
    spec = OutcomeSpec(terms=["1"], beta=np.array([-1.0]))
    y = gen_outcomes(cols, spec, rng)
    assert y.mean() == pytest.approx(1.0 / (1.0 + math.e), abs=0.01)
