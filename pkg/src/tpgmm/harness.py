"""Simulation-study orchestration and single-dataset fitting.

Ties the generator, samplers, estimators and variance machinery together,
computes the per-parameter summary metrics (bias, SD, ESD, coverage,
relative efficiency) and reads/writes every external file format.
"""
import concurrent.futures
import configparser
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .baselines import fit_oracle, fit_wl
from .datagen import gen_covariates, gen_outcomes, default_covariate_spec, default_outcome_spec
from .design import (
    read_design,
    sample_balanced,
    sample_case_control,
    with_empirical_pi,
    write_design,
)
from .errors import (
    DesignValidationError,
    JoinError,
    ParseError,
    SeparationError,
    TpgmmError,
)
from .gmm import iterated_gmm
from .logistic import fit_logistic
from .model import REDUCED_M1_TERMS, REDUCED_M2_TERMS, build_design
from .moments import MomentContext
from .rng import replicate_rng
from .variance import sandwich_cov, wald_ci

BUILTIN_MODELS = {"m1": REDUCED_M1_TERMS, "m2": REDUCED_M2_TERMS}


@dataclass
class StudyConfig:
    n_phase1: int = 10000
    design_kind: str = "case-control"   # or "balanced"
    models: dict = field(default_factory=lambda: {k: list(v) for k, v in BUILTIN_MODELS.items()})
    estimators: list = field(default_factory=lambda: ["gmm:m2", "gmm:m1", "wl", "oracle"])
    reps: int = 500
    base_seed: int = 0
    pi_mode: str = "known"              # or "empirical"
    level: float = 0.95
    threads: int = 1

    def validate(self):
        if self.reps < 1:
            raise DesignValidationError("reps must be >= 1")
        if self.design_kind not in ("case-control", "balanced"):
            raise DesignValidationError(f"unknown design kind {self.design_kind!r}")
        if self.pi_mode not in ("known", "empirical"):
            raise DesignValidationError(f"unknown pi mode {self.pi_mode!r}")
        for est in self.estimators:
            if est.startswith("gmm:"):
                if est.split(":", 1)[1] not in self.models:
                    raise DesignValidationError(f"estimator {est!r} references unknown model")
            elif est not in ("wl", "oracle"):
                raise DesignValidationError(f"unknown estimator {est!r}")
        return self


def load_study_config(path):
    """Parse the key/value study configuration document."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ParseError(f"cannot read config file {path}")
    cfg = StudyConfig()
    if parser.has_section("scenario"):
        cfg.n_phase1 = parser.getint("scenario", "n_phase1", fallback=cfg.n_phase1)
    if parser.has_section("design"):
        cfg.design_kind = parser.get("design", "kind", fallback=cfg.design_kind)
    if parser.has_section("models"):
        cfg.models = {}
        for name, value in parser.items("models"):
            value = value.strip()
            cfg.models[name] = list(BUILTIN_MODELS[value]) if value in BUILTIN_MODELS else value.split()
    if parser.has_section("study"):
        sec = parser["study"]
        cfg.reps = sec.getint("reps", cfg.reps)
        cfg.base_seed = sec.getint("base_seed", cfg.base_seed)
        cfg.pi_mode = sec.get("pi_mode", cfg.pi_mode)
        cfg.level = sec.getfloat("level", cfg.level)
        if "estimators" in sec:
            cfg.estimators = sec["estimators"].split()
    return cfg.validate()


CC_CONTROL_MULT = 3
BALANCED_CONTROL_MULT = {1: 0.75, 2: 2.5}


def _phase2_draw(y, x1, design_kind, rng):
    """Default phase-II sizing.

    Case-control: all cases plus CC_CONTROL_MULT times as many controls.
    Balanced: all cases, plus per-(Y=0, X1) cell control quotas of
    BALANCED_CONTROL_MULT[stratum] times the case count (capped at the
    cell size), which oversamples the rare X1=0 stratum roughly 3:1 in
    selection probability while keeping the total control draw comparable
    to the case-control design.

    The control volume matters because a 1:1 control draw leaves the rare
    (x3 level 3, x2c = 1) phase-II cell with so few controls that it is
    single-class in a nontrivial fraction of replicates, and close to
    single-class -- with badly behaved interval coverage -- in many more.
    """
    y = np.asarray(y)
    n_cases = int(np.sum(y == 1))
    if design_kind == "case-control":
        sample, design = sample_case_control(y, n_cases, CC_CONTROL_MULT * n_cases, rng)
        s = np.ones(len(y), dtype=int)
        return sample, design, s
    s = np.asarray(x1, dtype=int) + 1
    quota = {}
    for si in (1, 2):
        quota[(1, si)] = int(np.sum((y == 1) & (s == si)))
        want = int(round(BALANCED_CONTROL_MULT[si] * n_cases))
        quota[(0, si)] = min(int(np.sum((y == 0) & (s == si))), want)
    sample, design = sample_balanced(y, s, quota, rng)
    return sample, design, s


def simulate_population(n_phase1, rng, latent=None):
    """One synthetic cohort: covariate columns plus the outcome."""
    cov_spec = default_covariate_spec()
    cols = gen_covariates(cov_spec, n_phase1, rng, latent=latent)
    out_spec = default_outcome_spec()
    y = gen_outcomes(cols, out_spec, rng)
    return cols, y, out_spec


def _check_phase2_cells(xsel, ysel, names=None):
    """Quasi-separation guard on the phase-II design.

    A binary design column whose active rows carry a single outcome class
    leaves that coefficient unbounded: no finite estimate exists and the
    replicate cannot be analyzed under this model.
    """
    for j in range(1, xsel.shape[1]):
        vals = np.unique(xsel[:, j])
        if len(vals) == 2 and vals[0] == 0.0:
            active = ysel[xsel[:, j] == vals[1]]
            if active.size and active.min() == active.max():
                label = names[j] if names else f"column {j}"
                raise SeparationError(
                    f"phase-II cell for {label} is single-class "
                    f"({active.size} rows, all y={active[0]:.0f}); "
                    "coefficient is not identified"
                )


def build_context(cols, y, sample, design, s, model_terms, pi_mode="known"):
    """Assemble the moment context for one reduced model."""
    from .model import FULL_MODEL_TERMS

    if pi_mode == "empirical":
        design = with_empirical_pi(design)
    xmat = build_design(cols, FULL_MODEL_TERMS)
    sel = sample.r == 1
    _check_phase2_cells(xmat[sel], np.asarray(y, dtype=float)[sel],
                        FULL_MODEL_TERMS)
    pi_row = design.pi_rows(y, s)
    offset_row = design.offset_rows(s)
    if model_terms is None:
        return MomentContext(y=y, xmat=xmat, r=sample.r, pi_row=pi_row,
                             offset_row=offset_row), None
    zmat = build_design(cols, model_terms)
    theta_fit = fit_logistic(y, zmat)
    ctx = MomentContext(y=y, xmat=xmat, r=sample.r, pi_row=pi_row,
                        offset_row=offset_row, zmat=zmat, theta_hat=theta_fit.coef)
    return ctx, theta_fit


def run_replicate(config, rep_index, latent=None):
    """One replicate: generate, sample, fit all requested estimators.

    Returns estimator -> (coef, se, lo, hi) arrays over the full-model
    parameters.
    """
    rng = replicate_rng(config.base_seed, rep_index)
    cols, y, _ = simulate_population(config.n_phase1, rng, latent=latent)
    sample, design, s = _phase2_draw(y, cols["x1"], config.design_kind, rng)
    results = {}
    base_ctx = None
    for est in config.estimators:
        if est.startswith("gmm:"):
            terms = config.models[est.split(":", 1)[1]]
            ctx, _ = build_context(cols, y, sample, design, s, terms, config.pi_mode)
            fit = iterated_gmm(ctx)
            cov = sandwich_cov(ctx, fit)
            cis = wald_ci(fit, cov, config.level)
            results[est] = (fit.beta_hat, cov.se,
                            np.array([c[0] for c in cis]), np.array([c[1] for c in cis]))
        else:
            if base_ctx is None:
                base_ctx, _ = build_context(cols, y, sample, design, s, None, config.pi_mode)
            if est == "wl":
                bfit = fit_wl(base_ctx)
            else:
                bfit = fit_oracle(y, base_ctx.xmat)
            zq = _z_quantile(config.level)
            results[est] = (bfit.coef, bfit.se,
                            bfit.coef - zq * bfit.se, bfit.coef + zq * bfit.se)
    return results


def _z_quantile(level):
    import scipy.stats

    return float(scipy.stats.norm.ppf(0.5 * (1.0 + level)))


def metrics(estimates, ses, lows, highs, beta_true):
    """Per-parameter bias/SD/ESD/CP over replicates (rows)."""
    estimates = np.asarray(estimates, dtype=float)
    if estimates.shape[0] < 2:
        raise ValueError("need at least 2 replicates for metrics")
    ses = np.asarray(ses, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float)
    mean = estimates.mean(axis=0)
    bias = mean - beta_true
    with np.errstate(divide="ignore", invalid="ignore"):
        bias_pct = np.where(beta_true != 0, 100.0 * bias / np.abs(beta_true), np.nan)
    sd = estimates.std(axis=0, ddof=1)
    esd = ses.mean(axis=0)
    cp = np.mean((np.asarray(lows) <= beta_true) & (beta_true <= np.asarray(highs)), axis=0)
    return {"bias": bias, "bias_pct": bias_pct, "sd": sd, "esd": esd, "cp": cp}


@dataclass
class McStudyResult:
    config: StudyConfig
    beta_true: np.ndarray
    parameter_names: list
    summaries: dict          # estimator -> metrics dict (+ "re_<base>" entries)
    replicates: dict         # estimator -> (est, se, lo, hi) stacked arrays
    n_ok: int
    failures: dict           # error type -> count


def run_mc(config, progress=None):
    """Run the full Monte Carlo study; deterministic given base_seed
    regardless of thread count."""
    config.validate()
    from .datagen import calibrate_latent_corr

    latent = calibrate_latent_corr(default_covariate_spec())
    out_spec = default_outcome_spec()
    beta_true = out_spec.beta

    def job(i):
        try:
            return i, run_replicate(config, i, latent=latent), None
        except TpgmmError as exc:
            return i, None, type(exc).__name__

    raw = [None] * config.reps
    if config.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.threads) as pool:
            for i, res, err in pool.map(job, range(config.reps)):
                raw[i] = (res, err)
                if progress:
                    progress(i)
    else:
        for i in range(config.reps):
            _, res, err = job(i)
            raw[i] = (res, err)
            if progress:
                progress(i)

    failures = {}
    ok = []
    for res, err in raw:
        if err is None:
            ok.append(res)
        else:
            failures[err] = failures.get(err, 0) + 1
    n_fail = config.reps - len(ok)
    if n_fail > 0.05 * config.reps:
        raise TpgmmError(
            f"{n_fail}/{config.reps} replicates failed ({failures})"
        )

    replicates = {}
    summaries = {}
    for est in config.estimators:
        stacks = [np.stack([r[est][k] for r in ok]) for k in range(4)]
        replicates[est] = tuple(stacks)
        summaries[est] = metrics(stacks[0], stacks[1], stacks[2], stacks[3], beta_true)
    # relative efficiency: variance ratio baseline/estimator
    for est in config.estimators:
        for base in config.estimators:
            if base == est:
                continue
            summaries[est][f"re_{base}"] = (
                summaries[base]["sd"] ** 2 / summaries[est]["sd"] ** 2
            )
    return McStudyResult(
        config=config,
        beta_true=beta_true,
        parameter_names=list(out_spec.terms),
        summaries=summaries,
        replicates=replicates,
        n_ok=len(ok),
        failures=failures,
    )


# ---------------------------------------------------------------------------
# external file formats


def _fmt(x):
    return f"{float(x):.17g}"


def write_results_csv(result, path):
    ests = list(result.config.estimators)
    re_cols = [f"re_{b}" for b in ests]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "parameter", "true", "bias", "bias_pct",
                    "sd", "esd", "cp"] + re_cols)
        for est in ests:
            s = result.summaries[est]
            for j, name in enumerate(result.parameter_names):
                row = [est, name, _fmt(result.beta_true[j]), _fmt(s["bias"][j]),
                       _fmt(s["bias_pct"][j]), _fmt(s["sd"][j]), _fmt(s["esd"][j]),
                       _fmt(s["cp"][j])]
                for b in ests:
                    row.append("" if b == est else _fmt(s[f"re_{b}"][j]))
                w.writerow(row)


def write_replicates_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "estimator", "parameter", "estimate", "se", "lo", "hi"])
        for est in result.config.estimators:
            e, se, lo, hi = result.replicates[est]
            for i in range(e.shape[0]):
                for j, name in enumerate(result.parameter_names):
                    w.writerow([i, est, name, _fmt(e[i, j]), _fmt(se[i, j]),
                                _fmt(lo[i, j]), _fmt(hi[i, j])])


def write_summary(result, path):
    cfg = result.config
    lines = [
        f"version = {__version__}",
        f"n_phase1 = {cfg.n_phase1}",
        f"design = {cfg.design_kind}",
        f"phase2_sizing = all cases + {CC_CONTROL_MULT}x controls (case-control) / "
        "all cases + per-stratum control quotas of "
        f"{BALANCED_CONTROL_MULT[1]}x and {BALANCED_CONTROL_MULT[2]}x the case count (balanced)",
        f"reps = {cfg.reps}",
        f"base_seed = {cfg.base_seed}",
        f"pi_mode = {cfg.pi_mode}",
        f"level = {_fmt(cfg.level)}",
        f"estimators = {' '.join(cfg.estimators)}",
        f"replicates_ok = {result.n_ok}",
        f"failures = {sum(result.failures.values())}",
    ]
    for err, cnt in sorted(result.failures.items()):
        lines.append(f"failure.{err} = {cnt}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv_columns(path):
    """CSV -> dict of named float columns (ids kept as strings)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = list(reader)
    cols = {name: [] for name in header}
    for lineno, row in enumerate(rows, 2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields")
        for name, value in zip(header, row):
            cols[name].append(value)
    out = {}
    for name, values in cols.items():
        if name == "id":
            out[name] = values
        else:
            try:
                out[name] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise ParseError(f"{path}: non-numeric value in column {name!r}") from exc
    return out


def write_csv_columns(path, names, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        n = len(columns[names[0]])
        for i in range(n):
            row = []
            for name in names:
                v = columns[name][i]
                row.append(v if isinstance(v, str) else _fmt(v))
            w.writerow(row)


@dataclass
class FitReport:
    terms: list
    beta: np.ndarray
    se: np.ndarray
    ci: list
    opt_form_gap: float


def run_fit(phase1_file, phase2_file, design_file, x_terms, z_terms,
            pi_mode="known", level=0.95):
    """Single-dataset pipeline: reduced fit on phase-I, iterated GMM on
    the joined two-phase data, sandwich intervals."""
    p1 = read_csv_columns(phase1_file)
    p2 = read_csv_columns(phase2_file)
    for need in ("id", "y", "s"):
        if need not in p1:
            raise ParseError(f"{phase1_file}: missing column {need!r}")
    if "id" not in p2:
        raise ParseError(f"{phase2_file}: missing column 'id'")
    index = {pid: i for i, pid in enumerate(p1["id"])}
    n = len(p1["id"])
    r = np.zeros(n, dtype=np.int8)
    merged = {k: v for k, v in p1.items() if k != "id"}
    for name in p2:
        if name == "id":
            continue
        merged[name] = np.full(n, np.nan)
    for j, pid in enumerate(p2["id"]):
        if pid not in index:
            raise JoinError(f"phase-II id {pid!r} not present in phase-I")
        i = index[pid]
        r[i] = 1
        for name in p2:
            if name != "id":
                merged[name][i] = p2[name][j]

    design = read_design(design_file)
    if pi_mode == "empirical":
        design = with_empirical_pi(design)
    y = merged["y"]
    s = merged["s"].astype(int)
    pi_row = design.pi_rows(y, s)
    offset_row = design.offset_rows(s)
    xmat = build_design(merged, x_terms)
    if z_terms:
        zmat = build_design(merged, z_terms)
        theta_fit = fit_logistic(y, zmat)
        ctx = MomentContext(y=y, xmat=xmat, r=r, pi_row=pi_row,
                            offset_row=offset_row, zmat=zmat,
                            theta_hat=theta_fit.coef)
    else:
        # no phase-I summary model: exactly identified offset-score system
        ctx = MomentContext(y=y, xmat=xmat, r=r, pi_row=pi_row,
                            offset_row=offset_row)
    fit = iterated_gmm(ctx)
    cov = sandwich_cov(ctx, fit)
    cis = wald_ci(fit, cov, level)
    return FitReport(terms=list(x_terms), beta=fit.beta_hat, se=cov.se, ci=cis,
                     opt_form_gap=cov.opt_form_gap)


def write_fit_report(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["term", "estimate", "se", "ci_lo", "ci_hi"])
        for j, term in enumerate(report.terms):
            w.writerow([term, _fmt(report.beta[j]), _fmt(report.se[j]),
                        _fmt(report.ci[j][0]), _fmt(report.ci[j][1])])


def simulate_files(config, seed, out_dir):
    """Emit one population as phase-I/phase-II CSVs plus the design file."""
    import os

    rng = replicate_rng(seed, 0)
    cols, y, _ = simulate_population(config.n_phase1, rng)
    sample, design, s = _phase2_draw(y, cols["x1"], config.design_kind, rng)
    n = len(y)
    ids = [str(i + 1) for i in range(n)]
    phase1 = {
        "id": ids, "y": y, "s": s.astype(float),
        "x1": cols["x1"], "d1": cols["d1"], "d2": cols["d2"], "d3": cols["d3"],
        "x4": cols["x4"],
    }
    p1_path = os.path.join(out_dir, "phase1.csv")
    write_csv_columns(p1_path, ["id", "y", "s", "x1", "d1", "d2", "d3", "x4"], phase1)
    sel = sample.indices
    phase2 = {"id": [ids[i] for i in sel], "x2": cols["x2"][sel],
              "x2c": cols["x2c"][sel]}
    p2_path = os.path.join(out_dir, "phase2.csv")
    write_csv_columns(p2_path, ["id", "x2", "x2c"], phase2)
    d_path = os.path.join(out_dir, "design.txt")
    write_design(design, d_path)
    return p1_path, p2_path, d_path
