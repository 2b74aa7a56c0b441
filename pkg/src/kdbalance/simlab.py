"""Simulation designs, Monte Carlo orchestration, and the bias decomposition.

Two generators are provided. The first draws four standard-normal covariates
and passes either them or four fixed nonlinear transforms (standardized in
sample) through shared coefficient tables for the assignment logit and the
outcome mean. The second assigns treatment by a fair coin and then draws the
first two covariates with group-dependent means and correlation, so the
product X1*X2 and the square X3^2 carry hidden imbalance; weights only ever
see the first four standardized covariates.

Replications are seeded by splittable counter-based mixing of (base seed,
replication index), so results are identical at any parallelism degree.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .balancing import (
    BalanceScheme,
    MomentConstraints,
    Target,
    estimate_ate,
    estimate_att,
    solve_weights,
)
from .baselines import (
    fit_propensity_logistic,
    ipw_ate_weights,
    ipw_att_weights,
    oracle_ate,
    oracle_att,
    unadjusted_weights,
)
from .diagnostics import balance_report, estimator_metrics
from .errors import (
    DegenerateAssignment,
    InfeasibleBalance,
    NumericalBreakdown,
    TooFewEstimates,
    UsageError,
)
from .kernel import median_bandwidth
from .model import BalanceWeights, Dataset, EstimateReport, WeightScheme, validate_dataset

METHODS = ("oracle", "unad", "ipw", "kdbc", "kdm1")
DISPLAY_NAMES = {"oracle": "Oracle", "unad": "UnAD", "ipw": "IPW", "kdbc": "KDBC", "kdm1": "KDM1"}

# Shared coefficient tables: the assignment logit and the outcome mean use the
# same coefficients whether fed raw covariates or the standardized transforms.
_ETA_COEF = np.array([-1.0, 0.5, -0.25, -0.1])
_MU_INTERCEPT = 210.0
_MU_COEF = np.array([27.4, 13.7, 13.7, 13.7])


@dataclass(frozen=True)
class KangSchaferConfig:
    """Design with nonlinear transforms hiding the true assignment/outcome drivers.

    delta_T and delta_O choose whether the assignment and the outcome mean see
    the raw covariates ("X") or the standardized transforms ("U"). Observed
    covariates handed to estimators are always the raw X.
    """

    N: int = 200
    sigma2_outcome: float = 10.0
    rho: float = 0.0
    delta_T: str = "X"
    delta_O: str = "X"
    gamma: float = 20.0
    seed: int | None = None

    def __post_init__(self):
        if self.N < 20:
            raise ValueError(f"N must be at least 20, got {self.N}")
        if self.sigma2_outcome <= 0:
            raise ValueError("sigma2_outcome must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        for name in ("delta_T", "delta_O"):
            if getattr(self, name) not in ("X", "U"):
                raise ValueError(f"{name} must be 'X' or 'U'")


@dataclass(frozen=True)
class Sim2Config:
    """Design with group-dependent covariate moments and two latent drivers.

    alpha1 shifts both control means, alpha2 perturbs the control correlation,
    alpha3/alpha4 weight the latent product and square terms in the outcome.
    """

    N: int = 200
    p_treat: float = 0.5
    alpha1: float = 0.8
    alpha2: float = 0.2
    alpha3: float = 1.0
    alpha4: float = 2.0
    gamma: float = 10.0
    sigma2_outcome: float = 10.0
    lambda_grid: tuple = (0.0, 1.0, 2.0, 5.0, 10.0, 100.0)
    seed: int | None = None

    def __post_init__(self):
        if self.N < 20:
            raise ValueError(f"N must be at least 20, got {self.N}")
        if not 0.0 < self.p_treat < 1.0:
            raise ValueError("p_treat must lie in (0, 1)")
        if not abs(0.5 + self.alpha2) < 1.0:
            raise ValueError("0.5 + alpha2 must stay inside (-1, 1) for a valid correlation")
        if self.sigma2_outcome <= 0:
            raise ValueError("sigma2_outcome must be positive")
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if any(v < 0 for v in self.lambda_grid):
            raise ValueError("lambda grid entries must be nonnegative")


@dataclass(frozen=True)
class SimulatedData:
    """A generated dataset plus the quantities only the simulator knows.

    audit, when set, is the covariate matrix balance tables should run over
    (it may include columns the weights never saw); otherwise diagnostics
    stay on the observed covariates.
    """

    data: Dataset
    mu0: np.ndarray
    mu1: np.ndarray
    tau: float
    hidden: np.ndarray | None = None      # standardized covariates kept from the weights
    hidden_raw: np.ndarray | None = None  # the same quantities before standardization
    audit: np.ndarray | None = None

    def diagnostic_covariates(self) -> np.ndarray:
        return self.data.X if self.audit is None else self.audit


def _standardize(M: np.ndarray) -> np.ndarray:
    return (M - M.mean(axis=0)) / M.std(axis=0, ddof=1)


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ez = np.exp(eta[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def kang_schafer_generate(cfg: KangSchaferConfig) -> SimulatedData:
    """Draw one replication of the transform-confounded design.

    X_d ~ N(0,1); the transforms are exp(X1/2), X2/(1+exp(X1))+10,
    (X1*X3/25+0.6)^3, (X2+X4+20)^2, standardized in sample. Potential
    outcomes are bivariate normal around (mu, mu+gamma) with variance
    sigma2_outcome and correlation rho.

    Raises:
        DegenerateAssignment: the draw left a treatment arm with fewer
            than 2 units, too few for variance-based diagnostics.
    """
    rng = np.random.default_rng(cfg.seed)
    N = cfg.N
    X = rng.standard_normal((N, 4))
    U_raw = np.column_stack(
        [
            np.exp(X[:, 0] / 2.0),
            X[:, 1] / (1.0 + np.exp(X[:, 0])) + 10.0,
            (X[:, 0] * X[:, 2] / 25.0 + 0.6) ** 3,
            (X[:, 1] + X[:, 3] + 20.0) ** 2,
        ]
    )
    U = _standardize(U_raw)
    eta = (X if cfg.delta_T == "X" else U) @ _ETA_COEF
    T = (rng.random(N) < _sigmoid(eta)).astype(int)
    mu = _MU_INTERCEPT + (X if cfg.delta_O == "X" else U) @ _MU_COEF
    sig = math.sqrt(cfg.sigma2_outcome)
    z0 = rng.standard_normal(N)
    z1 = rng.standard_normal(N)
    y0 = mu + sig * z0
    y1 = mu + cfg.gamma + sig * (cfg.rho * z0 + math.sqrt(1.0 - cfg.rho**2) * z1)
    if min(T.sum(), N - T.sum()) < 2:
        raise DegenerateAssignment("a treatment arm has fewer than 2 units")
    data = validate_dataset(X, T, np.where(T == 1, y1, y0), y0, y1)
    return SimulatedData(
        data=data, mu0=mu, mu1=mu + cfg.gamma, tau=cfg.gamma, hidden=U, hidden_raw=U_raw
    )


def sim2_generate(cfg: Sim2Config) -> SimulatedData:
    """Draw one replication of the latent-interaction design.

    Treatment is Bernoulli(p_treat) first; (X1, X2) then follow group-specific
    bivariate normals (control means shifted by alpha1, control correlation
    raised by alpha2); X3, X4 are standard normal; X5 = X1*X2 and X6 = X3^2
    are formed before standardizing all six columns in sample. The outcome
    mean is a linear rule over the standardized six, with independent normal
    potential outcomes gamma apart. Estimators observe only X1..X4.

    Raises:
        DegenerateAssignment: the coin left a treatment arm with fewer
            than 2 units, too few for variance-based diagnostics.
    """
    rng = np.random.default_rng(cfg.seed)
    N = cfg.N
    T = (rng.random(N) < cfg.p_treat).astype(int)
    if min(T.sum(), N - T.sum()) < 2:
        raise DegenerateAssignment("a treatment arm has fewer than 2 units")
    Z = rng.standard_normal((N, 2))
    L1 = np.linalg.cholesky(np.array([[1.0, 0.5], [0.5, 1.0]]))
    L0 = np.linalg.cholesky(np.array([[1.0, 0.5 + cfg.alpha2], [0.5 + cfg.alpha2, 1.0]]))
    mean1 = np.array([1.0, 2.0])
    mean0 = mean1 + cfg.alpha1
    X12 = np.where((T == 1)[:, None], mean1 + Z @ L1.T, mean0 + Z @ L0.T)
    X34 = rng.standard_normal((N, 2))
    raw = np.column_stack([X12, X34, X12[:, 0] * X12[:, 1], X34[:, 0] ** 2])
    std6 = _standardize(raw)
    mu = std6 @ np.array([20.0, 10.0, 5.0, 5.0, cfg.alpha3, cfg.alpha4])
    sig = math.sqrt(cfg.sigma2_outcome)
    y0 = mu + sig * rng.standard_normal(N)
    y1 = mu + cfg.gamma + sig * rng.standard_normal(N)
    data = validate_dataset(std6[:, :4], T, np.where(T == 1, y1, y0), y0, y1)
    return SimulatedData(
        data=data, mu0=mu, mu1=mu + cfg.gamma, tau=cfg.gamma,
        hidden=std6[:, 4:], hidden_raw=raw, audit=std6,
    )


def generate(config) -> SimulatedData:
    """Dispatch a config dataclass to its generator."""
    if isinstance(config, KangSchaferConfig):
        return kang_schafer_generate(config)
    if isinstance(config, Sim2Config):
        return sim2_generate(config)
    raise TypeError(f"unknown simulation config type {type(config).__name__}")


def bias_decomposition(data: Dataset, mu0, mu1, w: BalanceWeights, tau: float):
    """Split the error of a weighted estimate into three exact terms.

    term1: mismatch between the p-weighted effect over treated units and tau.
    term2: imbalance of the baseline mean between the two weighted samples.
    term3: weighted residual noise around the conditional means.
    The three terms sum to (estimate - tau) to floating-point accuracy.

    mu0 and mu1 may be per-unit arrays or callables evaluated on data.X.
    """
    mu0 = np.asarray(mu0(data.X) if callable(mu0) else mu0, dtype=float)
    mu1 = np.asarray(mu1(data.X) if callable(mu1) else mu1, dtype=float)
    t = data.T == 1
    p, q = w.p, w.q
    term1 = float(p @ (mu1[t] - mu0[t])) - tau * float(p.sum())
    term2 = float(p @ mu0[t] - q @ mu0[~t])
    term3 = float(p @ (data.Y[t] - mu1[t]) - q @ (data.Y[~t] - mu0[~t]))
    return term1, term2, term3


def child_seed(base_seed: int | None, index: int) -> int:
    """Deterministic per-replication seed, independent of work partitioning."""
    ss = np.random.SeedSequence(entropy=(base_seed if base_seed is not None else 0, index))
    return int(ss.generate_state(1, np.uint64)[0])


def _weights_for(name: str, data: Dataset, s2: float, target: Target, lam: float) -> BalanceWeights:
    if name == "unad":
        return unadjusted_weights(data)
    if name == "ipw":
        model = fit_propensity_logistic(data)
        if target is Target.ATE:
            return ipw_ate_weights(model, data)
        return ipw_att_weights(model, data)
    if name in ("kdbc", "kdm1"):
        moments = MomentConstraints.FIRST_MOMENT if name == "kdm1" else MomentConstraints.NONE
        scheme = BalanceScheme(target=target, moment_constraints=moments, lam=lam)
        return solve_weights(data, scheme, s2)
    raise UsageError(f"unknown method '{name}' (choose from {', '.join(METHODS)})")


def _run_replication(args):
    config, seed, methods, target, lam = args
    cfg = dataclasses.replace(config, seed=seed)
    try:
        sim = generate(cfg)
    except DegenerateAssignment:
        return None
    data = sim.data
    s2 = median_bandwidth(data.X).sigma2
    C = sim.diagnostic_covariates()
    out = {}
    for name in methods:
        if name == "oracle":
            est = oracle_ate(data) if target is Target.ATE else oracle_att(data)
            out[name] = (est, None)
            continue
        try:
            w = _weights_for(name, data, s2, target, lam)
            est = estimate_ate(data, w) if target is Target.ATE else estimate_att(data, w)
            bal = balance_report(data, w, s2, covariates=C)
        except (InfeasibleBalance, NumericalBreakdown):
            out[name] = None
        else:
            out[name] = (est, bal)
    return out


@dataclass(frozen=True)
class BalanceAverages:
    """Balance statistics averaged over replications (no single-dataset
    identities are implied between the averaged fields)."""

    rw: float
    kd: float
    max_asmd: float
    mean_asmd: float
    med_asmd: float
    per_covariate_asmd: np.ndarray
    mean_ks: float
    mean_t: float

    def __post_init__(self):
        arr = np.array(self.per_covariate_asmd, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "per_covariate_asmd", arr)


@dataclass(frozen=True)
class MethodSummary:
    name: str
    report: EstimateReport
    balance: BalanceAverages | None
    failures: int


@dataclass(frozen=True)
class MonteCarloSummary:
    """Aggregate of a repeated-simulation study.

    requested = replications + failed: every draw is either a successful
    replication entering the aggregates or a counted failure.
    """

    methods: tuple
    replications: int
    failed: int
    requested: int
    truth: float
    target: Target
    lam: float


def _average_balance(reports) -> BalanceAverages | None:
    reports = [r for r in reports if r is not None]
    if not reports:
        return None
    return BalanceAverages(
        rw=float(np.mean([r.rw for r in reports])),
        kd=float(np.mean([r.kd for r in reports])),
        max_asmd=float(np.mean([r.max_asmd for r in reports])),
        mean_asmd=float(np.mean([r.mean_asmd for r in reports])),
        med_asmd=float(np.mean([r.med_asmd for r in reports])),
        per_covariate_asmd=np.mean([r.per_covariate_asmd for r in reports], axis=0),
        mean_ks=float(np.mean([r.mean_ks for r in reports])),
        mean_t=float(np.mean([r.mean_t for r in reports])),
    )


def monte_carlo(
    config,
    methods,
    reps: int,
    target: Target = Target.ATE,
    lam: float = 0.0,
    jobs: int = 1,
) -> MonteCarloSummary:
    """Run `reps` replications of a design and summarize each method.

    Replication r is seeded by mixing (config.seed, r), so the summary is a
    pure function of the arguments and identical at any `jobs` value. Draws
    with an empty arm are counted in `failed` and excluded; method-level
    solver failures are excluded from that method's aggregates and counted on
    its summary.
    """
    methods = tuple(methods)
    for name in methods:
        if name not in METHODS:
            raise UsageError(f"unknown method '{name}' (choose from {', '.join(METHODS)})")
    if reps < 2:
        raise TooFewEstimates("need at least 2 replications")
    tasks = [
        (config, child_seed(config.seed, r), methods, target, float(lam))
        for r in range(reps)
    ]
    if jobs <= 1:
        results = [_run_replication(t) for t in tasks]
    else:
        chunk = max(1, reps // (jobs * 4))
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_replication, tasks, chunksize=chunk))
    failed = sum(1 for r in results if r is None)
    ok = [r for r in results if r is not None]
    summaries = []
    for name in methods:
        cells = [r[name] for r in ok]
        est = [c[0] for c in cells if c is not None]
        bals = [c[1] for c in cells if c is not None]
        failures = sum(1 for c in cells if c is None)
        report = estimator_metrics(est, truth=config.gamma, method=DISPLAY_NAMES[name])
        summaries.append(
            MethodSummary(
                name=name,
                report=report,
                balance=_average_balance(bals),
                failures=failures,
            )
        )
    return MonteCarloSummary(
        methods=tuple(summaries),
        replications=len(ok),
        failed=failed,
        requested=reps,
        truth=float(config.gamma),
        target=target,
        lam=float(lam),
    )


def summary_rows(mc: MonteCarloSummary) -> list[dict]:
    """Flatten a Monte Carlo summary into table rows, sorted by |bias|.

    Column names follow the reporting convention: the estimate column is named
    for the estimand, balance columns are rw, KD, maxASMD, meanASMD, medASMD,
    meanKS, meanT, and designs with hidden covariates add X5ASMD/X6ASMD.
    Methods without weights (the oracle) leave balance cells empty.
    """
    label = "ATE" if mc.target is Target.ATE else "ATT"
    extended = any(
        ms.balance is not None and ms.balance.per_covariate_asmd.size >= 6
        for ms in mc.methods
    )
    rows = []
    for ms in sorted(mc.methods, key=lambda m: (abs(m.report.bias), m.name)):
        row = {
            "method": DISPLAY_NAMES[ms.name],
            "lambda": mc.lam,
            label: ms.report.mean,
            "abs(Bias)": abs(ms.report.bias),
            "sd": ms.report.sd,
            "RMSE": ms.report.rmse,
        }
        bal = ms.balance
        row["rw"] = bal.rw if bal else ""
        row["KD"] = bal.kd if bal else ""
        row["maxASMD"] = bal.max_asmd if bal else ""
        row["meanASMD"] = bal.mean_asmd if bal else ""
        row["medASMD"] = bal.med_asmd if bal else ""
        if extended:
            row["X5ASMD"] = float(bal.per_covariate_asmd[4]) if bal else ""
            row["X6ASMD"] = float(bal.per_covariate_asmd[5]) if bal else ""
        row["meanKS"] = bal.mean_ks if bal else ""
        row["meanT"] = bal.mean_t if bal else ""
        row["failures"] = ms.failures
        rows.append(row)
    return rows


# -- bootstrap ------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapMethod:
    name: str
    mean: float
    sd: float
    estimates: np.ndarray
    failures: int

    def __post_init__(self):
        arr = np.array(self.estimates, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "estimates", arr)


@dataclass(frozen=True)
class BootstrapSummary:
    methods: tuple
    draws: int
    failed: int
    target: Target
    lam: float


def _bootstrap_rep(args):
    data, seed, methods, target, lam, within_group = args
    rng = np.random.default_rng(seed)
    N = data.n
    if within_group:
        t_idx = data.treated_index()
        c_idx = data.control_index()
        idx = np.concatenate(
            [
                t_idx[rng.integers(0, t_idx.size, t_idx.size)],
                c_idx[rng.integers(0, c_idx.size, c_idx.size)],
            ]
        )
    else:
        idx = None
        for _ in range(100):  # redraw pooled resamples that empty a group
            cand = rng.integers(0, N, N)
            s = int(data.T[cand].sum())
            if 0 < s < N:
                idx = cand
                break
        if idx is None:
            return None
    resample = validate_dataset(
        data.X[idx],
        data.T[idx],
        data.Y[idx],
        None if data.Y0 is None else data.Y0[idx],
        None if data.Y1 is None else data.Y1[idx],
    )
    s2 = median_bandwidth(resample.X).sigma2
    out = {}
    for name in methods:
        if name == "oracle":
            try:
                out[name] = oracle_ate(resample) if target is Target.ATE else oracle_att(resample)
            except Exception:
                out[name] = None
            continue
        try:
            w = _weights_for(name, resample, s2, target, lam)
            out[name] = (
                estimate_ate(resample, w) if target is Target.ATE else estimate_att(resample, w)
            )
        except (InfeasibleBalance, NumericalBreakdown):
            out[name] = None
    return out


def bootstrap(
    data: Dataset,
    methods,
    b: int,
    seed: int | None = None,
    target: Target = Target.ATE,
    lam: float = 0.0,
    jobs: int = 1,
    within_group: bool = False,
) -> BootstrapSummary:
    """Resample the rows of a dataset b times and re-estimate each method.

    Pooled resampling (the default) redraws any resample that empties a
    treatment arm, up to 100 attempts; within_group=True resamples each arm
    separately, preserving group sizes. sd is the spread of the bootstrap
    estimates scaled by 1/sqrt(b).
    """
    methods = tuple(methods)
    for name in methods:
        if name not in METHODS:
            raise UsageError(f"unknown method '{name}' (choose from {', '.join(METHODS)})")
    if b < 2:
        raise TooFewEstimates("need at least 2 bootstrap draws")
    tasks = [
        (data, child_seed(seed, i), methods, target, float(lam), within_group)
        for i in range(b)
    ]
    if jobs <= 1:
        results = [_bootstrap_rep(t) for t in tasks]
    else:
        chunk = max(1, b // (jobs * 4))
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_bootstrap_rep, tasks, chunksize=chunk))
    failed = sum(1 for r in results if r is None)
    ok = [r for r in results if r is not None]
    out = []
    for name in methods:
        est = np.array([r[name] for r in ok if r[name] is not None], dtype=float)
        failures = sum(1 for r in ok if r[name] is None)
        if est.size < 2:
            raise TooFewEstimates(f"method '{name}' produced {est.size} usable estimates")
        out.append(
            BootstrapMethod(
                name=name,
                mean=float(est.mean()),
                sd=float(est.std(ddof=1)) / math.sqrt(est.size),
                estimates=est,
                failures=failures,
            )
        )
    return BootstrapSummary(
        methods=tuple(out), draws=b, failed=failed, target=target, lam=float(lam)
    )
