"""Balance and estimator diagnostics: standardized mean differences, weighted
ECDF/KS statistics, Welch-style t statistics, kernel-distance reports, and
Monte Carlo error summaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, TooFewEstimates, ZeroVariance
from .kernel import kernel_distance, rw_stat
from .model import BalanceReport, BalanceWeights, Dataset, EstimateReport, WeightScheme


@dataclass(frozen=True)
class WeightedSample:
    """Values carrying probability masses; masses normalize to sum to one."""

    values: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        m = np.asarray(self.masses, dtype=float).ravel()
        if v.size == 0:
            raise EmptySample("a weighted sample needs at least one value")
        if v.shape != m.shape:
            raise ValueError(f"values and masses differ in length: {v.size} vs {m.size}")
        if m.min() < -1e-12:
            raise ValueError("masses must be nonnegative")
        total = m.sum()
        if total <= 0:
            raise ValueError("masses must have positive total")
        m = np.maximum(m, 0.0) / np.maximum(m, 0.0).sum()
        v = np.array(v)
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "masses", m)

    def mean(self) -> float:
        return float(self.masses @ self.values)

    def var(self) -> float:
        """Weighted variance with the ratio correction 1 / (1 - sum(m^2)).

        Reduces to the ddof=1 sample variance under uniform masses.
        """
        denom = 1.0 - float(self.masses @ self.masses)
        if denom <= 0:
            raise ZeroVariance("all mass on one point; variance undefined")
        mu = self.mean()
        return float(self.masses @ (self.values - mu) ** 2) / denom


@dataclass(frozen=True)
class ECDF:
    """Right-continuous step function F(x) = mass of values <= x."""

    xs: np.ndarray
    cum: np.ndarray

    def __call__(self, x):
        idx = np.searchsorted(self.xs, np.asarray(x, dtype=float), side="right")
        padded = np.concatenate([[0.0], self.cum])
        out = padded[idx]
        return float(out) if np.isscalar(x) or np.asarray(x).ndim == 0 else out


def weighted_ecdf(sample: WeightedSample) -> ECDF:
    """Cumulative distribution of a weighted sample, duplicates merged."""
    order = np.argsort(sample.values, kind="stable")
    v = sample.values[order]
    m = sample.masses[order]
    xs, start = np.unique(v, return_index=True)
    sums = np.add.reduceat(m, start)
    return ECDF(xs=xs, cum=np.cumsum(sums))


def _group_values(data: Dataset, d: int):
    x = data.X[:, d]
    return x[data.T == 1], x[data.T == 0]


def _asmd(x1, x0, p, q, att: bool) -> float:
    num = abs(float(p @ x1 / p.sum() - q @ x0 / q.sum()))
    if att:
        denom2 = float(np.var(x1, ddof=1)) if x1.size > 1 else 0.0
    else:
        v1 = float(np.var(x1, ddof=1)) if x1.size > 1 else 0.0
        v0 = float(np.var(x0, ddof=1)) if x0.size > 1 else 0.0
        denom2 = (v1 + v0) / 2.0
    if denom2 <= 0:
        raise ZeroVariance("covariate has no variance; ASMD undefined")
    return num / math.sqrt(denom2)


def asmd_ate(data: Dataset, w: BalanceWeights, d: int) -> float:
    """|weighted mean difference| over the pooled-group standard deviation.

    The denominator uses the unweighted per-group sample variances,
    sqrt((S1^2 + S0^2) / 2), so reweighting moves only the numerator.
    """
    x1, x0 = _group_values(data, d)
    return _asmd(x1, x0, w.p, w.q, att=False)


def asmd_att(data: Dataset, w: BalanceWeights, d: int) -> float:
    """|weighted mean difference| scaled by the treated-group deviation only."""
    x1, x0 = _group_values(data, d)
    return _asmd(x1, x0, w.p, w.q, att=True)


def _ks(x1, x0, p, q) -> float:
    F1 = weighted_ecdf(WeightedSample(x1, p))
    F0 = weighted_ecdf(WeightedSample(x0, q))
    pooled = np.unique(np.concatenate([x1, x0]))
    return float(np.max(np.abs(F1(pooled) - F0(pooled))))


def _welch_t(x1, x0, p, q) -> float:
    s1 = WeightedSample(x1, p)
    s0 = WeightedSample(x0, q)
    se2 = s1.var() / x1.size + s0.var() / x0.size
    if se2 <= 0:
        raise ZeroVariance("zero variance in both groups; t undefined")
    return (s1.mean() - s0.mean()) / math.sqrt(se2)


def mean_ks(data: Dataset, w: BalanceWeights, covariates: np.ndarray | None = None) -> float:
    """Average over covariates of the weighted two-sample KS statistic.

    The supremum is taken over the pooled sample points; weights act as
    probability masses (IPW_ATT control weights are normalized here).
    """
    C = data.X if covariates is None else np.atleast_2d(np.asarray(covariates, float))
    t = data.T == 1
    vals = [_ks(C[t, d], C[~t, d], w.p, w.q) for d in range(C.shape[1])]
    return float(np.mean(vals))


def mean_t(data: Dataset, w: BalanceWeights, covariates: np.ndarray | None = None) -> float:
    """Average over covariates of the weighted Welch t statistic.

    Per covariate: (weighted mean difference) / sqrt(S1w^2/n1 + S0w^2/n0),
    with each weighted variance using the ratio correction 1/(1 - sum(w^2)).
    Signs are kept; offsetting shifts can cancel in the average.
    """
    C = data.X if covariates is None else np.atleast_2d(np.asarray(covariates, float))
    t = data.T == 1
    vals = [_welch_t(C[t, d], C[~t, d], w.p, w.q) for d in range(C.shape[1])]
    return float(np.mean(vals))


def estimator_metrics(estimates, truth: float, method: str = "") -> EstimateReport:
    """Monte Carlo error summary of repeated estimates of a known truth.

    bias = mean - truth; sd = sample_std / sqrt(N); pct_bias = 100 * bias /
    sample_std; rmse = sqrt(mean((est - truth)^2)).

    Raises:
        TooFewEstimates: fewer than two estimates.
    """
    est = np.asarray(estimates, dtype=float).ravel()
    if est.size < 2:
        raise TooFewEstimates(f"need at least 2 estimates, got {est.size}")
    bias = float(est.mean() - truth)
    sample_std = float(est.std(ddof=1))
    sd = sample_std / math.sqrt(est.size)
    if sample_std > 0:
        pct = 100.0 * bias / sample_std
    else:
        pct = 0.0 if bias == 0 else math.copysign(math.inf, bias)
    rmse = float(np.sqrt(np.mean((est - truth) ** 2)))
    return EstimateReport(
        method=method, estimates=est, truth=float(truth),
        bias=bias, pct_bias=pct, sd=sd, rmse=rmse,
    )


def balance_report(
    data: Dataset,
    w: BalanceWeights,
    sigma2: float,
    covariates: np.ndarray | None = None,
) -> BalanceReport:
    """Full balance summary for one weighting of one dataset.

    rw and kd are computed on the dataset's own covariates (the ones the
    kernel balanced); the ASMD/KS/t columns run over `covariates` when given,
    letting callers audit balance on transformations the weights never saw.
    ATT-type weights use the treated-deviation ASMD variant.
    """
    C = data.X if covariates is None else np.atleast_2d(np.asarray(covariates, float))
    att = w.scheme in (WeightScheme.ATT_KDB, WeightScheme.IPW_ATT)
    t = data.T == 1
    asmd = np.array(
        [_asmd(C[t, d], C[~t, d], w.p, w.q, att=att) for d in range(C.shape[1])]
    )
    rw = rw_stat(data, w, sigma2)
    return BalanceReport(
        rw=rw,
        kd=kernel_distance(data, w, sigma2),
        max_asmd=float(asmd.max()),
        mean_asmd=float(asmd.mean()),
        med_asmd=float(np.median(asmd)),
        per_covariate_asmd=asmd,
        mean_ks=mean_ks(data, w, C),
        mean_t=mean_t(data, w, C),
    )


def _weighted_quantile(s: WeightedSample, prob: float) -> float:
    order = np.argsort(s.values, kind="stable")
    v = s.values[order]
    c = np.cumsum(s.masses[order])
    idx = int(np.searchsorted(c, prob, side="left"))
    return float(v[min(idx, v.size - 1)])


def silverman_bandwidth(s: WeightedSample) -> float:
    """0.9 * min(weighted sd, weighted IQR / 1.34) * n_eff^(-1/5).

    n_eff = 1 / sum(m^2). Falls back to 1.0 for samples with no spread.
    """
    try:
        sd = math.sqrt(s.var())
    except ZeroVariance:
        sd = 0.0
    iqr = _weighted_quantile(s, 0.75) - _weighted_quantile(s, 0.25)
    candidates = [c for c in (sd, iqr / 1.34) if c > 0]
    if not candidates:
        return 1.0
    n_eff = 1.0 / float(s.masses @ s.masses)
    return 0.9 * min(candidates) * n_eff ** (-0.2)


def weighted_density_series(
    s: WeightedSample, grid: np.ndarray, bandwidth: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian kernel density of a weighted sample on a fixed grid.

    Returns (grid, density). bandwidth defaults to the Silverman rule; the
    density integrates to ~1 over a grid covering the sample.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptySample("density grid is empty")
    h = silverman_bandwidth(s) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    z = (grid[:, None] - s.values[None, :]) / h
    dens = np.exp(-0.5 * z * z) @ s.masses / (h * math.sqrt(2.0 * math.pi))
    return grid, dens
