"""Reference estimators: logistic propensity weighting, the unadjusted
difference in means, and potential-outcome oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingPotentialOutcomes
from .model import BalanceWeights, Dataset, WeightScheme

_PROB_CLIP = 1e-6
_SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class PropensityModel:
    """A fitted logistic model of treatment given covariates.

    coefficients has the intercept first. fitted holds per-unit treatment
    probabilities clipped into [1e-6, 1 - 1e-6]. separated flags apparent
    perfect separation (coefficients diverged past magnitude 30 while the
    likelihood kept improving); such fits return converged=False.
    """

    coefficients: np.ndarray
    fitted: np.ndarray
    converged: bool
    iterations: int
    separated: bool = False
    loglik_path: tuple = ()

    def __post_init__(self):
        for name in ("coefficients", "fitted"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ez = np.exp(eta[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loglik(T: np.ndarray, eta: np.ndarray) -> float:
    # sum T*eta - log(1 + exp(eta)), stable on both tails
    return float(T @ eta - np.logaddexp(0.0, eta).sum())


def fit_propensity_logistic(
    data: Dataset, max_iter: int = 100, tol: float = 1e-8
) -> PropensityModel:
    """Newton-Raphson logistic regression of T on [1, X] with step halving.

    Converges when the gradient max-norm drops to 1e-8; the log likelihood
    never decreases across accepted steps. Stops early with separated=True
    (and converged=False) once coefficients pass magnitude 30, the signature
    of perfectly separable groups.
    """
    Z = np.column_stack([np.ones(data.n), data.X])
    T = data.T.astype(float)
    beta = np.zeros(Z.shape[1])
    eta = Z @ beta
    ll = _loglik(T, eta)
    path = [ll]
    converged = False
    separated = False
    it = 0
    for it in range(1, max_iter + 1):
        p = _sigmoid(eta)
        grad = Z.T @ (T - p)
        if np.max(np.abs(grad)) <= tol:
            converged = True
            it -= 1
            break
        W = p * (1.0 - p)
        H = Z.T @ (Z * W[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # halve until the likelihood stops decreasing
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            eta_c = Z @ cand
            ll_c = _loglik(T, eta_c)
            if ll_c >= ll - 1e-12:
                break
            scale /= 2.0
        beta = beta + scale * step
        eta = Z @ beta
        ll = _loglik(T, eta)
        path.append(ll)
        if np.max(np.abs(beta)) > _SEPARATION_BOUND:
            separated = True
            break
    fitted = np.clip(_sigmoid(eta), _PROB_CLIP, 1.0 - _PROB_CLIP)
    return PropensityModel(
        coefficients=beta,
        fitted=fitted,
        converged=converged,
        iterations=it,
        separated=separated,
        loglik_path=tuple(path),
    )


def ipw_ate_weights(model: PropensityModel, data: Dataset) -> BalanceWeights:
    """Inverse-propensity ATE weights, each side normalized to sum to one.

    p_i proportional to 1/e_i on treated units, q_j proportional to
    1/(1 - e_j) on control units.
    """
    e = model.fitted
    p = 1.0 / e[data.T == 1]
    q = 1.0 / (1.0 - e[data.T == 0])
    return BalanceWeights(p=p / p.sum(), q=q / q.sum(), scheme=WeightScheme.IPW_ATE)


def ipw_att_weights(
    model: PropensityModel, data: Dataset, renormalize: bool = False
) -> BalanceWeights:
    """Inverse-propensity ATT weights: p uniform at 1/n1, q_j = e_j / (n1 (1 - e_j)).

    The control weights are intentionally left unnormalized; pass
    renormalize=True to rescale them to sum to one.
    """
    e0 = model.fitted[data.T == 0]
    q = e0 / (data.n1 * (1.0 - e0))
    if renormalize:
        q = q / q.sum()
    return BalanceWeights(
        p=np.full(data.n1, 1.0 / data.n1), q=q, scheme=WeightScheme.IPW_ATT
    )


def unadjusted_weights(data: Dataset) -> BalanceWeights:
    """Uniform weights on both sides: the raw difference in means."""
    return BalanceWeights(
        p=np.full(data.n1, 1.0 / data.n1),
        q=np.full(data.n0, 1.0 / data.n0),
        scheme=WeightScheme.UNADJUSTED,
    )


def oracle_ate(data: Dataset) -> float:
    """mean(Y1) - mean(Y0) over the whole sample; needs potential outcomes."""
    if data.Y0 is None or data.Y1 is None:
        raise MissingPotentialOutcomes("oracle_ate needs Y0 and Y1")
    return float(data.Y1.mean() - data.Y0.mean())


def oracle_att(data: Dataset) -> float:
    """mean(Y1 - Y0) over treated units; needs potential outcomes."""
    if data.Y0 is None or data.Y1 is None:
        raise MissingPotentialOutcomes("oracle_att needs Y0 and Y1")
    t = data.T == 1
    return float((data.Y1[t] - data.Y0[t]).mean())
