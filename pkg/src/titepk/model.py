"""Exposure-response time-to-event dose-toxicity model.

A single parameter beta scales the hazard h(t) = beta * E(t), where E is the
normalized effect-compartment concentration of the patient's regimen.  The
cycle-end DLT probability is then 1 - exp(-beta * AUC_E(t*)), which makes
cloglog(p) linear in log beta.  Inference runs on log beta with a normal
prior anchored so the prior median DLT probability at the reference regimen
is `median_p`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import inference
from .inference import MCMCConfig, Quadrature, QuadratureConfig
from .pk import DosingRegimen, PKParams, ReferenceScale, auc_exposure, effect_exposure


def cloglog(p):
    """log(-log(1-p)); linearizes the dose-toxicity link."""
    return np.log(-np.log1p(-np.asarray(p, dtype=float)))


def inv_cloglog(x):
    """Inverse of cloglog: 1 - exp(-exp(x))."""
    return -np.expm1(-np.exp(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class PatientOutcome:
    """One patient's cycle-1 record: first-DLT time or censoring at `time`."""

    regimen: DosingRegimen
    time: float        # hours in (0, cycle_length]
    dlt: bool          # True: first DLT at `time`; False: censored at `time`

    def __post_init__(self):
        if not 0 < self.time <= self.regimen.cycle_length:
            raise ValueError(
                f"time must lie in (0, {self.regimen.cycle_length}], got {self.time}"
            )


@dataclass(frozen=True)
class TitePkPrior:
    """Normal prior on log beta, anchored at the reference regimen."""

    ref: ReferenceScale
    median_p: float = 0.30   # prior median DLT probability at the reference
    sd: float = 1.25         # prior standard deviation of log beta

    def __post_init__(self):
        if not 0 < self.median_p < 1:
            raise ValueError("median_p must lie in (0,1)")
        if self.sd <= 0:
            raise ValueError("sd must be positive")

    @property
    def mean(self) -> float:
        """Prior mean of log beta: cloglog(median_p)."""
        return float(cloglog(self.median_p))


@dataclass(frozen=True)
class PosteriorSamples:
    """MCMC draws of log beta with convergence diagnostics."""

    log_beta: np.ndarray     # pooled draws, (chains*iters,)
    by_chain: np.ndarray     # (chains, iters)
    rhat: float
    accept_rate: float
    converged: bool          # False when R-hat crossed the failure threshold


@dataclass(frozen=True)
class RegimenSummary:
    """Posterior DLT-probability summary for one candidate regimen."""

    regimen: DosingRegimen
    median: float
    ci50: tuple  # (25%, 75%)
    ci95: tuple  # (2.5%, 97.5%)
    p_ud: float  # P(p < lower)
    p_tt: float  # P(lower <= p <= upper)
    p_od: float  # P(p > upper)


@dataclass(frozen=True)
class PosteriorSummary:
    rows: tuple
    intervals: tuple = (0.20, 0.40)

    def __iter__(self):
        return iter(self.rows)

    def p_od(self) -> np.ndarray:
        return np.array([r.p_od for r in self.rows])


def _suff_stats(data, pk: PKParams, ref: ReferenceScale):
    """Sufficient statistics: (sum of AUC_E at event/censor times, DLT count,
    sum of log E at DLT times)."""
    S = 0.0
    D = 0
    C = 0.0
    for rec in data:
        S += auc_exposure(rec.regimen, pk, ref, rec.time)
        if rec.dlt:
            e = effect_exposure(rec.regimen, pk, ref, rec.time)
            if e <= 0:
                raise ValueError(
                    f"DLT recorded at time {rec.time} with zero exposure"
                )
            D += 1
            C += np.log(e)
    return S, D, C


def log_likelihood(log_beta, data, pk: PKParams, ref: ReferenceScale):
    """Log likelihood of the outcome records at `log_beta` (scalar or array).

    Each DLT contributes log(beta*E(t)) - beta*AUC_E(t); each censored
    record contributes -beta*AUC_E(t).
    """
    S, D, C = _suff_stats(data, pk, ref)
    lb = np.asarray(log_beta, dtype=float)
    out = D * lb + C - np.exp(lb) * S
    return float(out) if lb.ndim == 0 else out


def log_likelihood_grad(log_beta, data, pk: PKParams, ref: ReferenceScale):
    """d/d(log beta) of log_likelihood: D - exp(log_beta) * S."""
    S, D, _ = _suff_stats(data, pk, ref)
    lb = np.asarray(log_beta, dtype=float)
    out = D - np.exp(lb) * S
    return float(out) if lb.ndim == 0 else out


def dlt_probability(log_beta, regimen: DosingRegimen, pk: PKParams, ref: ReferenceScale):
    """End-of-cycle DLT probability 1 - exp(-beta * AUC_E(t*)) at `log_beta`."""
    a = auc_exposure(regimen, pk, ref, regimen.cycle_length)
    lb = np.asarray(log_beta, dtype=float)
    out = -np.expm1(-np.exp(lb) * a)
    return float(out) if lb.ndim == 0 else out


def _log_posterior(data, prior: TitePkPrior, pk: PKParams):
    S, D, C = _suff_stats(data, pk, prior.ref)
    mu, sd = prior.mean, prior.sd

    def lp(points):
        lb = np.asarray(points, dtype=float).reshape(-1)
        return D * lb + C - np.exp(lb) * S - 0.5 * ((lb - mu) / sd) ** 2

    return lp


def fit_posterior(data, prior: TitePkPrior, pk: PKParams,
                  mcmc: MCMCConfig) -> PosteriorSamples:
    """Adaptive random-walk MCMC on log beta.

    Non-convergence (R-hat at or above the failure threshold) is reported on
    the result's `converged` flag rather than raised, so callers can decide
    how to surface it.
    """
    draws = inference.sample(
        _log_posterior(data, prior, pk), dim=1, config=mcmc,
        init=np.array([prior.mean]), init_scale=prior.sd,
    )
    return PosteriorSamples(
        log_beta=draws.samples[:, 0],
        by_chain=draws.by_chain[:, :, 0],
        rhat=float(draws.rhat[0]),
        accept_rate=draws.accept_rate,
        converged=draws.converged,
    )


def quadrature_posterior(data, prior: TitePkPrior, pk: PKParams,
                         grid_config: QuadratureConfig | None = None) -> Quadrature:
    """Deterministic grid posterior over log beta on prior mean +- range_sd*sd.

    The returned grid feeds `summarize` exactly like MCMC output and is the
    reference engine for tests and the live service.
    """
    cfg = grid_config or QuadratureConfig()
    return inference.integrate(
        _log_posterior(data, prior, pk), dim=1, config=cfg,
        center=prior.mean, sd=prior.sd,
    )


def _lb_quantiles(post, qs):
    if isinstance(post, PosteriorSamples):
        return np.quantile(post.log_beta, qs)
    return np.asarray(post.quantile(np.asarray(qs)))


def _lb_mass_above(post, cut):
    if isinstance(post, PosteriorSamples):
        return float(np.mean(post.log_beta > cut))
    return post.mass_above(cut)


def summarize(post, regimens, pk: PKParams, ref: ReferenceScale,
              intervals=(0.20, 0.40)) -> PosteriorSummary:
    """Per-regimen medians, 50%/95% credible intervals and UD/TT/OD masses.

    `post` is either PosteriorSamples or a quadrature grid over log beta.
    The DLT probability is monotone in log beta, so its quantiles are exact
    transforms of log-beta quantiles for both engines.
    """
    lo, hi = intervals
    qs = _lb_quantiles(post, [0.025, 0.25, 0.5, 0.75, 0.975])
    rows = []
    for reg in regimens:
        a = auc_exposure(reg, pk, ref, reg.cycle_length)
        p_q = -np.expm1(-np.exp(qs) * a)
        # p > c  <=>  log beta > cloglog(c) - log AUC_E
        p_od = _lb_mass_above(post, float(cloglog(hi)) - np.log(a))
        p_ud = 1.0 - _lb_mass_above(post, float(cloglog(lo)) - np.log(a))
        rows.append(RegimenSummary(
            regimen=reg,
            median=float(p_q[2]),
            ci50=(float(p_q[1]), float(p_q[3])),
            ci95=(float(p_q[0]), float(p_q[4])),
            p_ud=p_ud,
            p_tt=1.0 - p_ud - p_od,
            p_od=p_od,
        ))
    return PosteriorSummary(rows=tuple(rows), intervals=(lo, hi))
