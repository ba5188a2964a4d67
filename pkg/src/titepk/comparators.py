"""Comparator dose-finding models: one-parameter power-model CRM with an
indifference-interval skeleton, two-parameter Bayesian logistic regression
(BLRM), and a two-stratum hierarchical BLRM that borrows strength across
schedules.  Grid quadrature is the default engine everywhere it applies;
MCMC variants exist for cross-validation and for the hierarchical model.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from . import inference
from .inference import MCMCConfig, Quadrature, QuadratureConfig, split_rhat


class CalibrationError(ValueError):
    """Skeleton calibration left (0,1)."""


# ---------------------------------------------------------------------------
# Skeleton and CRM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Skeleton:
    """Prior DLT-probability ladder for the CRM power model."""

    probs: tuple          # strictly increasing, in (0,1)
    theta: float          # target DLT probability
    delta: float          # indifference half-width
    nu: int               # prior MTD position, 1-based; probs[nu-1] == theta
    doses: tuple | None = None  # optional dose panel aligned with probs

    def __post_init__(self):
        p = np.asarray(self.probs)
        if np.any(p <= 0) or np.any(p >= 1) or np.any(np.diff(p) <= 0):
            raise CalibrationError(f"skeleton must be strictly increasing in (0,1): {self.probs}")
        if not 1 <= self.nu <= len(self.probs):
            raise ValueError("nu out of range")
        if self.doses is not None and len(self.doses) != len(self.probs):
            raise ValueError("doses and probs length mismatch")

    def rounded(self, decimals: int = 2) -> "Skeleton":
        """Skeleton with display-rounded probabilities (the published form)."""
        return Skeleton(tuple(float(np.round(p, decimals)) for p in self.probs),
                        self.theta, self.delta, self.nu, self.doses)

    def with_doses(self, doses) -> "Skeleton":
        return Skeleton(self.probs, self.theta, self.delta, self.nu, tuple(doses))


def lee_cheung_skeleton(k: int, theta: float = 0.30, delta: float = 0.10,
                        nu: int = 1) -> Skeleton:
    """Indifference-interval skeleton: anchor position nu at theta, then extend
    outward so each neighbour is the power-model image of the half-width
    bounds (getprior-style calibration).
    """
    if not 1 <= nu <= k:
        raise ValueError(f"nu must lie in 1..{k}")
    if not (0 < theta - delta and theta + delta < 1):
        raise CalibrationError("theta +- delta must stay inside (0,1)")
    p = np.empty(k)
    p[nu - 1] = theta
    for i in range(nu - 1, k - 1):      # upward
        p[i + 1] = np.exp(np.log(theta + delta) * np.log(p[i]) / np.log(theta - delta))
    for i in range(nu - 1, 0, -1):      # downward
        p[i - 1] = np.exp(np.log(theta - delta) * np.log(p[i]) / np.log(theta + delta))
    return Skeleton(tuple(float(x) for x in p), theta, delta, nu)


@dataclass(frozen=True)
class BinaryDoseData:
    """Aggregated binary outcomes: patients treated and DLTs per dose level."""

    doses: tuple
    treated: tuple
    dlts: tuple
    label: str = ""

    def __post_init__(self):
        if not (len(self.doses) == len(self.treated) == len(self.dlts)):
            raise ValueError("doses/treated/dlts length mismatch")
        for n, y in zip(self.treated, self.dlts):
            if not 0 <= y <= n:
                raise ValueError(f"DLT count {y} outside [0, {n}]")


def _crm_loglik_factory(skeleton: Skeleton, data: BinaryDoseData):
    """Vectorized CRM log likelihood over alpha: pi_i = p_i^exp(alpha)."""
    if len(data.doses) and skeleton.doses is None:
        raise ValueError("skeleton carries no dose panel; use with_doses() first")
    pos = []
    for d in data.doses:
        match = [i for i, pd in enumerate(skeleton.doses or ()) if pd == d]
        if not match:
            raise ValueError(f"dose {d} not on the skeleton panel {skeleton.doses}")
        pos.append(match[0])
    lnp = np.log(np.asarray(skeleton.probs))[pos] if pos else np.empty(0)
    n = np.asarray(data.treated, dtype=float)
    y = np.asarray(data.dlts, dtype=float)

    def loglik(alpha):
        a = np.asarray(alpha, dtype=float).reshape(-1)
        if lnp.size == 0:
            return np.zeros(a.shape)
        ea = np.exp(a)[:, None]
        logpi = ea * lnp
        pi = np.exp(logpi)
        log1m = np.log1p(-np.clip(pi, None, 1.0 - 1e-300))
        return np.sum(y * logpi + np.where(n - y > 0, (n - y) * log1m, 0.0), axis=1)

    return loglik


@dataclass(frozen=True)
class CrmPosterior:
    """1-D posterior over the power parameter alpha.

    Every per-dose probability pi_i = p_i^exp(alpha) is a decreasing monotone
    transform of alpha, so medians/quantiles/masses all reduce to alpha-scale
    lookups.
    """

    quad: Quadrature
    skeleton: Skeleton
    prior_sd: float

    def median_probs(self) -> np.ndarray:
        a_med = float(self.quad.quantile(0.5))
        return np.asarray(self.skeleton.probs) ** np.exp(a_med)

    def prob_quantiles(self, qs) -> np.ndarray:
        """(len(qs), K) matrix; row j is the qs[j] quantile of each pi_i."""
        a_q = np.asarray(self.quad.quantile(1.0 - np.asarray(qs, dtype=float)))
        return np.asarray(self.skeleton.probs)[None, :] ** np.exp(a_q)[:, None]

    def p_above(self, dose_index: int, cut: float) -> float:
        """P(pi_i > cut)."""
        lnp = np.log(self.skeleton.probs[dose_index])
        # pi > cut  <=>  exp(alpha)*ln p > ln cut  <=>  alpha < log(ln cut / ln p)
        return self.quad.cdf(float(np.log(np.log(cut) / lnp)))

    def summary(self, intervals=(0.20, 0.40)) -> "DosePosteriorSummary":
        lo, hi = intervals
        q = self.prob_quantiles([0.025, 0.25, 0.5, 0.75, 0.975])
        rows = []
        for i, p in enumerate(self.skeleton.probs):
            p_od = self.p_above(i, hi)
            p_ud = 1.0 - self.p_above(i, lo)
            rows.append(DoseSummary(
                dose=float(self.skeleton.doses[i]) if self.skeleton.doses else float(i + 1),
                median=float(q[2, i]), ci50=(float(q[1, i]), float(q[3, i])),
                ci95=(float(q[0, i]), float(q[4, i])),
                p_ud=p_ud, p_tt=1.0 - p_ud - p_od, p_od=p_od,
            ))
        return DosePosteriorSummary(rows=tuple(rows), intervals=(lo, hi))


@dataclass(frozen=True)
class CrmSamples:
    """MCMC counterpart of CrmPosterior (same read API), for cross-checks."""

    alpha: np.ndarray
    skeleton: Skeleton
    rhat: float
    converged: bool

    def median_probs(self) -> np.ndarray:
        return np.asarray(self.skeleton.probs) ** np.exp(np.median(self.alpha))

    def p_above(self, dose_index: int, cut: float) -> float:
        lnp = np.log(self.skeleton.probs[dose_index])
        return float(np.mean(self.alpha < np.log(np.log(cut) / lnp)))


def crm_fit(skeleton: Skeleton, data: BinaryDoseData, prior_sd: float = 2.0,
            engine: str = "grid", config: QuadratureConfig | None = None,
            mcmc: MCMCConfig | None = None):
    """Posterior for the CRM power model with alpha ~ N(0, prior_sd^2).

    The deterministic grid engine is the default; `engine="mcmc"` runs the
    random-walk sampler instead (requires `mcmc`).
    """
    loglik = _crm_loglik_factory(skeleton, data)

    def logpost(points):
        a = np.asarray(points, dtype=float).reshape(-1)
        return loglik(a) - 0.5 * (a / prior_sd) ** 2

    if engine == "grid":
        quad = inference.integrate(logpost, dim=1, config=config or QuadratureConfig(),
                                   center=0.0, sd=prior_sd)
        return CrmPosterior(quad=quad, skeleton=skeleton, prior_sd=prior_sd)
    if engine == "mcmc":
        if mcmc is None:
            raise ValueError("mcmc engine requires an MCMCConfig")
        draws = inference.sample(logpost, dim=1, config=mcmc,
                                 init=np.zeros(1), init_scale=prior_sd)
        return CrmSamples(alpha=draws.samples[:, 0], skeleton=skeleton,
                          rhat=float(draws.rhat[0]), converged=draws.converged)
    raise ValueError(f"unknown engine {engine!r}")


def crm_recommend(probs, theta: float, current: int | None = None) -> int:
    """Dose with median DLT probability closest to target; ties go lower.

    With `current` given (0-based), escalation is capped at current+1
    (no dose skipping).
    """
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0:
        raise ValueError("empty dose panel")
    idx = int(np.argmin(np.abs(probs - theta)))  # argmin takes the first = lower dose
    if current is not None:
        idx = min(idx, current + 1)
    return idx


def crm_safety_stop(fit, threshold: float = 0.30, confidence: float = 0.90) -> bool:
    """Stop the trial when P(pi_1 > threshold) exceeds `confidence`."""
    return fit.p_above(0, threshold) > confidence


def bridging_skeleton(skeleton: Skeleton, historical: BinaryDoseData,
                      hist_interval: float, current_interval: float,
                      current_doses, prior_sd: float = 2.0) -> Skeleton:
    """Single bridging skeleton for a new schedule, refit from the completed
    schedule's posterior medians.

    The completed schedule gets its own indifference-interval skeleton and a
    power-model fit; its posterior-median curve is then read off at each new
    dose's equal-total-dose equivalent (dose x old_interval / new_interval),
    interpolating logit(median) linearly in log dose.  The clipped, monotone
    result becomes the new schedule's skeleton.
    """
    hist_doses = tuple(sorted(set(historical.doses)))
    hist_skel = lee_cheung_skeleton(len(hist_doses), skeleton.theta,
                                    skeleton.delta,
                                    nu=(len(hist_doses) + 1) // 2)
    hist_fit = crm_fit(hist_skel.with_doses(hist_doses), historical,
                       prior_sd=prior_sd)
    med = np.clip(hist_fit.median_probs(), 1e-4, 1 - 1e-4)
    logit = np.log(med / (1 - med))
    equiv = np.asarray(current_doses, dtype=float) * hist_interval / current_interval
    bridged = np.interp(np.log(equiv), np.log(hist_doses), logit)
    if len(hist_doses) > 1:  # linear extrapolation beyond the fitted panel
        slope_lo = (logit[1] - logit[0]) / (np.log(hist_doses[1]) - np.log(hist_doses[0]))
        slope_hi = (logit[-1] - logit[-2]) / (np.log(hist_doses[-1]) - np.log(hist_doses[-2]))
        below = np.log(equiv) < np.log(hist_doses[0])
        above = np.log(equiv) > np.log(hist_doses[-1])
        bridged[below] = logit[0] + slope_lo * (np.log(equiv[below]) - np.log(hist_doses[0]))
        bridged[above] = logit[-1] + slope_hi * (np.log(equiv[above]) - np.log(hist_doses[-1]))
    probs = np.maximum.accumulate(np.clip(1 / (1 + np.exp(-bridged)), 0.01, 0.99))
    probs = tuple(float(p) for p in probs)
    if len(set(probs)) < len(probs):
        warnings.warn("bridging skeleton has tied levels after clipping",
                      stacklevel=2)
    return Skeleton(probs, skeleton.theta, skeleton.delta, skeleton.nu,
                    tuple(float(d) for d in current_doses))


def crm_bridge_lite(skeleton: Skeleton, historical: BinaryDoseData,
                    current: BinaryDoseData, hist_interval: float,
                    current_interval: float, prior_sd: float = 2.0):
    """Two-schedule CRM shortcut: one bridging skeleton is refit from the
    completed schedule's posterior medians, then the new schedule's data are
    fit against it.

    This is a sanity-check device only — it is NOT the published bridging
    design (no multiple candidate skeletons, no model averaging).
    """
    if not skeleton.doses:
        raise ValueError("skeleton needs dose labels (use with_doses)")
    bridged = bridging_skeleton(skeleton, historical, hist_interval,
                                current_interval, skeleton.doses, prior_sd)
    return crm_fit(bridged, current, prior_sd=prior_sd)


# ---------------------------------------------------------------------------
# BLRM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlrmPrior:
    """Bivariate normal prior on (log alpha1, log alpha2)."""

    m1: float = float(logit(0.30))
    m2: float = 0.0
    s1: float = 1.25
    s2: float = 1.0
    rho: float = 0.0
    d_ref: float | None = None   # reference dose anchoring log alpha1

    def __post_init__(self):
        if self.s1 <= 0 or self.s2 <= 0:
            raise ValueError("prior sds must be positive")
        if not -1 < self.rho < 1:
            raise ValueError("|rho| must be < 1")


@dataclass(frozen=True)
class DoseSummary:
    """Posterior DLT-probability summary at one dose."""

    dose: float
    median: float
    ci50: tuple
    ci95: tuple
    p_ud: float
    p_tt: float
    p_od: float


@dataclass(frozen=True)
class DosePosteriorSummary:
    rows: tuple
    intervals: tuple = (0.20, 0.40)

    def __iter__(self):
        return iter(self.rows)

    def p_od(self) -> np.ndarray:
        return np.array([r.p_od for r in self.rows])

    def medians(self) -> np.ndarray:
        return np.array([r.median for r in self.rows])


def _wquantile(vals: np.ndarray, weights: np.ndarray, qs) -> np.ndarray:
    order = np.argsort(vals)
    c = np.cumsum(weights[order])
    return np.interp(np.asarray(qs, dtype=float) * c[-1], c, vals[order])


@dataclass(frozen=True)
class BlrmPosterior:
    """2-D grid posterior over (log alpha1, log alpha2)."""

    quad: Quadrature
    doses: tuple
    d_ref: float

    def _pi(self, dose: float) -> np.ndarray:
        g1, g2 = self.quad.nodes
        return expit(g1 + np.exp(g2) * np.log(dose / self.d_ref))

    def p_od_vector(self, cut: float = 0.40) -> np.ndarray:
        w = self.quad.weights
        return np.array([float(w[self._pi(d) > cut].sum()) for d in self.doses])

    def summary(self, intervals=(0.20, 0.40)) -> DosePosteriorSummary:
        lo, hi = intervals
        w = self.quad.weights.ravel()
        rows = []
        for d in self.doses:
            pi = self._pi(d).ravel()
            q = _wquantile(pi, w, [0.025, 0.25, 0.5, 0.75, 0.975])
            p_od = float(w[pi > hi].sum())
            p_ud = float(w[pi < lo].sum())
            rows.append(DoseSummary(
                dose=float(d), median=float(q[2]),
                ci50=(float(q[1]), float(q[3])), ci95=(float(q[0]), float(q[4])),
                p_ud=p_ud, p_tt=1.0 - p_ud - p_od, p_od=p_od,
            ))
        return DosePosteriorSummary(rows=tuple(rows), intervals=(lo, hi))


@dataclass(frozen=True)
class BlrmSamples:
    """MCMC counterpart of BlrmPosterior."""

    draws: np.ndarray        # (n, 2) of (log alpha1, log alpha2)
    doses: tuple
    d_ref: float
    rhat: np.ndarray
    converged: bool

    def _pi(self, dose: float) -> np.ndarray:
        return expit(self.draws[:, 0] + np.exp(self.draws[:, 1]) * np.log(dose / self.d_ref))

    def p_od_vector(self, cut: float = 0.40) -> np.ndarray:
        return np.array([float(np.mean(self._pi(d) > cut)) for d in self.doses])

    def summary(self, intervals=(0.20, 0.40)) -> DosePosteriorSummary:
        lo, hi = intervals
        rows = []
        for d in self.doses:
            pi = self._pi(d)
            q = np.quantile(pi, [0.025, 0.25, 0.5, 0.75, 0.975])
            p_od = float(np.mean(pi > hi))
            p_ud = float(np.mean(pi < lo))
            rows.append(DoseSummary(
                dose=float(d), median=float(q[2]),
                ci50=(float(q[1]), float(q[3])), ci95=(float(q[0]), float(q[4])),
                p_ud=p_ud, p_tt=1.0 - p_ud - p_od, p_od=p_od,
            ))
        return DosePosteriorSummary(rows=tuple(rows), intervals=(lo, hi))


def _blrm_loglik_factory(data: BinaryDoseData, d_ref: float):
    lr = np.log(np.asarray(data.doses, dtype=float) / d_ref) if data.doses else np.empty(0)
    n = np.asarray(data.treated, dtype=float)
    y = np.asarray(data.dlts, dtype=float)

    def loglik(points):
        th = np.asarray(points, dtype=float).reshape(-1, 2)
        if lr.size == 0:
            return np.zeros(th.shape[0])
        eta = th[:, :1] + np.exp(th[:, 1:2]) * lr
        return np.sum(y * (-np.logaddexp(0, -eta)) + (n - y) * (-np.logaddexp(0, eta)),
                      axis=1)

    return loglik


def blrm_fit(doses, d_ref: float | None, data: BinaryDoseData, prior: BlrmPrior,
             engine: str = "grid", config: QuadratureConfig | None = None,
             mcmc: MCMCConfig | None = None):
    """Two-parameter logistic posterior: logit pi(d) = la1 + exp(la2) log(d/d_ref).

    `d_ref` falls back to `prior.d_ref`.  The 2-D grid engine (default) is
    deterministic; `engine="mcmc"` uses the random-walk sampler.
    """
    if d_ref is None:
        d_ref = prior.d_ref
    if d_ref is None:
        raise ValueError("a reference dose is required (argument or prior.d_ref)")
    if np.any(np.asarray(doses) <= 0):
        raise ValueError("doses must be positive")
    loglik = _blrm_loglik_factory(data, d_ref)
    det = 1.0 - prior.rho**2

    def logpost(points):
        th = np.asarray(points, dtype=float).reshape(-1, 2)
        z1 = (th[:, 0] - prior.m1) / prior.s1
        z2 = (th[:, 1] - prior.m2) / prior.s2
        logpri = -0.5 * (z1**2 - 2 * prior.rho * z1 * z2 + z2**2) / det
        return logpri + loglik(th)

    if engine == "grid":
        cfg = config or QuadratureConfig(node_budget=401 * 401)
        quad = inference.integrate(logpost, dim=2, config=cfg,
                                   center=(prior.m1, prior.m2), sd=(prior.s1, prior.s2))
        return BlrmPosterior(quad=quad, doses=tuple(doses), d_ref=float(d_ref))
    if engine == "mcmc":
        if mcmc is None:
            raise ValueError("mcmc engine requires an MCMCConfig")
        draws = inference.sample(logpost, dim=2, config=mcmc,
                                 init=np.array([prior.m1, prior.m2]),
                                 init_scale=np.array([prior.s1, prior.s2]))
        if not draws.converged:
            warnings.warn("logistic-model MCMC did not converge", stacklevel=2)
        return BlrmSamples(draws=draws.samples, doses=tuple(doses), d_ref=float(d_ref),
                           rhat=draws.rhat, converged=draws.converged)
    raise ValueError(f"unknown engine {engine!r}")


# ---------------------------------------------------------------------------
# Hierarchical two-stratum BLRM (historical borrowing)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MapHyper:
    """Hierarchy settings for two-stratum borrowing.

    Stratum-level (log alpha1, log alpha2) are exchangeable around population
    means with half-normal heterogeneity scales `tau_scales`.  Each stratum
    anchors its own reference dose (`ref_doses` = historical, current).
    """

    ref_doses: tuple
    mu_mean: tuple = (float(logit(0.30)), 0.0)
    mu_sd: tuple = (1.25, 1.0)
    tau_scales: tuple = (0.5, 0.25)

    def __post_init__(self):
        if min(self.tau_scales) <= 0 or min(self.mu_sd) <= 0:
            raise ValueError("scales must be positive")
        if min(self.ref_doses) <= 0:
            raise ValueError("reference doses must be positive")


def map_batched_logpost(lr1, lr2, hyper: MapHyper):
    """Joint 8-parameter log posterior for the two-stratum hierarchy, batched.

    Parameter order: (mu1, mu2, log tau1, log tau2,
    la1_hist, la2_hist, la1_cur, la2_cur).  Heterogeneity is parametrized on
    log tau with the half-normal prior's Jacobian included, keeping the
    random-walk sampler unconstrained.  The returned callable takes the state
    matrix plus per-row (or shared) count arrays, so many independent
    datasets evaluate in one vectorized call.
    """
    m1, m2 = hyper.mu_mean
    s1, s2 = hyper.mu_sd
    t1, t2 = hyper.tau_scales
    lr1 = np.asarray(lr1, dtype=float)
    lr2 = np.asarray(lr2, dtype=float)

    def logpost(points, n1, y1, n2, y2):
        th = np.asarray(points, dtype=float).reshape(-1, 8)
        mu1, mu2, u1, u2 = th[:, 0], th[:, 1], th[:, 2], th[:, 3]
        tau1, tau2 = np.exp(u1), np.exp(u2)
        lp = -0.5 * ((mu1 - m1) / s1) ** 2 - 0.5 * ((mu2 - m2) / s2) ** 2
        lp = lp - 0.5 * (tau1 / t1) ** 2 + u1 - 0.5 * (tau2 / t2) ** 2 + u2
        for lr, n, y, (c1, c2) in ((lr1, n1, y1, (4, 5)), (lr2, n2, y2, (6, 7))):
            a, b = th[:, c1], th[:, c2]
            lp = lp - 0.5 * ((a - mu1) / tau1) ** 2 - u1 \
                    - 0.5 * ((b - mu2) / tau2) ** 2 - u2
            if lr.size:
                eta = a[:, None] + np.exp(b)[:, None] * lr
                lp = lp + np.sum(y * (-np.logaddexp(0, -eta))
                                 + (n - y) * (-np.logaddexp(0, eta)), axis=1)
        return lp

    init = np.array([m1, m2, np.log(0.2), np.log(0.1), m1, m2, m1, m2])
    return logpost, init


def map_log_posterior(hist: BinaryDoseData, cur: BinaryDoseData, hyper: MapHyper):
    """Single-dataset view of `map_batched_logpost`: closes over the two
    strata's counts and exposes the plain `logpost(points)` signature."""
    arrays = []
    lrs = []
    for data, d_ref in ((hist, hyper.ref_doses[0]), (cur, hyper.ref_doses[1])):
        lrs.append(np.log(np.asarray(data.doses, dtype=float) / d_ref)
                   if data.doses else np.empty(0))
        arrays.append((np.asarray(data.treated, dtype=float),
                       np.asarray(data.dlts, dtype=float)))
    core, init = map_batched_logpost(lrs[0], lrs[1], hyper)
    (n1, y1), (n2, y2) = arrays

    def logpost(points):
        return core(points, n1, y1, n2, y2)

    return logpost, init


def map_noncentered_logpost(hist: BinaryDoseData, cur: BinaryDoseData,
                            hyper: MapHyper):
    """Non-centered coordinates for the same hierarchy: the per-stratum
    coefficients become standard-normal offsets, la = mu + tau * z.

    This removes the funnel coupling between tau and the stratum
    coefficients, which the random-walk sampler traverses poorly in the
    centered form with only a handful of data cells.  Returns
    (logpost(points), init, to_stratum) where to_stratum maps raw states to
    per-stratum (la1, la2) columns: stratum 0 = historical, 1 = current.
    """
    m1, m2 = hyper.mu_mean
    s1, s2 = hyper.mu_sd
    t1, t2 = hyper.tau_scales
    sets = []
    for data, d_ref, cols in ((hist, hyper.ref_doses[0], (4, 5)),
                              (cur, hyper.ref_doses[1], (6, 7))):
        lr = (np.log(np.asarray(data.doses, dtype=float) / d_ref)
              if data.doses else np.empty(0))
        sets.append((lr, np.asarray(data.treated, dtype=float),
                     np.asarray(data.dlts, dtype=float), cols))

    def logpost(points):
        th = np.asarray(points, dtype=float).reshape(-1, 8)
        mu1, mu2, u1, u2 = th[:, 0], th[:, 1], th[:, 2], th[:, 3]
        tau1, tau2 = np.exp(u1), np.exp(u2)
        lp = -0.5 * ((mu1 - m1) / s1) ** 2 - 0.5 * ((mu2 - m2) / s2) ** 2
        lp = lp - 0.5 * (tau1 / t1) ** 2 + u1 - 0.5 * (tau2 / t2) ** 2 + u2
        for lr, n, y, (c1, c2) in sets:
            z1, z2 = th[:, c1], th[:, c2]
            lp = lp - 0.5 * z1**2 - 0.5 * z2**2
            if lr.size:
                a = mu1 + tau1 * z1
                b = mu2 + tau2 * z2
                eta = a[:, None] + np.exp(b)[:, None] * lr
                lp = lp + np.sum(y * (-np.logaddexp(0, -eta))
                                 + (n - y) * (-np.logaddexp(0, eta)), axis=1)
        return lp

    def to_stratum(th, stratum):
        th = np.asarray(th, dtype=float).reshape(-1, 8)
        c1, c2 = (4, 5) if stratum == 0 else (6, 7)
        a = th[:, 0] + np.exp(th[:, 2]) * th[:, c1]
        b = th[:, 1] + np.exp(th[:, 3]) * th[:, c2]
        return np.column_stack([a, b])

    init = np.array([m1, m2, np.log(0.2), np.log(0.1), 0.0, 0.0, 0.0, 0.0])
    return logpost, init, to_stratum


def batched_map_rwm(logpost, init: np.ndarray, rng, trials: int = 1, chains: int = 8,
                    warmup: int = 800, keep: int = 1500, target: float = 0.25,
                    store: bool = False):
    """Preconditioned random-walk Metropolis on the 8-D hierarchy, vectorized
    over `trials` independent problems sharing one `logpost` batch call.

    Warmup phases: step tuning (3/8), preconditioner collection (3/8) setting
    a per-trial diagonal scale, then a retune (2/8).  Returns the kept draws
    as (keep, trials*chains, 8) when `store`, else a draw-consumer generator
    is not used — callers accumulate via the returned draws.
    """
    dim = init.shape[-1]
    W = trials * chains
    w1 = warmup * 3 // 8
    w2 = warmup * 3 // 8
    w3 = warmup - w1 - w2
    th = np.broadcast_to(init, (W, dim)).copy()
    th += 0.1 * rng.standard_normal((W, dim))
    lp = logpost(th)
    step = np.full((W, 1), 0.25)
    scale = np.ones((W, dim))

    def sweep(n_iter, adapt, buf=None):
        nonlocal th, lp, step
        for _ in range(n_iter):
            prop = th + step * scale * rng.standard_normal((W, dim))
            lpp = logpost(prop)
            acc = np.log(rng.random(W)) < lpp - lp
            th[acc] = prop[acc]
            lp[acc] = lpp[acc]
            if adapt:
                ar = acc.reshape(trials, chains).mean(axis=1)
                step *= np.exp((ar - target) * 0.1).repeat(chains)[:, None]
            if buf is not None:
                buf.append(th.copy())

    sweep(w1, adapt=True)
    collected = []
    sweep(w2, adapt=False, buf=collected)
    B = np.stack(collected, axis=0).reshape(w2, trials, chains, dim)
    sd = B.transpose(1, 0, 2, 3).reshape(trials, w2 * chains, dim).std(axis=1) + 1e-3
    scale = np.repeat(sd / sd.mean(axis=1, keepdims=True), chains, axis=0)
    sweep(w3, adapt=True)
    out = []
    sweep(keep, adapt=False, buf=out)
    return np.stack(out, axis=0)  # (keep, W, dim)


@dataclass(frozen=True)
class MapResult:
    """Current-stratum posterior from the two-stratum hierarchical fit."""

    rows: tuple
    intervals: tuple
    draws: np.ndarray        # (n, 2): current-stratum (log alpha1, log alpha2)
    rhat: np.ndarray         # per-parameter split R-hat over the 8-D state
    converged: bool
    doses: tuple
    d_ref: float

    def __iter__(self):
        return iter(self.rows)

    def p_od(self) -> np.ndarray:
        return np.array([r.p_od for r in self.rows])

    def medians(self) -> np.ndarray:
        return np.array([r.median for r in self.rows])

    def pi_samples(self, dose: float) -> np.ndarray:
        return expit(self.draws[:, 0] + np.exp(self.draws[:, 1]) * np.log(dose / self.d_ref))


def blrm_map_fit(historical: BinaryDoseData | None, current: BinaryDoseData,
                 hyper: MapHyper, mcmc: MCMCConfig,
                 doses=None, intervals=(0.20, 0.40)) -> MapResult:
    """Hierarchical two-stratum logistic fit; returns current-stratum summaries.

    The joint model is fit directly (population means + per-stratum
    coefficients), which is distributionally the same as deriving a
    historical predictive prior first and updating it with current data.
    With no historical stratum the call degrades to a plain logistic fit
    with a warning.
    """
    if doses is None:
        doses = current.doses
    if historical is None or not historical.doses:
        warnings.warn("no historical stratum; falling back to the single-stratum "
                      "logistic model", stacklevel=2)
        prior = BlrmPrior(m1=hyper.mu_mean[0], m2=hyper.mu_mean[1],
                          s1=hyper.mu_sd[0], s2=hyper.mu_sd[1])
        post = blrm_fit(doses, hyper.ref_doses[1], current, prior)
        s = post.summary(intervals)
        # grid posterior has no draws; sample the grid for a uniform interface
        rng = np.random.default_rng(mcmc.seed)
        flat = post.quad.weights.ravel()
        idx = rng.choice(flat.size, size=4000, p=flat / flat.sum())
        g1, g2 = post.quad.nodes
        draws = np.column_stack([g1.ravel()[idx], g2.ravel()[idx]])
        return MapResult(rows=s.rows, intervals=s.intervals, draws=draws,
                         rhat=np.full(8, np.nan), converged=True,
                         doses=tuple(doses), d_ref=float(hyper.ref_doses[1]))

    logpost, init, to_stratum = map_noncentered_logpost(historical, current, hyper)
    rng = np.random.default_rng(np.random.SeedSequence([mcmc.seed, 0x8a9]))
    kept = batched_map_rwm(logpost, init, rng, trials=1, chains=mcmc.chains,
                           warmup=mcmc.warmup, keep=mcmc.samples,
                           target=mcmc.target_accept)
    # kept: (keep, chains, 8)
    rhat = np.array([split_rhat(kept[:, :, d].T) for d in range(8)])
    converged = bool(np.all(rhat[np.isfinite(rhat)] < inference.RHAT_FAIL))
    if not converged:
        warnings.warn(f"hierarchical fit R-hat up to {np.nanmax(rhat):.3f}", stacklevel=2)
    draws = to_stratum(kept.reshape(-1, 8), 1)
    lo, hi = intervals
    rows = []
    d_ref = float(hyper.ref_doses[1])
    for d in doses:
        pi = expit(draws[:, 0] + np.exp(draws[:, 1]) * np.log(d / d_ref))
        q = np.quantile(pi, [0.025, 0.25, 0.5, 0.75, 0.975])
        p_od = float(np.mean(pi > hi))
        p_ud = float(np.mean(pi < lo))
        rows.append(DoseSummary(dose=float(d), median=float(q[2]),
                                ci50=(float(q[1]), float(q[3])),
                                ci95=(float(q[0]), float(q[4])),
                                p_ud=p_ud, p_tt=1.0 - p_ud - p_od, p_od=p_od))
    return MapResult(rows=tuple(rows), intervals=(lo, hi), draws=draws, rhat=rhat,
                     converged=converged, doses=tuple(doses), d_ref=d_ref)
