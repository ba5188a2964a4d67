"""Closed-form pseudo-PK: effect-compartment concentration and exposure AUC
under repeated impulse dosing, normalized against a reference regimen.

The kinetic system is linear (central compartment with first-order
elimination feeding a lagged effect compartment), so multi-dose profiles are
superpositions of single-dose Bateman terms and every quantity here has an
exact closed form.  All times are hours; doses mg/m^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Relative rate gap below which the two-exponential Bateman term is replaced
# by its equal-rate limit to avoid catastrophic cancellation.
EQUAL_RATE_RTOL = 1e-8

# Default cycle length: 21 days.
CYCLE_HOURS = 504.0


@dataclass(frozen=True)
class PKParams:
    """Kinetic constants of the pseudo-PK pair of compartments."""

    t_e: float = 30.0          # elimination half-life, hours
    k_eff: float = float(np.exp(0.37))  # effect-compartment rate, 1/h

    def __post_init__(self):
        if not (self.t_e > 0 and self.k_eff > 0):
            raise ValueError(f"half-life and effect rate must be positive, got {self}")

    @property
    def k_e(self) -> float:
        """Elimination rate constant log(2)/t_e, 1/h."""
        return float(np.log(2.0) / self.t_e)


@dataclass(frozen=True)
class DosingRegimen:
    """Repeated fixed-dose administration: `dose` every `interval` hours."""

    dose: float                  # amount per administration, mg/m^2
    interval: float              # spacing between administrations, hours
    cycle_length: float = CYCLE_HOURS  # observation window t*, hours
    label: str = ""              # schedule identifier, e.g. "daily"

    def __post_init__(self):
        if self.dose <= 0:
            raise ValueError(f"dose must be positive, got {self.dose}")
        if not (0 < self.interval <= self.cycle_length):
            raise ValueError(
                f"interval must lie in (0, cycle_length], got {self.interval}"
            )


@dataclass(frozen=True)
class ReferenceScale:
    """Normalization constant: cycle-1 AUC of C_eff under the reference regimen.

    Dividing raw exposure AUCs by `scale` makes the reference regimen's
    cycle-end exposure area exactly 1.
    """

    ref_regimen: DosingRegimen
    pk: PKParams
    scale: float = field(init=False)

    def __post_init__(self):
        s = auc_effect(self.ref_regimen, self.pk, self.ref_regimen.cycle_length)
        if not s > 0:
            raise ValueError("reference AUC must be positive")
        object.__setattr__(self, "scale", float(s))


def reference_scale(ref_regimen: DosingRegimen, pk: PKParams) -> ReferenceScale:
    """Build the reference normalization for `ref_regimen` under `pk`."""
    return ReferenceScale(ref_regimen, pk)


def dosing_times(regimen: DosingRegimen, horizon: float) -> np.ndarray:
    """Administration times {0, interval, 2*interval, ...} strictly below `horizon`."""
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    n = int(np.ceil(horizon / regimen.interval))
    ts = np.arange(max(n, 1)) * regimen.interval
    return ts[ts < horizon]


def _bateman(dose: float, k_e: float, k_eff: float, s: np.ndarray) -> np.ndarray:
    """Effect-compartment concentration `s` hours after one impulse dose."""
    if abs(k_eff - k_e) < EQUAL_RATE_RTOL * k_e:
        return dose * k_e * s * np.exp(-k_e * s)
    return dose * k_eff / (k_eff - k_e) * (np.exp(-k_e * s) - np.exp(-k_eff * s))


def _bateman_auc(dose: float, k_e: float, k_eff: float, s: np.ndarray) -> np.ndarray:
    """Integral of the Bateman term over [0, s] for one impulse dose."""
    if abs(k_eff - k_e) < EQUAL_RATE_RTOL * k_e:
        return dose * ((1.0 - np.exp(-k_e * s)) / k_e - s * np.exp(-k_e * s))
    return dose * k_eff / (k_eff - k_e) * (
        (1.0 - np.exp(-k_e * s)) / k_e - (1.0 - np.exp(-k_eff * s)) / k_eff
    )


def effect_concentration(regimen: DosingRegimen, pk: PKParams, t):
    """C_eff at time(s) `t` under the regimen, superposing all doses given at tau <= t.

    A dose administered exactly at `t` contributes its (zero) instantaneous
    Bateman value, so C_eff(0) = 0.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be non-negative")
    taus = dosing_times(regimen, float(np.max(t_arr)) + regimen.interval)
    # lag matrix: one row per dose time, clipped so future doses contribute 0
    s = np.clip(t_arr[..., None] - taus, 0.0, None)
    out = _bateman(regimen.dose, pk.k_e, pk.k_eff, s).sum(axis=-1)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def auc_effect(regimen: DosingRegimen, pk: PKParams, t):
    """Exact integral of C_eff over [0, t] by per-dose superposition."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be non-negative")
    taus = dosing_times(regimen, float(np.max(t_arr)) + regimen.interval)
    s = np.clip(t_arr[..., None] - taus, 0.0, None)
    out = _bateman_auc(regimen.dose, pk.k_e, pk.k_eff, s).sum(axis=-1)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def auc_exposure(regimen: DosingRegimen, pk: PKParams, ref: ReferenceScale, t):
    """Dimensionless exposure area AUC_E(t): auc_effect / reference scale.

    Equals 1 at the reference regimen's cycle end by construction.
    """
    if pk != ref.pk:
        raise ValueError(
            "kinetic constants differ between the call and the reference scale; "
            "rebuild the reference with the same PKParams"
        )
    return auc_effect(regimen, pk, t) / ref.scale


def effect_exposure(regimen: DosingRegimen, pk: PKParams, ref: ReferenceScale, t):
    """Scaled effect concentration E(t) = C_eff(t) / reference scale."""
    if pk != ref.pk:
        raise ValueError(
            "kinetic constants differ between the call and the reference scale; "
            "rebuild the reference with the same PKParams"
        )
    return effect_concentration(regimen, pk, t) / ref.scale
