"""Exposure-response dose escalation toolkit.

Pseudo-PK time-to-event dose-toxicity model with comparator designs
(CRM, BLRM, hierarchical two-stratum BLRM), a cohort escalation engine,
an operating-characteristics simulator, a CLI and an HTTP service.
"""

from .pk import (
    PKParams,
    DosingRegimen,
    ReferenceScale,
    dosing_times,
    effect_concentration,
    auc_effect,
    auc_exposure,
    reference_scale,
)
from .model import (
    PatientOutcome,
    TitePkPrior,
    PosteriorSamples,
    PosteriorSummary,
    RegimenSummary,
    log_likelihood,
    log_likelihood_grad,
    dlt_probability,
    fit_posterior,
    quadrature_posterior,
    summarize,
)
from .inference import MCMCConfig, QuadratureConfig, sample, integrate
from .comparators import (
    Skeleton,
    BinaryDoseData,
    BlrmPrior,
    lee_cheung_skeleton,
    crm_fit,
    crm_recommend,
    crm_safety_stop,
    blrm_fit,
    blrm_map_fit,
)
from .trial import EscalationRules, TrialState, recommend, declare_mtd, advance_sequential
from .simulate import Scenario, Metrics, simulate_outcome, replicate, sensitivity_sweep

__version__ = "0.1.0"
