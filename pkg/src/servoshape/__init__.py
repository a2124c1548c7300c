"""servoshape: loop shaping for resonant two-mass servo drives.

Identify the mechanism from torque/velocity records, design a notch filter
and PI speed controller directly from desired amplitude and phase margins,
and evaluate the result against conventional tuning rules in simulation.
"""

from .analysis import MarginReport, StepMetrics, compose_loop, margins, sensitivity, step_metrics
from .errors import (
    ConfigError,
    DivergenceError,
    FrequencyRangeError,
    GridError,
    InfeasibleMarginError,
    InsufficientDataError,
    InvalidInputError,
    NoCrossoverError,
    NonConvergenceError,
    NoOscillationError,
    NotchDesignError,
    PhaseInfeasibleError,
    SamplingError,
    ServoShapeError,
)
from .notch import NotchBiquad, NotchParams, design_notch, filter_apply, notch_response, realize
from .pitune import (
    MarginSpec,
    PiGains,
    TuneResult,
    pi_response,
    pm_from_damping,
    relay_experiment,
    relay_tune,
    tune_pi,
)
from .plant import (
    DEFAULT_SAMPLE_PERIOD,
    ExcitationSpec,
    SimTrace,
    TwoMassParams,
    analytic_frf,
    sampled_frf,
    simulate,
    simulate_closed_loop,
)
from .sysid import (
    BodeFeatures,
    FrequencyResponse,
    coherence_mask,
    compensate_hold_delay,
    estimate_frf,
    extract_features,
    read_at,
)

__version__ = "0.1.0"

__all__ = [
    "BodeFeatures",
    "ConfigError",
    "DEFAULT_SAMPLE_PERIOD",
    "DivergenceError",
    "ExcitationSpec",
    "FrequencyRangeError",
    "FrequencyResponse",
    "GridError",
    "InfeasibleMarginError",
    "InsufficientDataError",
    "InvalidInputError",
    "MarginReport",
    "MarginSpec",
    "NoCrossoverError",
    "NonConvergenceError",
    "NoOscillationError",
    "NotchBiquad",
    "NotchDesignError",
    "NotchParams",
    "PhaseInfeasibleError",
    "PiGains",
    "SamplingError",
    "ServoShapeError",
    "SimTrace",
    "StepMetrics",
    "TuneResult",
    "TwoMassParams",
    "analytic_frf",
    "coherence_mask",
    "compensate_hold_delay",
    "compose_loop",
    "design_notch",
    "estimate_frf",
    "extract_features",
    "filter_apply",
    "margins",
    "notch_response",
    "pi_response",
    "pm_from_damping",
    "read_at",
    "realize",
    "relay_experiment",
    "relay_tune",
    "sampled_frf",
    "sensitivity",
    "simulate",
    "simulate_closed_loop",
    "step_metrics",
    "tune_pi",
]
