"""Margin-based PI synthesis for notch-filtered resonant velocity loops.

The tuner works entirely on a measured (or composed) Bode diagram of the
loop from notch input to motor velocity:

1. read the signed magnitude at the -180 deg phase crossing,
2. place the intended gain crossover ``f_c`` where the magnitude equals
   that reading plus the desired amplitude margin,
3. read the phase there,
4. solve the integral time so the PI's residual phase lag at ``f_c`` leaves
   exactly the desired phase margin, and the proportional gain so the loop
   magnitude at ``f_c`` becomes 0 dB,
5. verify the achieved margins on the composed loop and, if they miss,
   repeat with a small offset added to the requested phase margin.

A relay-feedback tuner is included as the conventional baseline: it drives
the mechanism with a hysteretic bang-bang torque, measures the resulting
limit cycle, and applies the classic ultimate-gain PI rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import plant as plant_mod
from .analysis import MarginReport, compose_loop, margins
from .errors import (
    InfeasibleMarginError,
    InvalidInputError,
    NoCrossoverError,
    NonConvergenceError,
    NoOscillationError,
    PhaseInfeasibleError,
)
from .sysid import FrequencyResponse, extract_features, _log_interp

__all__ = [
    "PiGains",
    "MarginSpec",
    "TuneResult",
    "pm_from_damping",
    "pi_response",
    "tune_pi",
    "relay_tune",
    "relay_experiment",
]

#: Verification tolerances for the tuning iteration.
PM_TOLERANCE_DEG = 1.0
AM_TOLERANCE_DB = 0.5
#: Offset added to the requested phase margin per retry.
DEFAULT_OFFSET_STEP_DEG = 3.0
#: Bounds on the small-PI-influence assumption checked at the phase crossover.
_PI_RESIDUAL_MAG_DB = 1.0
_PI_RESIDUAL_PHASE_DEG = 5.0


@dataclass(frozen=True)
class PiGains:
    """Proportional gain (N*m*s/rad) and integral time (s) of the speed PI."""

    kp: float
    ti: float

    def __post_init__(self):
        if self.kp <= 0.0:
            raise InvalidInputError("kp must be strictly positive")
        if self.ti <= 0.0:
            raise InvalidInputError("ti must be strictly positive")


@dataclass(frozen=True)
class MarginSpec:
    """Margin targets for the synthesis.

    Exactly one of ``desired_phase_margin_deg`` and ``damping_ratio`` must
    be given; a damping ratio is converted with :func:`pm_from_damping`.
    ``phase_offset_deg`` is the initial offset applied to the requested
    phase margin (normally 0; the verification loop grows it as needed).
    """

    desired_amplitude_margin_db: float
    desired_phase_margin_deg: float | None = None
    damping_ratio: float | None = None
    phase_offset_deg: float = 0.0
    max_iterations: int = 5

    def __post_init__(self):
        if self.desired_amplitude_margin_db <= 0.0:
            raise InvalidInputError("desired_amplitude_margin_db must be positive")
        if (self.desired_phase_margin_deg is None) == (self.damping_ratio is None):
            raise InvalidInputError(
                "exactly one of desired_phase_margin_deg and damping_ratio must be set")
        if self.desired_phase_margin_deg is not None:
            if not 0.0 < self.desired_phase_margin_deg < 90.0:
                raise InvalidInputError("desired_phase_margin_deg must lie in (0, 90)")
        if self.damping_ratio is not None:
            if not 0.0 < self.damping_ratio <= 1.0:
                raise InvalidInputError("damping_ratio must lie in (0, 1]")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be at least 1")

    def phase_margin_target_deg(self) -> float:
        if self.desired_phase_margin_deg is not None:
            return self.desired_phase_margin_deg
        return pm_from_damping(self.damping_ratio)


@dataclass(frozen=True)
class TuneResult:
    """Outcome of one synthesis: gains, reads, and achieved margins."""

    gains: PiGains
    notch: object
    crossover_frequency: float
    read_magnitude_db: float
    read_phase_deg: float
    achieved: MarginReport
    iterations_used: int
    requested_phase_margin_deg: float = float("nan")


def pm_from_damping(zeta: float) -> float:
    """Desired phase margin (deg) for a second-order damping ratio.

    Uses the exact second-order relation
    ``atan(2 zeta / sqrt(sqrt(1 + 4 zeta^4) - 2 zeta^2))``.
    """
    if not 0.0 < zeta <= 2.0:
        raise InvalidInputError("zeta must lie in (0, 2]")
    inner = math.sqrt(math.sqrt(1.0 + 4.0 * zeta ** 4) - 2.0 * zeta ** 2)
    return math.degrees(math.atan(2.0 * zeta / inner))


def pi_response(gains: PiGains, frequencies) -> FrequencyResponse:
    """Frequency response ``Kp (j w Ti + 1) / (j w Ti)`` of the PI."""
    f = np.asarray(frequencies, dtype=float)
    if np.any(f <= 0.0):
        raise InvalidInputError("frequencies must be strictly positive")
    s = 2j * np.pi * f
    resp = gains.kp * (gains.ti * s + 1.0) / (gains.ti * s)
    return FrequencyResponse(f, resp, np.ones_like(f))


def _pi_extra_magnitude_db(f: float, ti: float) -> float:
    """dB magnitude of the PI factor beyond Kp at one frequency."""
    x = 2.0 * math.pi * f * ti
    return 20.0 * math.log10(math.hypot(x, 1.0) / x)


def _pi_phase_deg(f: float, ti: float) -> float:
    return math.degrees(math.atan(2.0 * math.pi * f * ti)) - 90.0


def _highest_crossing_below(frf: FrequencyResponse, level: float, f_max: float,
                            coherence_threshold: float):
    """Highest-frequency interpolated magnitude crossing of ``level`` below f_max."""
    f = frf.frequencies
    mag = frf.magnitude_db
    band = frf.coherence >= coherence_threshold
    v = mag - level
    ok = band[:-1] & band[1:] & (f[1:] <= f_max)
    sign_change = (v[:-1] * v[1:] <= 0.0) & (v[:-1] != v[1:]) & ok
    idx = np.where(sign_change)[0]
    if len(idx) == 0:
        return None
    i = idx[-1]
    t = v[i] / (v[i] - v[i + 1])
    return float(np.exp(np.log(f[i]) + t * (np.log(f[i + 1]) - np.log(f[i]))))


def tune_pi(loop_frf: FrequencyResponse, spec: MarginSpec, notch=None,
            coherence_threshold: float = 0.95,
            pm_tolerance_deg: float = PM_TOLERANCE_DEG,
            am_tolerance_db: float = AM_TOLERANCE_DB,
            offset_step_deg: float = DEFAULT_OFFSET_STEP_DEG) -> TuneResult:
    """Synthesize PI gains from the notch-included loop Bode diagram.

    Parameters
    ----------
    loop_frf : FrequencyResponse
        Response from notch input to motor velocity (notch and any drive
        latency included); its phase must cross -180 deg in the coherent
        band.
    spec : MarginSpec
        Amplitude/phase margin targets and the iteration budget.
    notch : NotchParams, optional
        Passed through into the result for reporting.

    Raises
    ------
    NoCrossoverError
        No -180 deg crossing: the placement method does not apply.
    InfeasibleMarginError
        No frequency below the crossing matches the required magnitude.
    PhaseInfeasibleError
        The phase read at the placement frequency admits no positive
        integral time for the requested phase margin.
    NonConvergenceError
        The verification loop missed its tolerances within the iteration
        budget; the error carries the best attempt.
    """
    features = extract_features(loop_frf, coherence_threshold)
    pm_target = spec.phase_margin_target_deg()
    am_target = spec.desired_amplitude_margin_db
    level = features.initial_margin_reading_db + am_target

    requested_pm = pm_target + spec.phase_offset_deg
    best: TuneResult | None = None
    best_miss = math.inf
    for iteration in range(1, spec.max_iterations + 1):
        fc = _highest_crossing_below(loop_frf, level, features.f_minus180,
                                     coherence_threshold)
        if fc is None:
            raise InfeasibleMarginError(
                f"no frequency below {features.f_minus180:.1f} Hz where the "
                f"magnitude reaches {level:.2f} dB inside the coherent band"
            )
        phi_fc = _log_interp(loop_frf.frequencies, loop_frf.phase_deg, fc)
        arg_deg = -180.0 + requested_pm - phi_fc + 90.0
        if not 0.0 < arg_deg < 90.0:
            raise PhaseInfeasibleError(
                f"phase {phi_fc:.2f} deg at {fc:.1f} Hz leaves no positive "
                f"integral time for a {requested_pm:.1f} deg phase margin "
                f"(need the read phase in ({requested_pm - 180.0:.1f}, "
                f"{requested_pm - 90.0:.1f}) deg)"
            )
        ti = math.tan(math.radians(arg_deg)) / (2.0 * math.pi * fc)
        kp = 10.0 ** (-(level + _pi_extra_magnitude_db(fc, ti)) / 20.0)
        gains = PiGains(kp=kp, ti=ti)

        open_loop = compose_loop([pi_response(gains, loop_frf.frequencies), loop_frf])
        achieved = margins(open_loop)
        result = TuneResult(
            gains=gains, notch=notch, crossover_frequency=fc,
            read_magnitude_db=level, read_phase_deg=phi_fc,
            achieved=achieved, iterations_used=iteration,
            requested_phase_margin_deg=requested_pm,
        )

        pm_err = (math.inf if achieved.phase_margin_deg is None
                  else achieved.phase_margin_deg - pm_target)
        am_err = (math.inf if achieved.gain_margin_db is None
                  else achieved.gain_margin_db - am_target)
        residual_ok = (
            abs(_pi_extra_magnitude_db(features.f_minus180, ti)) < _PI_RESIDUAL_MAG_DB
            and abs(_pi_phase_deg(features.f_minus180, ti)) < _PI_RESIDUAL_PHASE_DEG
        )
        miss = abs(pm_err) + abs(am_err)
        if miss < best_miss:
            best, best_miss = result, miss
        if abs(pm_err) <= pm_tolerance_deg and abs(am_err) <= am_tolerance_db and residual_ok:
            return result
        # compensate the controller's own phase contribution and retry
        if abs(pm_err) > pm_tolerance_deg and math.isfinite(pm_err):
            requested_pm += math.copysign(offset_step_deg, -pm_err)
        else:
            requested_pm += offset_step_deg

    raise NonConvergenceError(
        f"margins missed tolerances after {spec.max_iterations} iteration(s); "
        f"best attempt kp={best.gains.kp:.4g}, ti={best.gains.ti:.4g}",
        best=best,
    )


def relay_experiment(params, relay_amplitude: float, hysteresis: float,
                     sample_period: float, duration: float = 2.0,
                     actuation_delay_samples: int = 0,
                     settle_fraction: float = 0.5):
    """Run a relay-feedback experiment and measure its limit cycle.

    Returns ``(ultimate_gain, ultimate_period, cycle_amplitude)``.  The
    first ``settle_fraction`` of the record is discarded as transient; the
    remainder must contain at least five consistent relay periods.

    Raises
    ------
    NoOscillationError
        If no sustained, regular limit cycle is found in the window.
    """
    if relay_amplitude <= 0.0:
        raise InvalidInputError("relay_amplitude must be strictly positive")
    if not 0.0 < settle_fraction < 1.0:
        raise InvalidInputError("settle_fraction must lie in (0, 1)")
    spec = plant_mod.ExcitationSpec(kind="relay", amplitude=relay_amplitude,
                                    duration=duration, relay_hysteresis=hysteresis)
    trace = plant_mod.simulate(params, spec, sample_period,
                               actuation_delay_samples=actuation_delay_samples)
    start = int(len(trace.torque_command) * settle_fraction)
    u = trace.torque_command[start:]
    y = trace.motor_velocity[start:]

    rising = np.where(np.diff(np.sign(u)) > 0)[0]
    if len(rising) < 6:
        raise NoOscillationError(
            f"only {max(0, len(rising) - 1)} relay cycle(s) in the analysis window; "
            "no sustained limit cycle"
        )
    periods = np.diff(rising) * sample_period
    if np.std(periods) > 0.1 * np.mean(periods):
        raise NoOscillationError("relay switching is irregular; no stable limit cycle")
    amplitudes = []
    for lo, hi in zip(rising[:-1], rising[1:]):
        seg = y[lo:hi]
        amplitudes.append(0.5 * (seg.max() - seg.min()))
    amp = float(np.mean(amplitudes))
    if amp <= 0.0:
        raise NoOscillationError("limit cycle amplitude is zero")
    tu = float(np.mean(periods))
    ku = 4.0 * relay_amplitude / (math.pi * amp)
    return ku, tu, amp


def relay_tune(params, relay_amplitude: float, hysteresis: float,
               sample_period: float, duration: float = 2.0,
               actuation_delay_samples: int = 0) -> PiGains:
    """Relay-feedback baseline tuner (ultimate-gain PI rules).

    Runs :func:`relay_experiment` and returns ``kp = 0.45 Ku`` and
    ``ti = Tu / 1.2``.
    """
    ku, tu, _ = relay_experiment(params, relay_amplitude, hysteresis,
                                 sample_period, duration=duration,
                                 actuation_delay_samples=actuation_delay_samples)
    return PiGains(kp=0.45 * ku, ti=tu / 1.2)
