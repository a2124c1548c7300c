"""Loop composition, stability margins, sensitivity, and step metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridError, InvalidInputError
from .sysid import FrequencyResponse, _crossing_frequency, _log_interp

__all__ = [
    "MarginReport",
    "StepMetrics",
    "compose_loop",
    "margins",
    "sensitivity",
    "step_metrics",
]

_MINUS_3DB = 20.0 * np.log10(2.0) / 2.0  # 3.0103 dB
_SINGULAR_EPS = 1e-12


@dataclass(frozen=True)
class MarginReport:
    """Stability margins and bandwidth of one open loop.

    Fields are None when the corresponding crossover does not exist on the
    evaluated grid (for example an open loop whose phase never reaches
    -180 deg has no gain margin).
    """

    phase_margin_deg: float | None
    gain_margin_db: float | None
    gain_crossover_hz: float | None
    phase_crossover_hz: float | None
    closed_loop_bandwidth_hz: float | None
    sensitivity_peak_db: float | None

    def as_dict(self) -> dict:
        return {
            "phase_margin_deg": self.phase_margin_deg,
            "gain_margin_db": self.gain_margin_db,
            "gain_crossover_hz": self.gain_crossover_hz,
            "phase_crossover_hz": self.phase_crossover_hz,
            "closed_loop_bandwidth_hz": self.closed_loop_bandwidth_hz,
            "sensitivity_peak_db": self.sensitivity_peak_db,
        }


@dataclass(frozen=True)
class StepMetrics:
    """Time-domain performance figures of one velocity step response."""

    overshoot_pct: float
    settling_time_s: float
    itae: float
    steady_state_reached: bool

    def as_dict(self) -> dict:
        return {
            "overshoot_pct": self.overshoot_pct,
            "settling_time_s": self.settling_time_s,
            "itae": self.itae,
            "steady_state_reached": self.steady_state_reached,
        }


def compose_loop(parts) -> FrequencyResponse:
    """Pointwise product of frequency responses (controller * notch * plant).

    All parts should share one grid.  Parts on different but overlapping
    grids are resampled onto the first part's grid with a warning; grids
    with no overlap raise :class:`GridError`.  The composed coherence is the
    elementwise minimum of the parts' coherences.
    """
    parts = list(parts)
    if not parts:
        raise InvalidInputError("compose_loop needs at least one part")
    base = parts[0]
    f = base.frequencies
    resp = base.response.copy()
    coh = base.coherence.copy()
    for part in parts[1:]:
        if len(part.frequencies) == len(f) and np.allclose(part.frequencies, f, rtol=1e-12, atol=0.0):
            r, c = part.response, part.coherence
        else:
            lo = max(f[0], part.frequencies[0])
            hi = min(f[-1], part.frequencies[-1])
            if lo >= hi:
                raise GridError("frequency grids do not overlap")
            warnings.warn("resampling a loop part onto the first part's grid",
                          stacklevel=2)
            keep = (f >= lo) & (f <= hi)
            if keep.sum() < 2:
                raise GridError("grid overlap covers fewer than two points")
            f = f[keep]
            resp = resp[keep]
            coh = coh[keep]
            logf = np.log(part.frequencies)
            mag = np.interp(np.log(f), logf, part.magnitude_db)
            ph = np.interp(np.log(f), logf, part.phase_deg)
            ci = np.interp(np.log(f), logf, part.coherence)
            r = 10.0 ** (mag / 20.0) * np.exp(1j * np.radians(ph))
            c = ci
        resp = resp * r
        coh = np.minimum(coh, c)
    return FrequencyResponse(f, resp, coh)


def _sensitivity_magnitude(loop: FrequencyResponse):
    """|1/(1+L)| with singular bins masked out."""
    one_plus = 1.0 + loop.response
    singular = np.abs(one_plus) < _SINGULAR_EPS
    if singular.any():
        warnings.warn(f"{int(singular.sum())} singular bin(s) where |1+L| < {_SINGULAR_EPS:g} "
                      "excluded from the sensitivity peak", stacklevel=3)
    safe = np.where(singular, 1.0, one_plus)
    mag = 1.0 / np.abs(safe)
    return mag, singular


def margins(open_loop: FrequencyResponse) -> MarginReport:
    """Stability margins, closed-loop bandwidth, and sensitivity peak.

    The gain crossover is the lowest-frequency interpolated 0 dB crossing
    and the phase margin is 180 deg plus the unwrapped phase there.  The
    gain margin is the negated magnitude at the lowest -180 deg phase
    crossing.  Closed-loop bandwidth is the first -3 dB crossing (from
    above) of the complementary sensitivity ``L/(1+L)``; the sensitivity
    peak is ``max 1/|1+L|``.  Missing crossovers yield None fields rather
    than errors.
    """
    f = open_loop.frequencies
    mag = open_loop.magnitude_db
    phase = open_loop.phase_deg

    gc = _crossing_frequency(f, mag, 0.0)
    pm = None if gc is None else 180.0 + _log_interp(f, phase, gc)
    pc = _crossing_frequency(f, phase, -180.0)
    gm = None if pc is None else -_log_interp(f, mag, pc)

    smag, singular = _sensitivity_magnitude(open_loop)
    nonsingular = ~singular
    with np.errstate(divide="ignore"):
        speak_db = (float(np.max(20.0 * np.log10(smag[nonsingular])))
                    if nonsingular.any() else None)

    comp = open_loop.response / np.where(np.abs(1.0 + open_loop.response) < _SINGULAR_EPS,
                                         np.inf, 1.0 + open_loop.response)
    with np.errstate(divide="ignore"):
        comp_db = 20.0 * np.log10(np.abs(comp))
    bw = _crossing_frequency(f, comp_db, -_MINUS_3DB)

    return MarginReport(
        phase_margin_deg=pm,
        gain_margin_db=gm,
        gain_crossover_hz=gc,
        phase_crossover_hz=pc,
        closed_loop_bandwidth_hz=bw,
        sensitivity_peak_db=speak_db,
    )


def sensitivity(open_loop: FrequencyResponse) -> FrequencyResponse:
    """Sensitivity function ``S = 1/(1+L)`` on the loop's grid.

    Bins where ``|1+L|`` vanishes numerically are marked by zeroing their
    coherence (and warned about) so that downstream peak searches skip them.
    """
    one_plus = 1.0 + open_loop.response
    singular = np.abs(one_plus) < _SINGULAR_EPS
    if singular.any():
        warnings.warn(f"{int(singular.sum())} singular bin(s) in the sensitivity function",
                      stacklevel=2)
    safe = np.where(singular, _SINGULAR_EPS, one_plus)
    coh = np.where(singular, 0.0, open_loop.coherence)
    return FrequencyResponse(open_loop.frequencies.copy(), 1.0 / safe, coh)


def step_metrics(trace, reference_value: float) -> StepMetrics:
    """Overshoot, 2 % settling time, and ITAE of a velocity step response.

    The step onset is the first sample whose reference is nonzero; all
    metrics are measured from there.  Settling time is the last instant the
    motor velocity leaves the +/-2 % band around the reference.  ITAE is the
    trapezoidal integral of ``t * |e(t)|`` with time counted from onset.
    ``steady_state_reached`` is False when the response still leaves the
    band inside the final tenth of the trace, which is how a non-settling
    (oscillating or diverging) run is flagged.
    """
    if reference_value <= 0.0:
        raise InvalidInputError("reference_value must be strictly positive")
    y = trace.motor_velocity
    if len(y) == 0:
        raise InvalidInputError("trace is empty")
    nz = np.nonzero(trace.reference)[0]
    onset = int(nz[0]) if len(nz) else 0
    y = y[onset:]
    t = np.arange(len(y)) * trace.sample_period
    err = reference_value - y

    overshoot = max(0.0, (float(np.max(y)) - reference_value) / reference_value * 100.0)
    outside = np.abs(err) > 0.02 * reference_value
    if outside.any():
        settling = float(t[np.where(outside)[0][-1]] + trace.sample_period)
    else:
        settling = 0.0
    tail_start = int(len(y) * 0.9)
    steady = not outside[tail_start:].any()
    itae = float(np.trapezoid(t * np.abs(err), t)) if len(y) > 1 else 0.0
    return StepMetrics(
        overshoot_pct=overshoot,
        settling_time_s=settling,
        itae=itae,
        steady_state_reached=steady,
    )
