"""Notch filter design and its discrete second-order realization.

A notch is described by three numbers: center frequency, bandwidth and depth.
The continuous prototype is

    N(s) = (s^2 + 2 zn w0 s + w0^2) / (s^2 + 2 zd w0 s + w0^2)

with ``zn/zd = 10^(-depth/20)`` and ``zd`` solved so the -3 dB width of the
magnitude response equals the requested bandwidth.  The discrete filter is
obtained by the bilinear transform with frequency prewarping at the center,
so the realized magnitude minimum lands exactly on the center frequency.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
import scipy.signal

from .errors import (
    FrequencyRangeError,
    InvalidInputError,
    NotchDesignError,
    SamplingError,
)
from .sysid import BodeFeatures, FrequencyResponse

__all__ = ["NotchParams", "NotchBiquad", "design_notch", "notch_response", "filter_apply"]

#: Smallest finite depth with a defined -3 dB bandwidth.
_MIN_FINITE_DEPTH_DB = 20.0 * math.log10(math.sqrt(2.0))


@dataclass(frozen=True)
class NotchParams:
    """Design-level notch triple: center (Hz), bandwidth (Hz), depth (dB).

    ``depth_db = math.inf`` denotes an infinitely deep notch (a transmission
    zero at the center frequency).
    """

    center_frequency: float
    bandwidth: float
    depth_db: float

    def __post_init__(self):
        if self.center_frequency <= 0.0:
            raise InvalidInputError("center_frequency must be strictly positive")
        if self.bandwidth <= 0.0:
            raise InvalidInputError("bandwidth must be strictly positive")
        if not self.depth_db > 0.0:
            raise InvalidInputError("depth_db must be strictly positive")

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.depth_db)


@dataclass(frozen=True)
class NotchBiquad:
    """Realized second-order discrete notch section.

    ``numerator`` and ``denominator`` are the three coefficients of the
    difference equation (denominator monic).  Poles lie strictly inside the
    unit circle and the DC gain is unity.
    """

    numerator: tuple
    denominator: tuple
    sample_period: float

    def __post_init__(self):
        if len(self.numerator) != 3 or len(self.denominator) != 3:
            raise InvalidInputError("biquad needs exactly three coefficients per side")
        if abs(self.denominator[0] - 1.0) > 1e-12:
            raise InvalidInputError("denominator must be monic")
        if self.sample_period <= 0.0:
            raise InvalidInputError("sample_period must be positive")
        poles = np.roots(self.denominator)
        if np.any(np.abs(poles) >= 1.0):
            raise InvalidInputError("biquad poles must lie strictly inside the unit circle")
        dc = sum(self.numerator) / sum(self.denominator)
        if abs(20.0 * math.log10(abs(dc))) > 0.05:
            raise InvalidInputError("biquad DC gain deviates from unity by more than 0.05 dB")


def _prototype_zetas(params: NotchParams):
    """Damping pair (zeta_num, zeta_den) of the continuous prototype."""
    d = 0.0 if params.is_infinite else 10.0 ** (-params.depth_db / 20.0)
    discr = 1.0 - 2.0 * d * d
    if discr <= 0.0:
        raise NotchDesignError(
            f"depth {params.depth_db:.3g} dB is below {_MIN_FINITE_DEPTH_DB:.3g} dB; "
            "the -3 dB bandwidth is undefined for such a shallow notch"
        )
    zd = params.bandwidth / (2.0 * params.center_frequency * math.sqrt(discr))
    return d * zd, zd


def _bilinear_biquad(params: NotchParams, sample_period: float) -> NotchBiquad:
    zn, zd = _prototype_zetas(params)
    w0 = 2.0 * math.pi * params.center_frequency
    kw = w0 / math.tan(w0 * sample_period / 2.0)  # prewarped bilinear constant

    def side(z):
        return (kw * kw + 2.0 * z * w0 * kw + w0 * w0,
                2.0 * (w0 * w0 - kw * kw),
                kw * kw - 2.0 * z * w0 * kw + w0 * w0)

    num = side(zn)
    den = side(zd)
    a0 = den[0]
    return NotchBiquad(
        numerator=tuple(c / a0 for c in num),
        denominator=(1.0, den[1] / a0, den[2] / a0),
        sample_period=sample_period,
    )


def design_notch(features: BodeFeatures, bandwidth_factor: float = 1.0,
                 depth_mode: str = "finite_half_gap",
                 sample_period: float = 1.25e-4):
    """Design the notch from extracted Bode features.

    The center frequency is placed on the resonance peak; the bandwidth is
    ``bandwidth_factor`` times the center frequency (the usual commissioning
    range is one to two times); the depth is half the dB gap between the
    resonance peak and the antiresonance dip, or infinite.

    Returns
    -------
    (NotchParams, NotchBiquad)
        The design triple and its discrete realization.

    Raises
    ------
    SamplingError
        If the center frequency is not below a quarter of the sample rate.
    """
    if not 1.0 <= bandwidth_factor <= 2.0:
        raise InvalidInputError("bandwidth_factor must lie in [1, 2]")
    if depth_mode not in ("finite_half_gap", "infinite"):
        raise InvalidInputError(f"unknown depth_mode {depth_mode!r}")
    if sample_period <= 0.0:
        raise InvalidInputError("sample_period must be positive")
    f0 = features.f_resonance
    if f0 >= 0.25 / sample_period:
        raise SamplingError(
            f"notch center {f0:.6g} Hz must lie below a quarter of the sample "
            f"rate ({0.25 / sample_period:.6g} Hz)"
        )
    depth = math.inf if depth_mode == "infinite" else features.peak_gap_db / 2.0
    params = NotchParams(center_frequency=f0, bandwidth=bandwidth_factor * f0,
                         depth_db=depth)
    return params, _bilinear_biquad(params, sample_period)


def realize(params: NotchParams, sample_period: float) -> NotchBiquad:
    """Realize an explicit design triple as a discrete biquad."""
    if sample_period <= 0.0:
        raise InvalidInputError("sample_period must be positive")
    if params.center_frequency >= 0.25 / sample_period:
        raise SamplingError(
            f"notch center {params.center_frequency:.6g} Hz must lie below a "
            f"quarter of the sample rate ({0.25 / sample_period:.6g} Hz)"
        )
    return _bilinear_biquad(params, sample_period)


def notch_response(biquad: NotchBiquad, frequencies) -> FrequencyResponse:
    """Exact discrete-time frequency response of the realized notch."""
    f = np.asarray(frequencies, dtype=float)
    if f.ndim != 1 or len(f) < 1:
        raise InvalidInputError("frequencies must be a 1-D sequence")
    if np.any(f <= 0.0):
        raise InvalidInputError("frequencies must be strictly positive")
    if len(f) > 1 and np.any(np.diff(f) <= 0.0):
        raise InvalidInputError("frequencies must be strictly increasing")
    nyquist = 0.5 / biquad.sample_period
    if f[-1] >= nyquist:
        raise FrequencyRangeError(
            f"grid reaches {f[-1]:.6g} Hz, at or above the Nyquist rate {nyquist:.6g} Hz"
        )
    z = np.exp(2j * np.pi * f * biquad.sample_period)
    b0, b1, b2 = biquad.numerator
    _, a1, a2 = biquad.denominator
    zi = 1.0 / z
    resp = (b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi)
    return FrequencyResponse(f, resp, np.ones_like(f))


def filter_apply(biquad: NotchBiquad, signal) -> np.ndarray:
    """Run the second-order difference equation over a signal (zero init)."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError("signal must be 1-D")
    return scipy.signal.lfilter(biquad.numerator, biquad.denominator, x)
