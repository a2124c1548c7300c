"""Nonparametric frequency-response estimation and Bode feature extraction.

The estimator is the classic averaged cross-periodogram (H1) form: Hann
windowed, overlapping segments, cross spectrum divided by the input auto
spectrum, with magnitude-squared coherence carried per frequency bin.
Feature extraction pulls out the four readings the tuning procedure needs:
the antiresonance dip, the resonance peak, the dB gap between them and the
frequency where the unwrapped phase first crosses -180 deg.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FrequencyRangeError,
    InsufficientDataError,
    InvalidInputError,
    NoCrossoverError,
)

__all__ = [
    "FrequencyResponse",
    "BodeFeatures",
    "estimate_frf",
    "coherence_mask",
    "extract_features",
    "read_at",
    "compensate_hold_delay",
    "segment_cross_spectra",
]


@dataclass
class FrequencyResponse:
    """Sampled complex frequency response with per-bin coherence.

    Parameters
    ----------
    frequencies : ndarray
        Strictly increasing, strictly positive grid in Hz.
    response : ndarray of complex
        Complex gain at each grid point (output unit per input unit).
    coherence : ndarray
        Magnitude-squared coherence in [0, 1] per grid point.
    """

    frequencies: np.ndarray
    response: np.ndarray
    coherence: np.ndarray

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.response = np.asarray(self.response, dtype=complex)
        self.coherence = np.asarray(self.coherence, dtype=float)
        if not (len(self.frequencies) == len(self.response) == len(self.coherence)):
            raise InvalidInputError("frequency, response and coherence lengths differ")
        if len(self.frequencies) < 2:
            raise InvalidInputError("a frequency response needs at least two points")
        if np.any(self.frequencies <= 0.0):
            raise InvalidInputError("frequencies must be strictly positive")
        if np.any(np.diff(self.frequencies) <= 0.0):
            raise InvalidInputError("frequencies must be strictly increasing")
        if np.any((self.coherence < -1e-12) | (self.coherence > 1.0 + 1e-12)):
            raise InvalidInputError("coherence must lie in [0, 1]")
        self.coherence = np.clip(self.coherence, 0.0, 1.0)

    @property
    def magnitude_db(self) -> np.ndarray:
        """Magnitude view in dB."""
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.response))

    @property
    def phase_deg(self) -> np.ndarray:
        """Unwrapped phase view in degrees (continuous across the grid)."""
        return np.degrees(np.unwrap(np.angle(self.response)))

    def to_csv(self, path) -> None:
        """Write the response as ``f_hz,mag_db,phase_deg,coherence`` rows."""
        mag = self.magnitude_db
        ph = self.phase_deg
        with open(path, "w", newline="") as fh:
            fh.write("f_hz,mag_db,phase_deg,coherence\n")
            for f, m, p, c in zip(self.frequencies, mag, ph, self.coherence):
                fh.write(f"{f:.12g},{m:.12g},{p:.12g},{c:.12g}\n")

    @classmethod
    def from_csv(cls, path) -> "FrequencyResponse":
        """Read a response written by :meth:`to_csv`."""
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        if data.ndim != 2 or data.shape[1] != 4:
            raise InvalidInputError(f"{path}: expected 4 columns f_hz,mag_db,phase_deg,coherence")
        f, mag, ph, coh = data.T
        resp = 10.0 ** (mag / 20.0) * np.exp(1j * np.radians(ph))
        return cls(f, resp, coh)


@dataclass(frozen=True)
class BodeFeatures:
    """The four Bode readings consumed by the notch and PI design steps."""

    f_resonance: float
    f_antiresonance: float
    peak_gap_db: float
    f_minus180: float
    initial_margin_reading_db: float

    def __post_init__(self):
        if not self.f_antiresonance < self.f_resonance:
            raise InvalidInputError(
                f"antiresonance ({self.f_antiresonance:.1f} Hz) must lie below "
                f"resonance ({self.f_resonance:.1f} Hz)"
            )
        if not self.peak_gap_db > 0.0:
            raise InvalidInputError("resonance/antiresonance gap must be positive")


def segment_cross_spectra(u, y, segment_length: int, overlap_fraction: float = 0.5):
    """Per-segment windowed cross and auto periodograms.

    Returns a list of ``(Puu, Pyy, Puy)`` triples, one per Hann-windowed
    segment, DC and Nyquist bins excluded.  Summing the triples in any order
    and forming ``sum(Puy)/sum(Puu)`` reproduces the H1 estimate; the helper
    exists so reductions can be distributed and checked for order
    independence.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise InvalidInputError("input and output must be 1-D arrays of equal length")
    n = segment_length
    if n < 8 or (n & (n - 1)) != 0:
        raise InvalidInputError("segment_length must be a power of two (>= 8)")
    if not 0.0 <= overlap_fraction < 1.0:
        raise InvalidInputError("overlap_fraction must lie in [0, 1)")
    if len(u) < 2 * n:
        raise InsufficientDataError(
            f"record of {len(u)} samples is too short: need at least "
            f"{2 * n} samples (two segments of {n})",
            minimum_samples=2 * n,
        )
    step = max(1, int(round(n * (1.0 - overlap_fraction))))
    window = np.hanning(n)
    out = []
    for start in range(0, len(u) - n + 1, step):
        us = window * u[start:start + n]
        ys = window * y[start:start + n]
        U = np.fft.rfft(us)[1:-1]
        Y = np.fft.rfft(ys)[1:-1]
        out.append(((U.conj() * U).real, (Y.conj() * Y).real, U.conj() * Y))
    return out


def estimate_frf(u, y, sample_period: float, segment_length: int,
                 overlap_fraction: float = 0.5) -> FrequencyResponse:
    """Estimate the frequency response from an input/output record.

    H1 estimator: averaged cross spectrum over averaged input auto spectrum,
    Hann windowed with overlapping segments.  Coherence is
    ``|Suy|^2 / (Suu * Syy)`` per bin.  The DC and Nyquist bins are excluded
    from the returned grid.

    Parameters
    ----------
    u, y : array_like
        Input (e.g. torque command) and output (e.g. motor velocity) records.
    sample_period : float
        Sample period of the records in seconds.
    segment_length : int
        Segment size in samples; must be a power of two.  The record must
        hold at least two segments.
    overlap_fraction : float
        Fractional overlap between consecutive segments, in [0, 1).
    """
    if sample_period <= 0.0:
        raise InvalidInputError("sample_period must be positive")
    spectra = segment_cross_spectra(u, y, segment_length, overlap_fraction)
    suu = sum(s[0] for s in spectra)
    syy = sum(s[1] for s in spectra)
    suy = sum(s[2] for s in spectra)
    freqs = np.fft.rfftfreq(segment_length, sample_period)[1:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        resp = np.where(suu > 0.0, suy / np.where(suu > 0.0, suu, 1.0), 0.0)
        denom = suu * syy
        coh = np.where(denom > 0.0, np.abs(suy) ** 2 / np.where(denom > 0.0, denom, 1.0), 0.0)
    return FrequencyResponse(freqs, resp, np.clip(coh, 0.0, 1.0))


def coherence_mask(frf: FrequencyResponse, threshold: float):
    """Maximal contiguous frequency intervals where coherence >= threshold.

    Returns a list of ``(f_low, f_high)`` tuples; empty when no bin passes.
    Bode readings for tuning are only trustworthy inside these intervals.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError("threshold must lie in [0, 1]")
    good = frf.coherence >= threshold
    intervals = []
    start = None
    for i, g in enumerate(good):
        if g and start is None:
            start = i
        elif not g and start is not None:
            intervals.append((float(frf.frequencies[start]), float(frf.frequencies[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(frf.frequencies[start]), float(frf.frequencies[-1])))
    return intervals


def _log_interp(fgrid, values, f):
    return float(np.interp(np.log(f), np.log(fgrid), values))


def _crossing_frequency(fgrid, values, level, mask=None):
    """Lowest-frequency interpolated crossing of ``values`` through ``level``.

    Interpolation is linear in log-frequency.  ``mask`` restricts the search
    to grid intervals whose endpoints are both inside the usable band.
    Returns None when there is no crossing.
    """
    v = values - level
    ok = np.ones(len(fgrid) - 1, dtype=bool) if mask is None else (mask[:-1] & mask[1:])
    sign_change = (v[:-1] * v[1:] <= 0.0) & (v[:-1] != v[1:]) & ok
    idx = np.where(sign_change)[0]
    if len(idx) == 0:
        return None
    i = idx[0]
    t = v[i] / (v[i] - v[i + 1])
    return float(np.exp(np.log(fgrid[i]) + t * (np.log(fgrid[i + 1]) - np.log(fgrid[i]))))


def extract_features(frf: FrequencyResponse, coherence_threshold: float = 0.95) -> BodeFeatures:
    """Extract the dip/peak pair and the -180 deg phase crossing.

    The antiresonance is the magnitude minimum inside the coherent band and
    the resonance the magnitude maximum above it (the collocated dip/peak
    order).  The -180 deg crossing is the lowest-frequency one inside the
    band, located by interpolating the unwrapped phase in log-frequency; the
    magnitude interpolated there is the initial margin reading (signed dB,
    negative for a stable plant).

    Raises
    ------
    NoCrossoverError
        If the unwrapped phase never crosses -180 deg inside the band, in
        which case the tuning method is inapplicable.
    """
    mag = frf.magnitude_db
    phase = frf.phase_deg
    band = frf.coherence >= coherence_threshold
    if not band.any():
        raise NoCrossoverError("no frequency bin passes the coherence threshold")

    f180 = _crossing_frequency(frf.frequencies, phase, -180.0, mask=band)
    if f180 is None:
        raise NoCrossoverError(
            "phase never crosses -180 deg inside the coherent band; "
            "margin-based placement is undefined for this response"
        )
    reading = _log_interp(frf.frequencies, mag, f180)

    idx = np.where(band)[0]
    masked = np.where(band, mag, np.inf)
    i_ar = int(np.argmin(masked))
    above = np.where(band & (frf.frequencies > frf.frequencies[i_ar]), mag, -np.inf)
    if not np.isfinite(above).any():
        raise InvalidInputError("no coherent bins above the antiresonance dip")
    i_res = int(np.argmax(above))
    return BodeFeatures(
        f_resonance=float(frf.frequencies[i_res]),
        f_antiresonance=float(frf.frequencies[i_ar]),
        peak_gap_db=float(mag[i_res] - mag[i_ar]),
        f_minus180=f180,
        initial_margin_reading_db=reading,
    )


def read_at(frf: FrequencyResponse, f: float):
    """Read interpolated ``(magnitude_db, phase_deg)`` at one frequency.

    Interpolation is linear in log-frequency on the dB magnitude and the
    unwrapped phase, which is how values are read off a Bode plot.  Exact at
    grid points.
    """
    if not frf.frequencies[0] <= f <= frf.frequencies[-1]:
        raise FrequencyRangeError(
            f"{f:.6g} Hz is outside the response span "
            f"[{frf.frequencies[0]:.6g}, {frf.frequencies[-1]:.6g}] Hz"
        )
    return (_log_interp(frf.frequencies, frf.magnitude_db, f),
            _log_interp(frf.frequencies, frf.phase_deg, f))


def compensate_hold_delay(frf: FrequencyResponse, sample_period: float,
                          delay_samples: int = 0) -> FrequencyResponse:
    """Divide out the zero-order hold and actuation latency from an estimate.

    An identification record taken on a digital drive measures the plant
    through the command hold (half-sample delay plus sinc roll-off) and any
    whole-sample actuation latency.  Removing this known chain makes the
    estimate directly comparable with a continuous-time model response.
    """
    if sample_period <= 0.0:
        raise InvalidInputError("sample_period must be positive")
    f = frf.frequencies
    w = 2.0 * np.pi * f
    hold = np.exp(-1j * w * sample_period / 2.0) * np.sinc(f * sample_period)
    chain = hold * np.exp(-1j * w * delay_samples * sample_period)
    return FrequencyResponse(f.copy(), frf.response / chain, frf.coherence.copy())
