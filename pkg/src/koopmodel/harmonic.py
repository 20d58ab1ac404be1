"""Frequency-domain eigenvalue detection for on-attractor dynamics.

Works on a single scalar time series (real or complex) sampled once per
step.  All frequencies are in cycles/step and restricted to [0, 0.5], so
bin arithmetic stays exact: bin ``b`` of an ``N``-point transform sits at
``b / N``.  No window is applied before the FFT; off-bin frequencies are
recovered by maximizing the harmonic average instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InputError

#: Fraction of a bin below which two refined peaks are considered duplicates.
_MERGE_FRACTION = 0.5


@dataclass(frozen=True)
class FrequencySpectrum:
    """Amplitudes of a series at the non-negative FFT bins.

    ``amplitudes[i]`` is ``|DFT(series)[b]| / series_length`` at frequency
    ``frequencies[i] = b / series_length``; bins run from 0 through
    ``floor(series_length / 2)`` so frequencies stay within [0, 0.5].
    """

    frequencies: np.ndarray
    amplitudes: np.ndarray
    series_length: int

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float)
        amps = np.asarray(self.amplitudes, dtype=float)
        if freqs.shape != amps.shape or freqs.ndim != 1:
            raise InputError("frequencies and amplitudes must be matching "
                             "1-D arrays")
        if freqs.size and (freqs[0] < 0 or freqs[-1] > 0.5):
            raise InputError("frequencies must lie in [0, 0.5]")
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise InputError("frequencies must be strictly increasing")
        if not np.all(np.isfinite(amps)) or np.any(amps < 0):
            raise InputError("amplitudes must be finite and non-negative")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "amplitudes", amps)


@dataclass(frozen=True)
class EigenFrequency:
    """A detected unit-circle eigenvalue candidate.

    ``average`` is the harmonic average of the series at ``omega``; its
    magnitude is near 1 for a pure rotation observed through a unimodular
    observable, and its value is the eigenfunction-weighted projection at
    the start of the series.
    """

    omega: float
    average: complex
    eigenvalue: complex

    @property
    def amplitude(self) -> float:
        return abs(self.average)


def _as_series(series) -> np.ndarray:
    values = np.asarray(series)
    if values.ndim != 1:
        raise InputError(f"expected a 1-D series, got shape {values.shape}")
    values = values.astype(complex)
    if not np.all(np.isfinite(values.real)) or not np.all(np.isfinite(values.imag)):
        raise InputError("series contains NaN or infinite entries")
    return values


def harmonic_average(series, omega: float) -> complex:
    """Fourier average (1/N) sum_k exp(-2*pi*i*omega*k) * series[k].

    A nonzero value flags ``exp(2*pi*i*omega)`` as a Koopman eigenvalue of
    the sampled dynamics; the value itself projects the observable onto the
    corresponding eigenfunction.
    """
    values = _as_series(series)
    if values.size < 1:
        raise InputError("harmonic average needs at least one sample")
    k = np.arange(values.size)
    return complex(np.mean(np.exp(-2j * np.pi * omega * k) * values))


def fft_amplitude_spectrum(series) -> FrequencySpectrum:
    """Normalized DFT amplitudes at the non-negative frequency bins.

    Any series length is accepted (the transform is a plain mixed-radix
    DFT, not restricted to powers of two).  Amplitudes are ``|F_b| / N`` so
    an exact-bin unit rotation shows amplitude 1 and an exact-bin unit
    cosine shows amplitude 0.5 split across the two mirrored bins.
    """
    values = _as_series(series)
    n = values.size
    if n < 4:
        raise InputError(f"need at least 4 samples for a spectrum, got {n}")
    transform = np.fft.fft(values)
    n_bins = n // 2 + 1
    return FrequencySpectrum(
        frequencies=np.arange(n_bins) / n,
        amplitudes=np.abs(transform[:n_bins]) / n,
        series_length=n,
    )


def _peak_bins(amplitudes: np.ndarray, threshold: float) -> list:
    floor = threshold * np.max(amplitudes)
    peaks = []
    last = amplitudes.size - 1
    for b, amp in enumerate(amplitudes):
        if amp < floor or amp == 0.0:
            continue
        left_ok = b == 0 or amp > amplitudes[b - 1]
        right_ok = b == last or amp > amplitudes[b + 1]
        if left_ok and right_ok:
            peaks.append(b)
    return peaks


def _refine_omega(values: np.ndarray, omega: float, bin_width: float) -> float:
    """Maximize |harmonic_average| within one bin of a detected peak."""
    lo = max(0.0, omega - bin_width)
    hi = min(0.5, omega + bin_width)
    k = np.arange(values.size)

    def neg_magnitude(w):
        return -abs(np.mean(np.exp(-2j * np.pi * w * k) * values))

    # Coarse scan first: the averaged magnitude has sidelobes within +-1
    # bin, so a blind line search could settle on the wrong lobe.
    grid = np.linspace(lo, hi, 33)
    best = grid[int(np.argmin([neg_magnitude(w) for w in grid]))]
    step = (hi - lo) / 32
    result = minimize_scalar(
        neg_magnitude,
        bounds=(max(lo, best - step), min(hi, best + step)),
        method="bounded",
        options={"xatol": 1e-12},
    )
    # A boundary or exact-bin maximum beats the interior polish.  Ties
    # within rounding noise resolve toward the bin center, so exactly
    # resonant frequencies are reported exactly.
    candidates = [omega, float(result.x), lo, hi]
    values = [neg_magnitude(w) for w in candidates]
    best = min(values)
    for w, v in zip(candidates, values):
        if v <= best + 1e-12 * (1.0 + abs(best)):
            return w
    return float(result.x)


def find_eigenfrequencies(series, peak_threshold: float = 0.1,
                          refine: bool = True) -> list:
    """Detect unit-circle eigenvalue candidates from spectral peaks.

    Peaks are strict local maxima of the amplitude spectrum (boundary bins
    compare against their single neighbor) that reach ``peak_threshold``
    times the maximum amplitude.  With ``refine`` the frequency of each
    peak is polished by golden-section search of the harmonic-average
    magnitude within one bin.  Returns `EigenFrequency` records ordered by
    increasing frequency; no peaks above threshold yields an empty list.
    """
    if not 0 < peak_threshold <= 1:
        raise InputError(
            f"peak_threshold must be in (0, 1], got {peak_threshold}"
        )
    values = _as_series(series)
    spectrum = fft_amplitude_spectrum(values)
    bin_width = 1.0 / spectrum.series_length
    found = []
    for b in _peak_bins(spectrum.amplitudes, peak_threshold):
        omega = spectrum.frequencies[b]
        if refine:
            omega = _refine_omega(values, omega, bin_width)
        found.append(omega)

    merged = []
    for omega in sorted(found):
        average = harmonic_average(values, omega)
        candidate = EigenFrequency(
            omega=omega,
            average=average,
            eigenvalue=complex(np.exp(2j * np.pi * omega)),
        )
        if merged and abs(merged[-1].omega - omega) < _MERGE_FRACTION * bin_width:
            if candidate.amplitude > merged[-1].amplitude:
                merged[-1] = candidate
            continue
        merged.append(candidate)
    return merged
