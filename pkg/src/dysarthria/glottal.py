"""Glottal closure instant detection and pulse statistics.

Detection follows the mean-based-signal scheme: a sliding Blackman window
of 1.75 pitch periods produces a slow oscillation whose minimum-to-rising-
zero-crossing intervals each bracket one expected closure; within each
interval the instant snaps to the strongest negative peak of the LPC
residual.  The seven pulse parameters are all computed from the resulting
instants and their residual peak amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from dysarthria.corpus import AudioClip
from dysarthria import dsp

#: Accepted inter-pulse gap range, ms (60..400 Hz voicing band).
MIN_PERIOD_MS = 1000.0 / 400.0
MAX_PERIOD_MS = 1000.0 / 60.0
#: Relative gate on gaps, as a factor of the clip's median period.
MAX_PERIOD_FACTOR = 1.4

_RESIDUAL_SEGMENT_S = 0.032
_MEAN_WINDOW_PERIODS = 1.75
_VOICED_FRAME_MS = 20.0


@dataclass(frozen=True)
class GciSequence:
    """Detected closure instants (sample indices, strictly ascending)."""

    instants: np.ndarray
    pulse_amplitudes: np.ndarray
    mean_pitch_hz: float

    def __post_init__(self):
        inst = np.asarray(self.instants, dtype=np.int64)
        amps = np.asarray(self.pulse_amplitudes, dtype=np.float64)
        object.__setattr__(self, "instants", inst)
        object.__setattr__(self, "pulse_amplitudes", amps)
        if inst.shape != amps.shape:
            raise ValueError("instants and amplitudes must align")
        if len(inst) > 1 and np.any(np.diff(inst) <= 0):
            raise ValueError("instants must be strictly ascending")

    def __len__(self) -> int:
        return len(self.instants)


@dataclass(frozen=True)
class GlottalParams:
    """The 7 pulse parameters used by the severity features."""

    mean_period_ms: float
    period_std_ms: float
    jitter_local_pct: float
    shimmer_local_pct: float
    mean_pulse_amplitude: float
    pulse_amplitude_std: float
    voiced_fraction: float

    def to_array(self) -> np.ndarray:
        return np.array(
            [
                self.mean_period_ms,
                self.period_std_ms,
                self.jitter_local_pct,
                self.shimmer_local_pct,
                self.mean_pulse_amplitude,
                self.pulse_amplitude_std,
                self.voiced_fraction,
            ],
            dtype=np.float64,
        )


FIELD_NAMES = (
    "mean_period_ms",
    "period_std_ms",
    "jitter_local_pct",
    "shimmer_local_pct",
    "mean_pulse_amplitude",
    "pulse_amplitude_std",
    "voiced_fraction",
)


def lpc_residual(samples: np.ndarray, sample_rate_hz: int, order: int | None = None) -> np.ndarray:
    """Prediction error of segment-wise LPC inverse filtering.

    Each 32 ms segment is filtered with its own error filter, warmed up on
    the preceding samples so segment boundaries leave no seams.
    """
    if order is None:
        order = 2 + sample_rate_hz // 1000
    x = np.asarray(samples, dtype=np.float64)
    seg = int(round(_RESIDUAL_SEGMENT_S * sample_rate_hz))
    res = np.zeros_like(x)
    for start in range(0, len(x), seg):
        end = min(start + seg, len(x))
        ctx = max(0, start - order)
        chunk = x[ctx:end]
        if len(chunk) <= order:
            continue
        windowed = chunk * np.hamming(len(chunk))
        try:
            model = dsp.lpc(windowed, order)
        except ValueError:  # silent segment predicts nothing
            continue
        res[start:end] = lfilter(model.error_filter(), [1.0], chunk)[start - ctx :]
    return res


def detect_gci(clip: AudioClip) -> GciSequence:
    """Locate glottal closure instants; unvoiced input gives an empty sequence."""
    fs = clip.sample_rate_hz
    if len(clip) < 0.1 * fs:
        raise ValueError("clip must be at least 100 ms long")

    pitch = dsp.estimate_mean_pitch(clip)
    if pitch is None:
        return GciSequence(np.array([], dtype=np.int64), np.array([]), 0.0)
    period = fs / pitch

    # pre-emphasis cancels the glottal tilt; without it the mean-based
    # signal's phase drifts away from the closure instants
    raw = clip.samples
    mu = 0.97 ** (10000.0 / fs)  # 0.97 referenced to 10 kHz
    emphasized = np.append(raw[0], raw[1:] - mu * raw[:-1])

    residual = lpc_residual(emphasized, fs)
    work = emphasized - np.mean(emphasized)
    # normalize polarity so closure peaks point down
    std = np.std(residual)
    if std > 0 and np.mean(residual**3) / std**3 > 0:
        work = -work
        residual = -residual

    win_len = int(round(_MEAN_WINDOW_PERIODS * period)) | 1
    window = np.blackman(win_len)
    window /= window.sum()
    mean_signal = np.convolve(work, window, mode="same")

    interior = mean_signal[1:-1]
    minima = np.flatnonzero((interior < mean_signal[:-2]) & (interior < mean_signal[2:])) + 1
    rising = np.flatnonzero((mean_signal[:-1] < 0) & (mean_signal[1:] >= 0)) + 1

    instants, amplitudes = [], []
    for m in minima:
        nxt = np.searchsorted(rising, m)
        if nxt >= len(rising):
            continue
        hi = min(len(work) - 1, int(rising[nxt]))
        if hi <= m:
            continue
        k = m + int(np.argmin(residual[m : hi + 1]))
        if residual[k] < 0:
            instants.append(k)
            amplitudes.append(-residual[k])

    if not instants:
        return GciSequence(np.array([], dtype=np.int64), np.array([]), pitch)

    instants = np.asarray(instants, dtype=np.int64)
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    order_ix = np.argsort(instants, kind="stable")
    instants, amplitudes = instants[order_ix], amplitudes[order_ix]

    # collapse pulses closer than the shortest admissible period,
    # keeping the stronger residual peak
    min_gap = int(round(MIN_PERIOD_MS / 1000.0 * fs))
    keep_inst, keep_amp = [], []
    for inst, amp in zip(instants, amplitudes):
        if keep_inst and inst - keep_inst[-1] < min_gap:
            if amp > keep_amp[-1]:
                keep_inst[-1], keep_amp[-1] = inst, amp
            continue
        keep_inst.append(int(inst))
        keep_amp.append(float(amp))
    return GciSequence(np.asarray(keep_inst, dtype=np.int64), np.asarray(keep_amp), pitch)


def extract_glottal_params(gci: GciSequence, clip: AudioClip) -> GlottalParams:
    """Pulse statistics from a GCI sequence.

    Periods come from consecutive instant gaps inside the 60..400 Hz gate;
    jitter is mean |T_i - T_{i-1}| over mean T (percent), shimmer the same
    on pulse amplitudes.  An empty sequence yields all zeros.
    """
    fs = clip.sample_rate_hz
    n = len(gci)
    if n == 0:
        return GlottalParams(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    gaps_ms = np.diff(gci.instants) / fs * 1000.0
    accepted = (gaps_ms >= MIN_PERIOD_MS) & (gaps_ms <= MAX_PERIOD_MS)
    if accepted.any():
        # relative gate: doubled/halved periods from missed pulses (e.g. at
        # syllable-burst edges) otherwise masquerade as huge jitter
        median = np.median(gaps_ms[accepted])
        accepted &= (gaps_ms >= median / MAX_PERIOD_FACTOR) & (
            gaps_ms <= median * MAX_PERIOD_FACTOR
        )
    periods = gaps_ms[accepted]

    mean_period = float(np.mean(periods)) if len(periods) else 0.0
    period_std = float(np.std(periods)) if len(periods) else 0.0
    jitter = 0.0
    if len(periods) >= 2 and mean_period > 0:
        jitter = float(np.mean(np.abs(np.diff(periods))) / mean_period * 100.0)

    amps = gci.pulse_amplitudes
    mean_amp = float(np.mean(amps))
    amp_std = float(np.std(amps))
    shimmer = 0.0
    if len(amps) >= 2 and mean_amp > 0:
        # only amplitude steps across accepted (voiced) gaps count
        steps = np.abs(np.diff(amps))[accepted] if len(accepted) else np.array([])
        if len(steps):
            shimmer = float(np.mean(steps) / mean_amp * 100.0)

    bin_len = int(round(_VOICED_FRAME_MS / 1000.0 * fs))
    n_bins = max(1, -(-len(clip) // bin_len))  # ceil division
    occupied = len(np.unique(gci.instants // bin_len))
    voiced_fraction = min(1.0, occupied / n_bins)

    return GlottalParams(mean_period, period_std, jitter, shimmer, mean_amp, amp_std, voiced_fraction)
