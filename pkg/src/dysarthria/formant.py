"""Formant frequency estimation via LPC root solving.

Per voiced frame the order-12 predictor polynomial is factored
(companion-matrix eigenvalues through ``np.roots``); roots in the upper
half plane with bandwidth under 600 Hz become formant candidates, and the
utterance-level answer is the per-slot median over frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dysarthria.corpus import AudioClip
from dysarthria import dsp

ANALYSIS_RATE_HZ = 10000  # leaves headroom for F5 below Nyquist
PREEMPHASIS = 0.97
LPC_ORDER = 12
MAX_BANDWIDTH_HZ = 600.0
MIN_FORMANT_HZ = 90.0  # rejects near-DC poles from the spectral tilt fit
N_FORMANTS = 5

_ENERGY_GATE = 0.1  # fraction of the loudest frame's RMS
_PERIODICITY_GATE = 0.2  # heavy jitter drags voiced peaks toward 0.3


class PartialFormantError(ValueError):
    """Too few formant candidates to fill all five slots."""

    def __init__(self, found: int):
        self.found = found
        super().__init__(
            f"only {found} formant candidate(s) found; need {N_FORMANTS}"
        )


@dataclass(frozen=True)
class FormantSet:
    f_hz: tuple
    bandwidths_hz: tuple
    n_voiced_frames_used: int

    def __post_init__(self):
        f = np.asarray(self.f_hz, dtype=np.float64)
        if f.shape != (N_FORMANTS,) or np.any(np.diff(f) <= 0):
            raise ValueError("need 5 strictly ascending formants")

    def to_array(self) -> np.ndarray:
        return np.asarray(self.f_hz, dtype=np.float64)


def _frame_is_voiced(frame: np.ndarray, fs: int) -> bool:
    """Periodicity gate: autocorrelation peak in the 60..400 Hz lag band."""
    f = frame - np.mean(frame)
    r = np.correlate(f, f, mode="full")[len(f) - 1 :]
    if r[0] <= 0:
        return False
    lo = int(np.ceil(fs / 400.0))
    hi = min(int(fs / 60.0), len(r) - 1)
    if hi <= lo:
        return False
    return np.max(r[lo : hi + 1]) / r[0] >= _PERIODICITY_GATE


def _frame_candidates(frame: np.ndarray, fs: int):
    """Sorted (frequency, bandwidth) candidates from one frame's LPC roots."""
    windowed = frame * np.hamming(len(frame))
    try:
        model = dsp.lpc(windowed, LPC_ORDER)
    except ValueError:
        return np.empty(0), np.empty(0)
    roots = np.roots(model.error_filter())
    roots = roots[np.imag(roots) > 1e-6]  # keep one of each conjugate pair
    freq = np.angle(roots) * fs / (2.0 * np.pi)
    bw = -(fs / np.pi) * np.log(np.abs(roots))
    ok = (bw > 0) & (bw < MAX_BANDWIDTH_HZ) & (freq > MIN_FORMANT_HZ) & (freq < fs / 2 - 50.0)
    freq, bw = freq[ok], bw[ok]
    order = np.argsort(freq)
    return freq[order], bw[order]


def estimate_formants(clip: AudioClip, frame_ms: float = 25.0) -> FormantSet:
    """Utterance-level F1..F5 with bandwidths.

    Resamples to 10 kHz, pre-emphasizes, and aggregates per-frame LPC root
    candidates by slot-wise median over frames that are energetic, periodic,
    and yield at least five candidates.  Raises
    :class:`PartialFormantError` when no frame fills all slots.
    """
    work = dsp.resample(clip, ANALYSIS_RATE_HZ)
    fs = work.sample_rate_hz
    x = work.samples
    emphasized = np.append(x[0], x[1:] - PREEMPHASIS * x[:-1])
    pre = AudioClip(emphasized, fs)
    if len(emphasized) < dsp.frame_len_samples(frame_ms, fs):
        raise ValueError(f"clip shorter than one {frame_ms:g} ms frame")
    seq = dsp.frame_signal(pre, frame_ms, frame_ms / 2.0)

    rms = np.sqrt(np.mean(seq.frames**2, axis=1))
    gate = rms >= _ENERGY_GATE * rms.max()

    freq_rows, bw_rows = [], []
    best_partial = 0
    for i, frame in enumerate(seq.frames):
        if not gate[i] or not _frame_is_voiced(frame, fs):
            continue
        freq, bw = _frame_candidates(frame, fs)
        if len(freq) >= N_FORMANTS:
            freq_rows.append(freq[:N_FORMANTS])
            bw_rows.append(bw[:N_FORMANTS])
        else:
            best_partial = max(best_partial, len(freq))

    if not freq_rows:
        raise PartialFormantError(best_partial)

    f_med = np.median(np.vstack(freq_rows), axis=0)
    bw_med = np.median(np.vstack(bw_rows), axis=0)
    return FormantSet(tuple(f_med), tuple(bw_med), len(freq_rows))
