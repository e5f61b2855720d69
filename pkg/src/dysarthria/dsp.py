"""Shared signal-processing primitives.

Framing, STFT, silence trimming, autocorrelation pitch, Levinson-Durbin
LPC, orthonormal DCT-II, and band-limited resampling.  Everything here is
pure and reentrant; FFT/DCT/resampling lean on numpy/scipy, which are
deterministic for fixed input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct as _scipy_dct
from scipy.signal import resample_poly

from dysarthria.corpus import AudioClip

WINDOWS = {
    "hann": np.hanning,
    "hamming": np.hamming,
    "blackman": np.blackman,
    "rectangular": np.ones,
}


class AllSilentError(ValueError):
    """Raised when trimming finds no frame above the silence threshold."""


@dataclass(frozen=True)
class FrameSequence:
    frames: np.ndarray  # (n_frames, frame_len)
    frame_ms: float
    hop_ms: float
    sample_rate_hz: int

    @property
    def frame_len(self) -> int:
        return self.frames.shape[1]

    @property
    def hop_len(self) -> int:
        return int(round(self.hop_ms * self.sample_rate_hz / 1000.0))


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # (n_frames, n_bins), non-negative
    phases: np.ndarray  # same shape, principal values in (-pi, pi]
    n_fft: int
    sample_rate_hz: int

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def bin_spacing_hz(self) -> float:
        return self.sample_rate_hz / self.n_fft


@dataclass(frozen=True)
class LpcModel:
    """Forward linear predictor:  x_hat[n] = sum_k coefficients[k] * x[n-1-k].

    The inverse (prediction-error) filter is ``[1, -c_1, ..., -c_p]``.
    """

    order: int
    coefficients: np.ndarray
    gain: float
    reflection_coefficients: np.ndarray

    def error_filter(self) -> np.ndarray:
        return np.concatenate(([1.0], -self.coefficients))


def frame_len_samples(frame_ms: float, sample_rate_hz: int) -> int:
    return int(round(frame_ms * sample_rate_hz / 1000.0))


def frame_count(n_samples: int, frame_len: int, hop_len: int) -> int:
    return (n_samples - frame_len) // hop_len + 1


def frame_signal(clip: AudioClip, frame_ms: float, hop_ms: float) -> FrameSequence:
    """Slice into overlapping frames; the final partial frame is dropped."""
    fs = clip.sample_rate_hz
    frame_len = frame_len_samples(frame_ms, fs)
    hop_len = frame_len_samples(hop_ms, fs)
    if frame_len <= 0 or hop_len <= 0:
        raise ValueError("frame and hop must be positive")
    x = clip.samples
    if len(x) < frame_len:
        raise ValueError(f"clip of {len(x)} samples shorter than one {frame_len}-sample frame")
    n = frame_count(len(x), frame_len, hop_len)
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop_len][:n].copy()
    return FrameSequence(frames, frame_ms, hop_ms, fs)


def stft(clip: AudioClip, frame_ms: float, hop_ms: float, n_fft: int,
         window: str = "hamming") -> Spectrogram:
    """Per-frame windowed DFT; frames are zero-padded up to ``n_fft``."""
    if window not in WINDOWS:
        raise ValueError(f"unknown window {window!r}; choose from {sorted(WINDOWS)}")
    if n_fft & (n_fft - 1) or n_fft <= 0:
        raise ValueError("n_fft must be a power of two")
    seq = frame_signal(clip, frame_ms, hop_ms)
    if n_fft < seq.frame_len:
        raise ValueError(f"n_fft {n_fft} smaller than frame length {seq.frame_len}")
    win = WINDOWS[window](seq.frame_len)
    spec = np.fft.rfft(seq.frames * win, n_fft, axis=1)
    return Spectrogram(np.abs(spec), np.angle(spec), n_fft, clip.sample_rate_hz)


_TRIM_FRAME_MS = 20.0
_TRIM_HOP_MS = 10.0


def trim_silence(clip: AudioClip, threshold_db: float = -40.0,
                 min_voiced_ms: float = 30.0) -> AudioClip:
    """Cut leading/trailing silence.

    A frame counts as voiced when its RMS exceeds the peak frame RMS by
    ``threshold_db`` (negative); voiced runs shorter than ``min_voiced_ms``
    are ignored so isolated clicks cannot anchor the span.  Interior
    content is untouched and the operation is idempotent.
    """
    fs = clip.sample_rate_hz
    frame_len = frame_len_samples(_TRIM_FRAME_MS, fs)
    hop_len = frame_len_samples(_TRIM_HOP_MS, fs)
    x = clip.samples
    if len(x) < frame_len:
        frames = x[np.newaxis, :]
    else:
        n = frame_count(len(x), frame_len, hop_len)
        frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop_len][:n]
    rms = np.sqrt(np.mean(frames**2, axis=1))
    peak = rms.max()
    if peak <= 0:
        raise AllSilentError("no frame exceeds the silence threshold")
    voiced = rms > peak * 10.0 ** (threshold_db / 20.0)
    if not voiced.any():
        raise AllSilentError("no frame exceeds the silence threshold")

    min_run = max(1, int(math.ceil(min_voiced_ms / _TRIM_HOP_MS)))
    idx = np.flatnonzero(voiced)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    kept = [r for r in runs if len(r) >= min_run]
    if not kept:
        kept = [max(runs, key=len)]  # degenerate: keep the longest burst
    first, last = kept[0][0], kept[-1][-1]
    start = first * hop_len
    end = min(len(x), last * hop_len + frame_len)
    return AudioClip(x[start:end], fs)


def lpc(frame, order: int) -> LpcModel:
    """Levinson-Durbin solution of the autocorrelation normal equations."""
    x = np.asarray(frame, dtype=np.float64)
    if order >= len(x):
        raise ValueError("order must be smaller than the frame length")
    if not np.any(x):
        raise ValueError("singular autocorrelation: all-zero frame")
    # per-sample autocorrelation so gain reduces to RMS at order 0
    r = np.correlate(x, x, mode="full")[len(x) - 1 : len(x) + order] / len(x)

    a = np.zeros(order, dtype=np.float64)
    k = np.zeros(order, dtype=np.float64)
    energy = r[0]
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a[: i - 1], r[i - 1 : 0 : -1])
        ki = acc / energy
        k[i - 1] = ki
        a_prev = a[: i - 1].copy()
        a[i - 1] = ki
        a[: i - 1] = a_prev - ki * a_prev[::-1]
        energy *= 1.0 - ki * ki
        if energy <= 0:
            energy = 1e-12
    return LpcModel(order, a, math.sqrt(energy), k)


def dct_ii(values, n_out: int):
    """First ``n_out`` coefficients of the orthonormal DCT-II."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty input")
    if n_out > x.size:
        raise ValueError("n_out exceeds input length")
    return _scipy_dct(x, type=2, norm="ortho")[:n_out]


_PITCH_FRAME_MS = 40.0
_PITCH_HOP_MS = 20.0
_PERIODICITY_THRESHOLD = 0.5


def estimate_mean_pitch(clip: AudioClip, f_min: float = 60.0,
                        f_max: float = 400.0) -> float | None:
    """Mean autocorrelation pitch over voiced frames, or None if unvoiced.

    A frame is voiced when its normalized autocorrelation peak inside the
    lag band [fs/f_max, fs/f_min] clears 0.5; the lag is refined by
    parabolic interpolation.
    """
    fs = clip.sample_rate_hz
    if not 0 < f_min < f_max < fs / 2:
        raise ValueError("need 0 < f_min < f_max < Nyquist")
    frame_len = frame_len_samples(_PITCH_FRAME_MS, fs)
    x = clip.samples
    if len(x) < frame_len:
        frames = [x]
    else:
        hop = frame_len_samples(_PITCH_HOP_MS, fs)
        n = frame_count(len(x), frame_len, hop)
        frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop][:n]

    lag_lo = max(1, int(math.ceil(fs / f_max)))
    lag_hi = int(math.floor(fs / f_min))
    freqs = []
    for frame in frames:
        f = frame - np.mean(frame)
        r = np.correlate(f, f, mode="full")[len(f) - 1 :]
        if r[0] <= 0:
            continue
        hi = min(lag_hi, len(r) - 2)
        if hi < lag_lo:
            continue
        norm = r / r[0]
        lag = lag_lo + int(np.argmax(norm[lag_lo : hi + 1]))
        if norm[lag] < _PERIODICITY_THRESHOLD:
            continue
        # parabolic refinement around the peak
        y0, y1, y2 = norm[lag - 1], norm[lag], norm[lag + 1]
        denom = y0 - 2.0 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if abs(denom) > 1e-12 else 0.0
        freqs.append(fs / (lag + float(np.clip(shift, -0.5, 0.5))))
    if not freqs:
        return None
    return float(np.mean(freqs))


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Polyphase band-limited resampling; length = round(N * target / source)."""
    if target_rate_hz <= 0:
        raise ValueError("target rate must be positive")
    if target_rate_hz == clip.sample_rate_hz:
        return clip
    g = math.gcd(target_rate_hz, clip.sample_rate_hz)
    up, down = target_rate_hz // g, clip.sample_rate_hz // g
    y = resample_poly(clip.samples, up, down)
    want = int(round(len(clip.samples) * target_rate_hz / clip.sample_rate_hz))
    if len(y) > want:
        y = y[:want]
    elif len(y) < want:
        y = np.pad(y, (0, want - len(y)))
    return AudioClip(y, target_rate_hz)
