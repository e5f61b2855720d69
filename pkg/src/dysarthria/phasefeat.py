"""Per-frame phase feature bank: 54 values per 20 ms frame.

Four 13-coefficient cepstra (unwrapped phase, group delay, modified group
delay, instantaneous-frequency deviation) plus two scalars (inter-frame
phase coherence and spectral entropy).  Frames are taken at 8 kHz with a
10 ms hop and utterances are fixed to a 500-row matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dysarthria.corpus import AudioClip
from dysarthria import dsp

SAMPLE_RATE_HZ = 8000
FRAME_MS = 20.0
HOP_MS = 10.0
N_FFT = 256
N_CEPSTRA = 13
FIXED_FRAME_COUNT = 500
FRAME_DIM = 4 * N_CEPSTRA + 2

MGD_ALPHA = 0.4
MGD_GAMMA = 0.9
MGD_LIFTER = 8

_HOP_LEN = int(round(HOP_MS * SAMPLE_RATE_HZ / 1000.0))

#: Column names for feature dumps, in to_array() order.
COLUMN_NAMES = tuple(
    [f"pcc_{i:02d}" for i in range(N_CEPSTRA)]
    + [f"gdcc_{i:02d}" for i in range(N_CEPSTRA)]
    + [f"mgd_{i:02d}" for i in range(N_CEPSTRA)]
    + [f"if_{i:02d}" for i in range(N_CEPSTRA)]
    + ["phase_coherence", "spectral_entropy"]
)


@dataclass(frozen=True)
class PhaseFrame:
    pcc: np.ndarray
    gdcc: np.ndarray
    mgd: np.ndarray
    inst_freq: np.ndarray
    phase_coherence: float
    spectral_entropy: float

    def to_array(self) -> np.ndarray:
        return np.concatenate(
            [
                self.pcc,
                self.gdcc,
                self.mgd,
                self.inst_freq,
                [self.phase_coherence, self.spectral_entropy],
            ]
        )


@dataclass(frozen=True)
class PhaseFrameMatrix:
    frames: np.ndarray  # (FIXED_FRAME_COUNT, FRAME_DIM)
    valid_frame_count: int

    def __post_init__(self):
        if self.frames.shape != (FIXED_FRAME_COUNT, FRAME_DIM):
            raise ValueError(f"matrix must be {FIXED_FRAME_COUNT}x{FRAME_DIM}")
        if np.any(self.frames[self.valid_frame_count :]):
            raise ValueError("padding rows must be exactly zero")


_ZERO_FRAME = None


def zero_phase_frame() -> PhaseFrame:
    """The all-zero frame used for silence (entropy 0 by convention)."""
    global _ZERO_FRAME
    if _ZERO_FRAME is None:
        z = np.zeros(N_CEPSTRA)
        _ZERO_FRAME = PhaseFrame(z, z, z, z, 0.0, 0.0)
    return _ZERO_FRAME


def group_delay_spectrum(frame, n_fft: int = N_FFT) -> np.ndarray:
    """tau(k) = (X_R Y_R + X_I Y_I) / (|X|^2 + eps), Y = DFT(n x[n]).

    For a pure delay (impulse at index d) this is d at every bin.
    """
    x = np.asarray(frame, dtype=np.float64)
    if not np.any(x):
        raise ValueError("all-zero frame")
    spec = np.fft.rfft(x, n_fft)
    ramp_spec = np.fft.rfft(np.arange(len(x)) * x, n_fft)
    power = np.abs(spec) ** 2
    eps = 1e-8 * power.max()
    return (spec.real * ramp_spec.real + spec.imag * ramp_spec.imag) / (power + eps)


def _smoothed_magnitude(spec: np.ndarray, n_fft: int, lifter_len: int) -> np.ndarray:
    """Cepstrally smoothed |X| via a low-time lifter of ``lifter_len`` bins."""
    mag = np.abs(spec)
    floor = 1e-10 * mag.max()
    log_mag = np.log(mag + floor)
    cep = np.fft.irfft(log_mag, n_fft)
    lifter = np.zeros(n_fft)
    lifter[:lifter_len] = 1.0
    if lifter_len > 1:
        lifter[-(lifter_len - 1) :] = 1.0  # symmetric counterpart
    smooth_log = np.fft.rfft(cep * lifter).real
    return np.exp(smooth_log)


def modified_group_delay(frame, n_fft: int = N_FFT, alpha: float = MGD_ALPHA,
                         gamma: float = MGD_GAMMA, lifter_len: int = MGD_LIFTER) -> np.ndarray:
    """Compressed group delay: sign(g) |g|^alpha, the |X|^2 denominator
    replaced by the cepstrally smoothed magnitude S^(2 gamma)."""
    if not 0.0 < alpha <= 1.0 or not 0.0 < gamma <= 1.0:
        raise ValueError("alpha and gamma must lie in (0, 1]")
    x = np.asarray(frame, dtype=np.float64)
    if not np.any(x):
        raise ValueError("all-zero frame")
    spec = np.fft.rfft(x, n_fft)
    ramp_spec = np.fft.rfft(np.arange(len(x)) * x, n_fft)
    smooth = _smoothed_magnitude(spec, n_fft, lifter_len)
    denom = smooth ** (2.0 * gamma)
    if not np.any(denom):
        raise ValueError("degenerate smoothed magnitude")
    numer = spec.real * ramp_spec.real + spec.imag * ramp_spec.imag
    g = numer / (denom + 1e-8 * denom.max())
    return np.sign(g) * np.abs(g) ** alpha


def spectrum_phase(frame, n_fft: int = N_FFT) -> np.ndarray:
    """Principal-value phase of the frame's half spectrum."""
    return np.angle(np.fft.rfft(np.asarray(frame, dtype=np.float64), n_fft))


def phase_frame(frame, prev_phase=None, n_fft: int = N_FFT,
                hop_len: int = _HOP_LEN, sample_rate_hz: int = SAMPLE_RATE_HZ) -> PhaseFrame:
    """All 54 phase features of one frame.

    ``prev_phase`` is the previous frame's half-spectrum phase; omit it for
    the first frame (the IF block is then zero).  All-zero frames return
    the zero PhaseFrame so silent padding stays silent.
    """
    x = np.asarray(frame, dtype=np.float64)
    if not np.any(x):
        return zero_phase_frame()

    spec = np.fft.rfft(x, n_fft)
    mag = np.abs(spec)
    phase = np.angle(spec)

    pcc = dsp.dct_ii(np.unwrap(phase), N_CEPSTRA)
    gdcc = dsp.dct_ii(group_delay_spectrum(x, n_fft), N_CEPSTRA)
    mgd = dsp.dct_ii(modified_group_delay(x, n_fft), N_CEPSTRA)

    n_bins = n_fft // 2 + 1
    if prev_phase is None:
        deviation = np.zeros(n_bins)
    else:
        expected = 2.0 * np.pi * np.arange(n_bins) * hop_len / n_fft
        raw = phase - np.asarray(prev_phase) - expected
        deviation = np.angle(np.exp(1j * raw))  # principal value
    if_hz = deviation * sample_rate_hz / (2.0 * np.pi * hop_len)
    inst_freq = dsp.dct_ii(if_hz, N_CEPSTRA)

    coherence = float(np.abs(np.mean(np.exp(1j * deviation))))
    power = mag**2
    total = power.sum()
    p = power / total
    nz = p > 0
    entropy = float(-np.sum(p[nz] * np.log(p[nz])))

    return PhaseFrame(pcc, gdcc, mgd, inst_freq, coherence, entropy)


def utterance_phase_matrix(clip: AudioClip) -> PhaseFrameMatrix:
    """Fixed 500x54 feature matrix for one utterance.

    The clip is resampled to 8 kHz and framed at 20/10 ms; the frame
    sequence is truncated or zero-padded to exactly 500 rows.
    """
    if len(clip) == 0:
        raise ValueError("empty clip")
    work = dsp.resample(clip, SAMPLE_RATE_HZ)
    frame_len = dsp.frame_len_samples(FRAME_MS, SAMPLE_RATE_HZ)

    matrix = np.zeros((FIXED_FRAME_COUNT, FRAME_DIM))
    if len(work) < frame_len:
        return PhaseFrameMatrix(matrix, 0)

    seq = dsp.frame_signal(work, FRAME_MS, HOP_MS)
    n_valid = min(len(seq.frames), FIXED_FRAME_COUNT)
    prev_phase = None
    for t in range(n_valid):
        frame = seq.frames[t]
        matrix[t] = phase_frame(frame, prev_phase).to_array()
        prev_phase = spectrum_phase(frame)
    return PhaseFrameMatrix(matrix, n_valid)
