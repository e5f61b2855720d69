"""Speaker corpus handling.

Covers manifest I/O, per-class sample weights, and a deterministic
source-filter speech synthesizer.  The synthesizer exists so that every
downstream extractor (pitch, glottal pulses, formants) can be tested
against ground truth that is known by construction: excitation impulse
times, perturbation levels, and resonator frequencies are all chosen
explicitly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter


class UtteranceKind(Enum):
    """The eight recorded utterance types plus the concatenated form."""

    A = "A"
    E = "E"
    I = "I"
    O = "O"
    U = "U"
    KA = "KA"
    PA = "PA"
    TA = "TA"
    COMBINED = "C+"


#: Kinds a speaker actually records; COMBINED only ever arises by concatenation.
RECORDED_KINDS = tuple(k for k in UtteranceKind if k is not UtteranceKind.COMBINED)

VOWEL_KINDS = (
    UtteranceKind.A,
    UtteranceKind.E,
    UtteranceKind.I,
    UtteranceKind.O,
    UtteranceKind.U,
)

N_CLASSES = 5


class ManifestError(ValueError):
    """Raised for malformed manifest rows; carries row number and field."""

    def __init__(self, row, fieldname, message):
        self.row = row
        self.field = fieldname
        super().__init__(f"manifest row {row}, field '{fieldname}': {message}")


@dataclass(frozen=True)
class AudioClip:
    """Mono audio: float samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("clip must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("clip contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SpeakerRecord:
    """One speaker: demographics, optional severity label, eight utterances."""

    speaker_id: str
    age_years: int
    gender: str  # "F" or "M"
    severity_label: int | None
    utterances: dict

    def __post_init__(self):
        if self.age_years <= 0:
            raise ValueError(f"speaker {self.speaker_id}: age must be positive")
        if self.gender not in ("F", "M"):
            raise ValueError(f"speaker {self.speaker_id}: gender must be 'F' or 'M'")
        if self.severity_label is not None and not 1 <= self.severity_label <= N_CLASSES:
            raise ValueError(
                f"speaker {self.speaker_id}: label {self.severity_label} outside 1..{N_CLASSES}"
            )
        if set(self.utterances) != set(RECORDED_KINDS):
            raise ValueError(
                f"speaker {self.speaker_id}: needs exactly the 8 recorded utterance kinds"
            )


@dataclass(frozen=True)
class ClassWeights:
    """Per-class sample weights, index 0 holds class 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.shape != (N_CLASSES,) or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("need 5 finite positive weights")

    def for_label(self, label: int) -> float:
        return float(self.weights[label - 1])


@dataclass(frozen=True)
class SynthesisProfile:
    """Parameters of one synthetic utterance.

    ``gate_rate_hz`` > 0 turns the excitation into syllable-like bursts
    (used for the KA/PA/TA rhythms); 0 produces a sustained phonation.
    ``aspiration_level`` adds turbulence noise after the glottal tilt,
    filling the spectrum between harmonics; without it, high-pitched
    voices sample narrow formants too sparsely for LPC analysis to
    resolve them.
    """

    f0_hz: float
    jitter_pct: float
    shimmer_pct: float
    formants_hz: tuple
    formant_bandwidths_hz: tuple
    duration_s: float
    sample_rate_hz: int
    gate_rate_hz: float = 0.0
    aspiration_level: float = 0.04

    def __post_init__(self):
        if not 60.0 <= self.f0_hz <= 400.0:
            raise ValueError("f0 must lie in [60, 400] Hz")
        if self.jitter_pct < 0 or self.shimmer_pct < 0:
            raise ValueError("jitter/shimmer must be non-negative")
        f = np.asarray(self.formants_hz, dtype=np.float64)
        bw = np.asarray(self.formant_bandwidths_hz, dtype=np.float64)
        if f.shape != (5,) or bw.shape != (5,):
            raise ValueError("need exactly 5 formants and 5 bandwidths")
        if np.any(np.diff(f) <= 0):
            raise ValueError("formants must be strictly ascending")
        if f[-1] >= self.sample_rate_hz / 2:
            raise ValueError("formant above Nyquist")
        if np.any(bw <= 0):
            raise ValueError("bandwidths must be positive")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("duration and sample rate must be positive")


def compute_class_weights(labels) -> ClassWeights:
    """Inverse-frequency weights, normalized so balanced data gives 1.0.

    weight_c = N_total / (5 * n_c).  Every class must be present.
    """
    labels = list(labels)
    counts = np.zeros(N_CLASSES, dtype=np.int64)
    for lab in labels:
        if not 1 <= lab <= N_CLASSES:
            raise ValueError(f"label {lab} outside 1..{N_CLASSES}")
        counts[lab - 1] += 1
    for c in range(N_CLASSES):
        if counts[c] == 0:
            raise ValueError(f"class {c + 1} absent from labels")
    weights = len(labels) / (N_CLASSES * counts.astype(np.float64))
    return ClassWeights(weights)


# --------------------------------------------------------------------------
# Synthesis
# --------------------------------------------------------------------------

#: Severity class -> source perturbation anchors (class 5 = cleanest voice).
CLASS_JITTER_PCT = {1: 4.0, 2: 2.5, 3: 1.5, 4: 0.8, 5: 0.3}
CLASS_SHIMMER_PCT = {1: 10.0, 2: 7.0, 3: 4.0, 4: 2.0, 5: 1.0}
#: Vowel-space reduction anchors: how far each class's formant targets
#: collapse toward a neutral (schwa-like) vocal tract.
CLASS_CENTRALIZATION = {1: 0.55, 2: 0.41, 3: 0.28, 4: 0.14, 5: 0.0}
NEUTRAL_FORMANTS_HZ = (500.0, 1500.0, 2500.0, 3400.0, 3950.0)

#: Speakers are drawn from a continuous severity latent centred on their
#: class (class +- CLASS_WIDTH) and every voice parameter adds its own
#: independent noise.  No single feature separates adjacent classes, but
#: jointly they do, the way real pathological-voice data behaves.  With
#: per-feature separability the boosted stage-1 models degenerate into
#: single-threshold classifiers whose saturated outputs cannot express
#: anything between class signatures.
CLASS_WIDTH = 0.2
JITTER_NOISE_SIGMA = 0.12
SHIMMER_NOISE_SIGMA = 0.15
CENTRALIZATION_NOISE_SIGMA = 0.02
MAX_JITTER_PCT = 4.5  # extraction quality degrades beyond this
MAX_SHIMMER_PCT = 12.0

#: Per-utterance random scaling of the formant targets, in percent.
CLASS_FORMANT_INSTABILITY_PCT = {1: 3.5, 2: 2.5, 3: 1.5, 4: 0.8, 5: 0.4}


def _severity_interp(table: dict, s: float) -> float:
    """Log-space interpolation of a class-anchored parameter table."""
    classes = np.arange(1.0, 6.0)
    values = np.log([table[c] for c in range(1, 6)])
    return float(np.exp(np.interp(s, classes, values)))

#: Resonator targets per utterance kind (male-range values, Hz).
KIND_FORMANTS_HZ = {
    UtteranceKind.A: (700.0, 1220.0, 2600.0, 3200.0, 3700.0),
    UtteranceKind.E: (530.0, 1840.0, 2480.0, 3300.0, 3850.0),
    UtteranceKind.I: (300.0, 2300.0, 3000.0, 3400.0, 3900.0),
    UtteranceKind.O: (570.0, 840.0, 2410.0, 3250.0, 3750.0),
    UtteranceKind.U: (440.0, 1020.0, 2240.0, 3050.0, 3600.0),
    # Rhythms use a neutral vocal-tract shape; gating supplies the rhythm.
    UtteranceKind.KA: (620.0, 1660.0, 2430.0, 3250.0, 3800.0),
    UtteranceKind.PA: (660.0, 1400.0, 2500.0, 3300.0, 3800.0),
    UtteranceKind.TA: (640.0, 1550.0, 2560.0, 3200.0, 3850.0),
}

KIND_GATE_RATE_HZ = {UtteranceKind.KA: 2.5, UtteranceKind.PA: 3.0, UtteranceKind.TA: 3.5}

FORMANT_BANDWIDTHS_HZ = (60.0, 90.0, 120.0, 160.0, 200.0)

SYNTH_SAMPLE_RATE = 16000

#: Glottal source rolloff pole, specified at a 10 kHz reference rate so the
#: continuous-time tilt matches a 0.97 pre-emphasis zero at 10 kHz exactly;
#: gives the voice the -6 dB/oct rolloff analyzers expect to undo.
SOURCE_TILT_10K = 0.97


def source_tilt(sample_rate_hz: int) -> float:
    return SOURCE_TILT_10K ** (10000.0 / sample_rate_hz)

_GATE_DUTY = 0.6  # voiced fraction of each syllable cycle


def excitation_train(profile: SynthesisProfile, seed: int = 0):
    """Ground-truth glottal excitation for ``profile``.

    Returns ``(indices, amplitudes)``: impulse sample positions and their
    per-pulse amplitudes.  With zero jitter the spacing is exactly
    ``round(fs / f0)`` samples so tests can assert impulse times directly.
    """
    rng = np.random.default_rng(seed)
    fs = profile.sample_rate_hz
    n_samples = int(round(profile.duration_s * fs))
    base_period = round(fs / profile.f0_hz)

    indices, amps = [], []
    pos = 0.0
    while int(round(pos)) < n_samples:
        idx = int(round(pos))
        indices.append(idx)
        # clip perturbations at 3 sigma so periods/amplitudes stay positive
        shim = 1.0 + profile.shimmer_pct / 100.0 * float(np.clip(rng.standard_normal(), -3, 3))
        amps.append(max(shim, 0.05))
        jit = 1.0 + profile.jitter_pct / 100.0 * float(np.clip(rng.standard_normal(), -3, 3))
        pos += base_period * jit

    indices = np.asarray(indices, dtype=np.int64)
    amps = np.asarray(amps, dtype=np.float64)

    if profile.gate_rate_hz > 0:
        # syllable gating: keep pulses in the voiced part of each cycle
        phase = (indices / fs * profile.gate_rate_hz) % 1.0
        keep = phase < _GATE_DUTY
        indices, amps = indices[keep], amps[keep]
    return indices, amps


def synthesize_utterance(profile: SynthesisProfile, seed: int = 0) -> AudioClip:
    """Render ``profile`` to audio.

    Jittered impulse train, shaped by the glottal tilt pole, plus
    aspiration noise, then the all-pole resonator cascade;
    peak-normalized to 0.9.  The aspiration stream is seeded separately
    so :func:`excitation_train` with the same seed stays the oracle for
    the impulse times.
    """
    fs = profile.sample_rate_hz
    n_samples = int(round(profile.duration_s * fs))
    indices, amps = excitation_train(profile, seed)

    x = np.zeros(n_samples, dtype=np.float64)
    x[indices] = amps
    x = lfilter([1.0], [1.0, -source_tilt(fs)], x)
    if profile.aspiration_level > 0:
        noise_rng = np.random.default_rng([seed, 1])
        x += profile.aspiration_level * noise_rng.standard_normal(n_samples)
    for f, bw in zip(profile.formants_hz, profile.formant_bandwidths_hz):
        r = math.exp(-math.pi * bw / fs)
        theta = 2.0 * math.pi * f / fs
        x = lfilter([1.0], [1.0, -2.0 * r * math.cos(theta), r * r], x)

    peak = np.max(np.abs(x))
    if peak > 0:
        x *= 0.9 / peak
    return AudioClip(x, fs)


def _speaker_traits(index: int, seed: int):
    """Deterministic demographics for corpus speaker ``index``."""
    rng = np.random.default_rng([seed, index, 0xD0])
    slot = index % 3  # cycle F / younger M / older M so every subgroup fills
    if slot == 0:
        gender = "F"
        age = int(rng.integers(35, 80))
        f0 = float(rng.uniform(170.0, 215.0))
        formant_scale = 1.08  # shorter vocal tract
    else:
        gender = "M"
        age = int(rng.integers(35, 59)) if slot == 1 else int(rng.integers(60, 85))
        f0 = float(rng.uniform(95.0, 135.0))
        formant_scale = 1.0
    return gender, age, f0, formant_scale


def build_speaker_profiles(n_per_class: int, seed: int):
    """Plan a synthetic corpus without rendering audio.

    Returns a list of ``(speaker_id, age, gender, label, {kind: profile})``
    in the same order :func:`synthesize_corpus` emits records, so oracle
    tests can inspect the exact generator parameters.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    plans = []
    index = 0
    for label in range(1, N_CLASSES + 1):
        for _ in range(n_per_class):
            gender, age, f0, scale = _speaker_traits(index, seed)
            rng = np.random.default_rng([seed, index, 0xF0])
            s = float(np.clip(label + rng.uniform(-CLASS_WIDTH, CLASS_WIDTH), 1.0, 5.0))
            noise = np.clip(rng.standard_normal(3), -2, 2)
            jitter = min(
                MAX_JITTER_PCT,
                _severity_interp(CLASS_JITTER_PCT, s) * math.exp(JITTER_NOISE_SIGMA * noise[0]),
            )
            shimmer = min(
                MAX_SHIMMER_PCT,
                _severity_interp(CLASS_SHIMMER_PCT, s) * math.exp(SHIMMER_NOISE_SIGMA * noise[1]),
            )
            central_anchor = np.interp(
                s, np.arange(1.0, 6.0), [CLASS_CENTRALIZATION[c] for c in range(1, 6)]
            )
            central = float(
                np.clip(central_anchor + CENTRALIZATION_NOISE_SIGMA * noise[2], 0.0, 0.8)
            )
            profiles = {}
            for kind in RECORDED_KINDS:
                kind_f = np.asarray(KIND_FORMANTS_HZ[kind])
                neutral = np.asarray(NEUTRAL_FORMANTS_HZ)
                base = ((1.0 - central) * kind_f + central * neutral) * scale
                wobble = 1.0 + CLASS_FORMANT_INSTABILITY_PCT[label] / 100.0 * float(
                    np.clip(rng.standard_normal(), -2, 2)
                )
                shifted = np.sort(base * wobble)
                # keep every resonance clear of the 10 kHz analysis band edge
                # (anti-alias rolloff starts near 4.5 kHz) and far enough from
                # its neighbour that an order-12 fit resolves both
                for slot in range(4, -1, -1):
                    ceiling = 4250.0 - 550.0 * (4 - slot)
                    shifted[slot] = min(shifted[slot], ceiling)
                formants = tuple(shifted)
                gate = KIND_GATE_RATE_HZ.get(kind, 0.0)
                duration = float(rng.uniform(2.2, 2.5)) if gate == 0 else float(rng.uniform(2.2, 2.6))
                profiles[kind] = SynthesisProfile(
                    f0_hz=f0 * (1.0 + 0.02 * float(rng.standard_normal())),
                    jitter_pct=jitter,
                    shimmer_pct=shimmer,
                    formants_hz=formants,
                    formant_bandwidths_hz=FORMANT_BANDWIDTHS_HZ,
                    duration_s=duration,
                    sample_rate_hz=SYNTH_SAMPLE_RATE,
                    gate_rate_hz=gate,
                )
            plans.append((f"S{index:04d}", age, gender, label, profiles))
            index += 1
    return plans


def utterance_seed(seed: int, speaker_index: int, kind: UtteranceKind) -> int:
    """Stable per-utterance seed so rendering order never matters."""
    kind_idx = list(UtteranceKind).index(kind)
    return int(np.random.SeedSequence([seed, speaker_index, kind_idx]).generate_state(1)[0])


def synthesize_corpus(n_per_class: int, seed: int):
    """Generate ``5 * n_per_class`` labeled speakers.

    Severity class c maps to monotonically worse jitter/shimmer/formant
    instability (class 5 cleanest); each speaker gets the 8 utterance kinds
    with vowel-specific resonators and gated trains for the rhythms.
    Deterministic per (seed, speaker index) regardless of scheduling.
    """
    records = []
    for index, (speaker_id, age, gender, label, profiles) in enumerate(
        build_speaker_profiles(n_per_class, seed)
    ):
        utterances = {
            kind: synthesize_utterance(profile, utterance_seed(seed, index, kind))
            for kind, profile in profiles.items()
        }
        records.append(SpeakerRecord(speaker_id, age, gender, label, utterances))
    return records


def concat_utterances(record: SpeakerRecord, order) -> AudioClip:
    """Concatenate the record's clips in ``order`` into one waveform."""
    clips = []
    for kind in order:
        if kind not in record.utterances:
            raise ValueError(f"utterance {kind.value} missing from record {record.speaker_id}")
        clips.append(record.utterances[kind])
    rates = {c.sample_rate_hz for c in clips}
    if len(rates) != 1:
        raise ValueError(f"mismatched sample rates: {sorted(rates)}")
    return AudioClip(np.concatenate([c.samples for c in clips]), rates.pop())


#: Default concatenation order for the combined utterance.
COMBINED_ORDER = (
    UtteranceKind.A,
    UtteranceKind.E,
    UtteranceKind.I,
    UtteranceKind.O,
    UtteranceKind.U,
    UtteranceKind.KA,
    UtteranceKind.TA,
    UtteranceKind.PA,
)


# --------------------------------------------------------------------------
# Manifest I/O
# --------------------------------------------------------------------------

MANIFEST_COLUMNS = (
    "speaker_id",
    "age",
    "gender",
    "label",
    "path_A",
    "path_E",
    "path_I",
    "path_O",
    "path_U",
    "path_KA",
    "path_PA",
    "path_TA",
)


def _read_wav(path: Path) -> AudioClip:
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError("only mono WAV supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise ValueError(f"unsupported WAV encoding {data.dtype}")
    return AudioClip(samples, int(rate))


def write_wav(path, clip: AudioClip) -> None:
    """Persist as 16-bit PCM mono."""
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, clip.sample_rate_hz, pcm)


def load_manifest(path) -> list:
    """Read a manifest CSV and decode every referenced WAV.

    Audio paths are resolved relative to the manifest's directory.  Any
    malformed value raises :class:`ManifestError` naming the row (1-based,
    header excluded) and field.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.parent
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(MANIFEST_COLUMNS) - set(reader.fieldnames):
            missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
            raise ManifestError(0, ",".join(sorted(missing)), "missing manifest columns")
        for row_num, row in enumerate(reader, start=1):
            speaker_id = (row.get("speaker_id") or "").strip()
            if not speaker_id:
                raise ManifestError(row_num, "speaker_id", "empty speaker id")
            try:
                age = int(row["age"])
                if age <= 0:
                    raise ValueError
            except (ValueError, TypeError):
                raise ManifestError(row_num, "age", f"bad age {row.get('age')!r}") from None
            gender = (row.get("gender") or "").strip().upper()
            if gender not in ("F", "M"):
                raise ManifestError(row_num, "gender", f"bad gender {row.get('gender')!r}")
            raw_label = (row.get("label") or "").strip()
            label = None
            if raw_label:
                try:
                    label = int(raw_label)
                except ValueError:
                    raise ManifestError(row_num, "label", f"bad label {raw_label!r}") from None
                if not 1 <= label <= N_CLASSES:
                    raise ManifestError(row_num, "label", f"label {label} outside 1..{N_CLASSES}")
            utterances = {}
            for kind in RECORDED_KINDS:
                fieldname = f"path_{kind.value}"
                rel = (row.get(fieldname) or "").strip()
                if not rel:
                    raise ManifestError(row_num, fieldname, "empty audio path")
                wav_path = base / rel
                if not wav_path.exists():
                    raise ManifestError(row_num, fieldname, f"audio file missing: {wav_path}")
                try:
                    utterances[kind] = _read_wav(wav_path)
                except Exception as exc:
                    raise ManifestError(row_num, fieldname, f"cannot decode: {exc}") from exc
            records.append(SpeakerRecord(speaker_id, age, gender, label, utterances))
    return records


def save_corpus(records, out_dir) -> Path:
    """Write WAV files plus ``manifest.csv`` under ``out_dir``; returns the
    manifest path.  Round-trips through :func:`load_manifest`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for rec in records:
            row = [
                rec.speaker_id,
                str(rec.age_years),
                rec.gender,
                "" if rec.severity_label is None else str(rec.severity_label),
            ]
            for kind in RECORDED_KINDS:
                rel = f"{rec.speaker_id}_{kind.value}.wav"
                write_wav(out_dir / rel, rec.utterances[kind])
                row.append(rel)
            writer.writerow(row)
    return manifest
