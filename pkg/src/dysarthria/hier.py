"""Two-stage hierarchical severity classifier.

Stage 1 is eight binary boosted-tree models, each specialized to a
demographic subgroup and one binary label split, fed by 12 acoustic
features (5 formants + 7 glottal parameters) from one designated
utterance.  Stage 2 is a bagged decision forest over the eight stage-1
probabilities plus encoded age and gender, producing the 5-class label.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from dysarthria.corpus import AudioClip, SpeakerRecord, UtteranceKind, N_CLASSES
from dysarthria.boost import DecisionForestClassifier, GradientBoostedTreesClassifier
from dysarthria.formant import estimate_formants
from dysarthria.glottal import detect_gci, extract_glottal_params

log = logging.getLogger(__name__)

N_ACOUSTIC_FEATURES = 12
N_STAGE2_INPUTS = 10  # 8 stage-1 probabilities + age_norm + gender_code

GENDER_CODE = {"F": 0.9, "M": 0.1}
AGE_SPLIT_YEARS = 60


class Subgroup(Enum):
    FEMALE = "F"
    MALE_UNDER_60 = "M<60"
    MALE_OVER_60 = "M>=60"
    ALL = "MF"

    def contains(self, record: SpeakerRecord) -> bool:
        if self is Subgroup.ALL:
            return True
        if self is Subgroup.FEMALE:
            return record.gender == "F"
        if record.gender != "M":
            return False
        if self is Subgroup.MALE_UNDER_60:
            return record.age_years < AGE_SPLIT_YEARS
        return record.age_years >= AGE_SPLIT_YEARS


class Segment(Enum):
    FULL = "full"
    INITIAL_20S = "initial20s"
    LATER_10S = "later10s"


@dataclass(frozen=True)
class StageOneSpec:
    """One stage-1 binary model: who it sees, what it separates, what it hears."""

    model_id: int
    subgroup: Subgroup
    positive_classes: tuple
    negative_classes: tuple
    sound: UtteranceKind
    n_estimators: int
    frame_ms: float
    segment: Segment

    def __post_init__(self):
        if set(self.positive_classes) & set(self.negative_classes):
            raise ValueError(f"model {self.model_id}: class sets overlap")

    @property
    def involved_classes(self) -> frozenset:
        return frozenset(self.positive_classes) | frozenset(self.negative_classes)


def default_hierarchy_config() -> list:
    """The eight standard stage-1 model definitions."""
    return [
        StageOneSpec(1, Subgroup.FEMALE, (3,), (4, 5), UtteranceKind.A, 200, 100.0, Segment.FULL),
        StageOneSpec(2, Subgroup.FEMALE, (4,), (5,), UtteranceKind.KA, 100, 100.0, Segment.INITIAL_20S),
        StageOneSpec(3, Subgroup.MALE_UNDER_60, (3,), (4, 5), UtteranceKind.U, 100, 50.0, Segment.LATER_10S),
        StageOneSpec(4, Subgroup.MALE_UNDER_60, (4,), (5,), UtteranceKind.O, 100, 500.0, Segment.FULL),
        StageOneSpec(5, Subgroup.MALE_OVER_60, (3,), (4, 5), UtteranceKind.E, 200, 100.0, Segment.INITIAL_20S),
        StageOneSpec(6, Subgroup.MALE_OVER_60, (4,), (5,), UtteranceKind.I, 100, 100.0, Segment.INITIAL_20S),
        StageOneSpec(7, Subgroup.ALL, (1,), (2,), UtteranceKind.I, 100, 50.0, Segment.FULL),
        StageOneSpec(8, Subgroup.ALL, (1,), (2,), UtteranceKind.U, 100, 50.0, Segment.FULL),
    ]


@dataclass(frozen=True)
class SpeakerFeatureVector:
    """5 formants + 7 glottal parameters + age/gender encodings (14 values).

    ``segment_fallback`` flags that the requested audio segment was too
    short and the full clip was used instead; it is metadata, not a feature.
    """

    formants_hz: tuple
    glottal: tuple
    age_norm: float
    gender_code: float
    segment_fallback: bool = False

    def acoustic_array(self) -> np.ndarray:
        return np.concatenate([self.formants_hz, self.glottal])

    def to_array(self) -> np.ndarray:
        out = np.concatenate([self.formants_hz, self.glottal, [self.age_norm, self.gender_code]])
        if out.shape != (14,) or not np.all(np.isfinite(out)):
            raise ValueError("feature vector must hold 14 finite values")
        return out


def encode_age(age_years: int) -> float:
    return float(np.clip(age_years / 100.0, 0.0, 1.0))


def _apply_segment(clip: AudioClip, segment: Segment):
    """Returns (windowed clip, fell_back_to_full)."""
    fs = clip.sample_rate_hz
    if segment is Segment.FULL:
        return clip, False
    if segment is Segment.INITIAL_20S:
        end = min(len(clip), 20 * fs)
        return AudioClip(clip.samples[:end], fs), False
    start = 20 * fs
    if len(clip) <= start:
        log.warning("clip too short for %s window, using full clip", segment.value)
        return clip, True
    return AudioClip(clip.samples[start : start + 10 * fs], fs), False


def build_feature_vector(record: SpeakerRecord, spec: StageOneSpec) -> SpeakerFeatureVector:
    """Extract spec's designated utterance into the 14-value feature vector."""
    if spec.sound not in record.utterances:
        raise ValueError(
            f"speaker {record.speaker_id} lacks utterance {spec.sound.value} for model {spec.model_id}"
        )
    clip, fell_back = _apply_segment(record.utterances[spec.sound], spec.segment)
    formants = estimate_formants(clip, spec.frame_ms)
    glottal = extract_glottal_params(detect_gci(clip), clip)
    return SpeakerFeatureVector(
        formants_hz=tuple(formants.f_hz),
        glottal=tuple(glottal.to_array()),
        age_norm=encode_age(record.age_years),
        gender_code=GENDER_CODE[record.gender],
        segment_fallback=fell_back,
    )


def _extraction_key(spec: StageOneSpec):
    # distinct specs can share audio + settings; cache on what matters
    return (spec.sound, spec.frame_ms, spec.segment)


class HierarchicalSeverityClassifier(BaseEstimator, ClassifierMixin):
    """Demographic-routed two-stage classifier over :class:`SpeakerRecord` lists.

    ``fit`` trains each stage-1 model on its subgroup/label subset with
    inverse-frequency sample weights, then trains the stage-2 forest on all
    speakers using the eight stage-1 probabilities (evaluated on every
    speaker when ``evaluate_out_of_group``) plus the demographic encodings.
    """

    def __init__(self, config=None, learning_rate=0.01, stage1_max_depth=3,
                 stage2_trees=100, stage2_depth=5, seed=0,
                 evaluate_out_of_group=True, tie_policy="severe", stage2_fusion="majority"):
        self.config = config
        self.learning_rate = learning_rate
        self.stage1_max_depth = stage1_max_depth
        self.stage2_trees = stage2_trees
        self.stage2_depth = stage2_depth
        self.seed = seed
        self.evaluate_out_of_group = evaluate_out_of_group
        self.tie_policy = tie_policy
        self.stage2_fusion = stage2_fusion

    # -- feature plumbing --------------------------------------------------

    def _features(self, records, config):
        """Per-record feature vectors for every distinct extraction setting."""
        cache = {}
        fallbacks = 0
        for spec in config:
            key = _extraction_key(spec)
            if key in cache:
                continue
            vectors = []
            for record in records:
                vec = build_feature_vector(record, spec)
                fallbacks += vec.segment_fallback
                vectors.append(vec)
            cache[key] = vectors
        self.segment_fallback_count_ = fallbacks
        return cache

    def _stage1_matrix(self, records, config, models, cache):
        """(n, 10) stage-2 inputs: 8 probabilities + age + gender."""
        inputs = np.zeros((len(records), N_STAGE2_INPUTS))
        for col, (spec, model) in enumerate(zip(config, models)):
            rows = np.vstack([v.acoustic_array() for v in cache[_extraction_key(spec)]])
            inputs[:, col] = model.predict_proba(rows)[:, 1]
        inputs[:, 8] = [encode_age(r.age_years) for r in records]
        inputs[:, 9] = [GENDER_CODE[r.gender] for r in records]
        return inputs

    # -- estimator API -----------------------------------------------------

    def fit(self, records, y=None):
        records = list(records)
        config = list(self.config) if self.config is not None else default_hierarchy_config()
        if y is None:
            labels = np.array([r.severity_label for r in records])
        else:
            labels = np.asarray(y)
        if any(lab is None for lab in labels):
            raise ValueError("every training record needs a severity label")
        labels = labels.astype(np.int64)
        for c in range(1, N_CLASSES + 1):
            if not np.any(labels == c):
                raise ValueError(f"class {c} missing from training data")

        cache = self._features(records, config)
        self.config_ = config
        self.stage1_models_ = []
        for spec in config:
            in_group = [
                i for i, rec in enumerate(records)
                if spec.subgroup.contains(rec) and labels[i] in spec.involved_classes
            ]
            if not in_group:
                raise ValueError(f"model {spec.model_id}: empty training subset")
            vectors = cache[_extraction_key(spec)]
            X = np.vstack([vectors[i].acoustic_array() for i in in_group])
            y_bin = np.array([1 if labels[i] in spec.positive_classes else 0 for i in in_group])
            if len(np.unique(y_bin)) < 2:
                raise ValueError(
                    f"model {spec.model_id}: subset lacks one side of the {spec.positive_classes}"
                    f" vs {spec.negative_classes} split"
                )
            # inverse-frequency weights within the binary subset
            n_pos = int(y_bin.sum())
            n_neg = len(y_bin) - n_pos
            w_pos = len(y_bin) / (2.0 * n_pos)
            w_neg = len(y_bin) / (2.0 * n_neg)
            weights = np.where(y_bin == 1, w_pos, w_neg)
            model = GradientBoostedTreesClassifier(
                n_estimators=spec.n_estimators,
                learning_rate=self.learning_rate,
                max_depth=self.stage1_max_depth,
                seed=_derived_seed(self.seed, f"stage1:{spec.model_id}"),
            )
            model.fit(X, y_bin, sample_weight=weights)
            self.stage1_models_.append(model)

        if not self.evaluate_out_of_group:
            log.warning("evaluate_out_of_group=False: out-of-subgroup probabilities zeroed")
        stage2_X = self._stage1_matrix(records, config, self.stage1_models_, cache)
        if not self.evaluate_out_of_group:
            for col, spec in enumerate(config):
                mask = np.array([not spec.subgroup.contains(r) for r in records])
                stage2_X[mask, col] = 0.0
        self.stage2_ = DecisionForestClassifier(
            n_trees=self.stage2_trees,
            max_depth=self.stage2_depth,
            seed=_derived_seed(self.seed, "stage2"),
            fusion=self.stage2_fusion,
            tie_policy=self.tie_policy,
        )
        self.stage2_.fit(stage2_X, labels)
        self.classes_ = self.stage2_.classes_
        return self

    def stage2_inputs(self, records) -> np.ndarray:
        """The (n, 10) stage-2 input matrix for ``records``."""
        records = list(records)
        cache = self._features(records, self.config_)
        inputs = self._stage1_matrix(records, self.config_, self.stage1_models_, cache)
        if not self.evaluate_out_of_group:
            for col, spec in enumerate(self.config_):
                mask = np.array([not spec.subgroup.contains(r) for r in records])
                inputs[mask, col] = 0.0
        return inputs

    def predict(self, records) -> np.ndarray:
        return self.stage2_.predict(self.stage2_inputs(records))

    def predict_record(self, record):
        """One speaker: (label, the 8 stage-1 probabilities)."""
        inputs = self.stage2_inputs([record])
        label = int(self.stage2_.predict(inputs)[0])
        return label, inputs[0, :8]

    def training_summary(self, records, y=None) -> list:
        """Per-model training accuracies, for log output."""
        records = list(records)
        labels = np.array([r.severity_label for r in records]) if y is None else np.asarray(y)
        cache = self._features(records, self.config_)
        rows = []
        for spec, model in zip(self.config_, self.stage1_models_):
            idx = [
                i for i, rec in enumerate(records)
                if spec.subgroup.contains(rec) and labels[i] in spec.involved_classes
            ]
            if not idx:
                continue
            vectors = cache[_extraction_key(spec)]
            X = np.vstack([vectors[i].acoustic_array() for i in idx])
            y_bin = np.array([1 if labels[i] in spec.positive_classes else 0 for i in idx])
            acc = float(np.mean(model.predict(X) == y_bin))
            rows.append((spec.model_id, len(idx), acc))
        return rows


def _derived_seed(seed: int, name: str) -> int:
    """Stable sub-seed from (seed, component name); never Python's hash()."""
    import zlib

    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


# --------------------------------------------------------------------------
# Config file round trip (columns mirror the stage-1 definition table)
# --------------------------------------------------------------------------

CONFIG_COLUMNS = (
    "model_id",
    "group",
    "positive",
    "negative",
    "sound",
    "n_estimators",
    "frame_ms",
    "segment",
)


def save_config(config, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CONFIG_COLUMNS)
        for spec in config:
            writer.writerow(
                [
                    spec.model_id,
                    spec.subgroup.value,
                    "|".join(str(c) for c in spec.positive_classes),
                    "|".join(str(c) for c in spec.negative_classes),
                    spec.sound.value,
                    spec.n_estimators,
                    f"{spec.frame_ms:g}",
                    spec.segment.value,
                ]
            )


def load_config(path) -> list:
    path = Path(path)
    specs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row_num, row in enumerate(reader, start=1):
            try:
                specs.append(
                    StageOneSpec(
                        model_id=int(row["model_id"]),
                        subgroup=Subgroup(row["group"]),
                        positive_classes=tuple(int(c) for c in row["positive"].split("|")),
                        negative_classes=tuple(int(c) for c in row["negative"].split("|")),
                        sound=UtteranceKind(row["sound"]),
                        n_estimators=int(row["n_estimators"]),
                        frame_ms=float(row["frame_ms"]),
                        segment=Segment(row["segment"]),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"config row {row_num}: {exc}") from exc
    ids = [s.model_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate model ids in config")
    return specs
