"""Versioned binary persistence for trained hierarchy models.

Layout: magic, format version, a length-prefixed section per stage-1
model (spec fields + boosted trees), one for the stage-2 forest, then a
CRC32 of everything after the magic.  All integers and floats are
little-endian, so files are portable and byte-identical for identical
models.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from dysarthria.boost import DecisionForestClassifier, GradientBoostedTreesClassifier, TreeNode
from dysarthria.corpus import UtteranceKind
from dysarthria.hier import HierarchicalSeverityClassifier, Segment, StageOneSpec, Subgroup

MAGIC = b"DYSHIER\x01"
FORMAT_VERSION = 1

_SUBGROUP_CODES = {s: i for i, s in enumerate(Subgroup)}
_SEGMENT_CODES = {s: i for i, s in enumerate(Segment)}
_KIND_CODES = {k: i for i, k in enumerate(UtteranceKind)}


class ModelFormatError(ValueError):
    """Corrupt, truncated, or incompatible model file."""


def _pack(fmt, *values) -> bytes:
    return struct.pack("<" + fmt, *values)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt):
        size = struct.calcsize("<" + fmt)
        if self.pos + size > len(self.data):
            raise ModelFormatError("truncated model file")
        values = struct.unpack_from("<" + fmt, self.data, self.pos)
        self.pos += size
        return values if len(values) > 1 else values[0]


def _write_regression_tree(buf, node: TreeNode):
    if node.is_leaf:
        buf.write(_pack("Bd", 0, node.value))
    else:
        buf.write(_pack("BId", 1, node.feature, node.threshold))
        _write_regression_tree(buf, node.left)
        _write_regression_tree(buf, node.right)


def _read_regression_tree(r: _Reader) -> TreeNode:
    kind = r.take("B")
    if kind == 0:
        return TreeNode(value=r.take("d"))
    if kind != 1:
        raise ModelFormatError(f"bad tree node tag {kind}")
    feature, threshold = r.take("Id")
    left = _read_regression_tree(r)
    right = _read_regression_tree(r)
    return TreeNode(feature=feature, threshold=threshold, left=left, right=right)


def _write_class_tree(buf, node: TreeNode, n_classes: int):
    if node.is_leaf:
        buf.write(_pack("B", 0))
        buf.write(_pack(f"{n_classes}d", *node.class_counts))
    else:
        buf.write(_pack("BId", 1, node.feature, node.threshold))
        _write_class_tree(buf, node.left, n_classes)
        _write_class_tree(buf, node.right, n_classes)


def _read_class_tree(r: _Reader, n_classes: int) -> TreeNode:
    kind = r.take("B")
    if kind == 0:
        counts = np.array(r.take(f"{n_classes}d"), dtype=np.float64)
        return TreeNode(class_counts=counts)
    if kind != 1:
        raise ModelFormatError(f"bad tree node tag {kind}")
    feature, threshold = r.take("Id")
    left = _read_class_tree(r, n_classes)
    right = _read_class_tree(r, n_classes)
    return TreeNode(feature=feature, threshold=threshold, left=left, right=right)


def _spec_blob(spec: StageOneSpec) -> bytes:
    buf = io.BytesIO()
    buf.write(_pack("B", spec.model_id))
    buf.write(_pack("B", _SUBGROUP_CODES[spec.subgroup]))
    buf.write(_pack("B", len(spec.positive_classes)))
    buf.write(_pack(f"{len(spec.positive_classes)}B", *spec.positive_classes))
    buf.write(_pack("B", len(spec.negative_classes)))
    buf.write(_pack(f"{len(spec.negative_classes)}B", *spec.negative_classes))
    buf.write(_pack("B", _KIND_CODES[spec.sound]))
    buf.write(_pack("I", spec.n_estimators))
    buf.write(_pack("d", spec.frame_ms))
    buf.write(_pack("B", _SEGMENT_CODES[spec.segment]))
    return buf.getvalue()


def _read_spec(r: _Reader) -> StageOneSpec:
    model_id = r.take("B")
    subgroup = list(Subgroup)[r.take("B")]
    n_pos = r.take("B")
    pos = r.take(f"{n_pos}B")
    pos = (pos,) if n_pos == 1 else tuple(pos)
    n_neg = r.take("B")
    neg = r.take(f"{n_neg}B")
    neg = (neg,) if n_neg == 1 else tuple(neg)
    sound = list(UtteranceKind)[r.take("B")]
    n_estimators = r.take("I")
    frame_ms = r.take("d")
    segment = list(Segment)[r.take("B")]
    return StageOneSpec(model_id, subgroup, pos, neg, sound, n_estimators, frame_ms, segment)


def _gbm_blob(model: GradientBoostedTreesClassifier) -> bytes:
    buf = io.BytesIO()
    buf.write(_pack("dd", model.base_score_, model.learning_rate))
    buf.write(_pack("IIIq", model.n_features_in_, model.max_depth,
                    model.min_samples_leaf, model.seed))
    buf.write(_pack("I", len(model.trees_)))
    for tree in model.trees_:
        _write_regression_tree(buf, tree)
    return buf.getvalue()


def _read_gbm(r: _Reader) -> GradientBoostedTreesClassifier:
    base_score, learning_rate = r.take("dd")
    n_features, max_depth, min_leaf, seed = r.take("IIIq")
    n_trees = r.take("I")
    model = GradientBoostedTreesClassifier(
        n_estimators=n_trees, learning_rate=learning_rate,
        max_depth=max_depth, min_samples_leaf=min_leaf, seed=seed,
    )
    model.base_score_ = base_score
    model.n_features_in_ = n_features
    model.classes_ = np.array([0, 1])
    model.trees_ = [_read_regression_tree(r) for _ in range(n_trees)]
    return model


def _forest_blob(model: DecisionForestClassifier) -> bytes:
    buf = io.BytesIO()
    buf.write(_pack("IIIq", model.n_trees, model.max_depth, model.min_samples_leaf, model.seed))
    buf.write(_pack("I", model.n_features_in_))
    buf.write(_pack("B", len(model.classes_)))
    buf.write(_pack(f"{len(model.classes_)}B", *[int(c) for c in model.classes_]))
    for tree in model.trees_:
        _write_class_tree(buf, tree, len(model.classes_))
    return buf.getvalue()


def _read_forest(r: _Reader) -> DecisionForestClassifier:
    n_trees, max_depth, min_leaf, seed = r.take("IIIq")
    n_features = r.take("I")
    n_classes = r.take("B")
    classes = r.take(f"{n_classes}B")
    classes = (classes,) if n_classes == 1 else classes
    model = DecisionForestClassifier(
        n_trees=n_trees, max_depth=max_depth, min_samples_leaf=min_leaf, seed=seed
    )
    model.classes_ = np.array(classes, dtype=np.int64)
    model.n_features_in_ = n_features
    model.trees_ = [_read_class_tree(r, n_classes) for _ in range(n_trees)]
    return model


def _section(payload: bytes) -> bytes:
    return _pack("Q", len(payload)) + payload


def _read_section(r: _Reader) -> _Reader:
    length = r.take("Q")
    if r.pos + length > len(r.data):
        raise ModelFormatError("truncated model file")
    sub = _Reader(r.data[r.pos : r.pos + length])
    r.pos += length
    return sub


def save_hierarchy(model: HierarchicalSeverityClassifier, path) -> None:
    """Atomic write of a fitted hierarchy; identical models give identical bytes."""
    body = io.BytesIO()
    body.write(_pack("H", FORMAT_VERSION))
    body.write(_pack("B", len(model.stage1_models_)))
    body.write(_pack("B", 1 if model.evaluate_out_of_group else 0))
    for spec, gbm in zip(model.config_, model.stage1_models_):
        body.write(_section(_spec_blob(spec) + _gbm_blob(gbm)))
    body.write(_section(_forest_blob(model.stage2_)))
    payload = body.getvalue()
    blob = MAGIC + payload + _pack("I", zlib.crc32(payload))

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_hierarchy(path) -> HierarchicalSeverityClassifier:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 6 or data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a hierarchy model file (bad magic)")
    payload, crc_bytes = data[len(MAGIC) : -4], data[-4:]
    (expected_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) != expected_crc:
        raise ModelFormatError("model file corrupt (checksum mismatch)")

    r = _Reader(payload)
    version = r.take("H")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    n_models = r.take("B")
    out_of_group = bool(r.take("B"))

    config, stage1 = [], []
    for _ in range(n_models):
        section = _read_section(r)
        config.append(_read_spec(section))
        stage1.append(_read_gbm(section))
    stage2 = _read_forest(_read_section(r))

    model = HierarchicalSeverityClassifier(
        config=config, evaluate_out_of_group=out_of_group
    )
    model.config_ = config
    model.stage1_models_ = stage1
    model.stage2_ = stage2
    model.classes_ = stage2.classes_
    return model
