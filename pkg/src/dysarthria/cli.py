"""Command-line pipeline: synth -> extract -> train -> predict -> evaluate.

Every command is deterministic given its inputs and --seed; primary
outputs are written atomically (temp file + rename) so reruns either
reproduce a file byte-for-byte or leave it untouched on failure.
Set DYS_LOG=DEBUG|INFO|WARNING to control verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from pathlib import Path

from dysarthria import corpus, glottal, hier, metrics, model_io, phasefeat

log = logging.getLogger("dysarthria")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    records = corpus.synthesize_corpus(args.n_per_class, args.seed)
    manifest = corpus.save_corpus(records, args.out)
    print(f"wrote {len(records)} speakers ({len(records) * 8} clips) to {manifest}")
    return EXIT_OK


# --------------------------------------------------------------------------
# extract
# --------------------------------------------------------------------------

#: Utterance kinds with usable glottal excitation (voiceless rhythms excluded).
ACOUSTIC_KINDS = (
    corpus.UtteranceKind.A,
    corpus.UtteranceKind.E,
    corpus.UtteranceKind.I,
    corpus.UtteranceKind.O,
    corpus.UtteranceKind.U,
    corpus.UtteranceKind.KA,
)

ACOUSTIC_COLUMNS = (
    ["speaker_id", "kind", "age", "gender", "label"]
    + [f"f{i}_hz" for i in range(1, 6)]
    + list(glottal.FIELD_NAMES)
)


def _extract_acoustic(records, frame_ms: float):
    from dysarthria.formant import estimate_formants
    from dysarthria.glottal import detect_gci, extract_glottal_params

    rows, failures = [], 0
    for rec in records:
        for kind in ACOUSTIC_KINDS:
            clip = rec.utterances[kind]
            try:
                formants = estimate_formants(clip, frame_ms)
                glottal = extract_glottal_params(detect_gci(clip), clip)
            except Exception as exc:
                failures += 1
                log.warning("%s/%s: extraction failed: %s", rec.speaker_id, kind.value, exc)
                continue
            rows.append(
                [rec.speaker_id, kind.value, rec.age_years, rec.gender,
                 "" if rec.severity_label is None else rec.severity_label]
                + [f"{f:.6g}" for f in formants.f_hz]
                + [f"{v:.6g}" for v in glottal.to_array()]
            )
    return rows, failures


def _extract_phase(records):
    rows, failures = [], 0
    for rec in records:
        for kind in corpus.RECORDED_KINDS:
            clip = rec.utterances[kind]
            try:
                matrix = phasefeat.utterance_phase_matrix(clip)
            except Exception as exc:
                failures += 1
                log.warning("%s/%s: phase extraction failed: %s", rec.speaker_id, kind.value, exc)
                continue
            for t in range(phasefeat.FIXED_FRAME_COUNT):
                rows.append(
                    [rec.speaker_id, kind.value, t]
                    + [f"{v:.6g}" for v in matrix.frames[t]]
                )
    return rows, failures


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def cmd_extract(args) -> int:
    records = corpus.load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    if args.feature_set in ("acoustic12", "both"):
        rows, failed = _extract_acoustic(records, args.frame_ms)
        failures += failed
        _write_csv(out_dir / "acoustic12.csv", ACOUSTIC_COLUMNS, rows)
        print(f"acoustic12.csv: {len(rows)} rows")
    if args.feature_set in ("phase54", "both"):
        rows, failed = _extract_phase(records)
        failures += failed
        header = ["speaker_id", "kind", "frame"] + list(phasefeat.COLUMN_NAMES)
        _write_csv(out_dir / "phase54.csv", header, rows)
        print(f"phase54.csv: {len(rows)} rows")
    print(f"extraction warnings: {failures}")
    return EXIT_OK


# --------------------------------------------------------------------------
# train / predict / evaluate
# --------------------------------------------------------------------------

def cmd_train(args) -> int:
    records = corpus.load_manifest(args.manifest)
    unlabeled = [r.speaker_id for r in records if r.severity_label is None]
    if unlabeled:
        raise ValueError(f"speakers without labels: {', '.join(unlabeled)}")
    config = hier.load_config(args.config) if args.config else None
    model = hier.HierarchicalSeverityClassifier(config=config, seed=args.seed)
    model.fit(records)
    model_io.save_hierarchy(model, args.out)
    for model_id, n, acc in model.training_summary(records):
        print(f"model {model_id}: {n} speakers, train accuracy {acc:.3f}")
    if model.segment_fallback_count_:
        print(f"segment fallbacks to full clip: {model.segment_fallback_count_}")
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    records = corpus.load_manifest(args.manifest)
    model = model_io.load_hierarchy(args.model)
    model.stage2_.set_params(fusion=args.fusion_mode, tie_policy=args.tie_policy)

    inputs = model.stage2_inputs(records)
    labels = model.stage2_.predict(inputs)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["speaker_id", "predicted_label"] + [f"p{m}" for m in range(1, 9)])
    for rec, label, row in zip(records, labels, inputs):
        writer.writerow([rec.speaker_id, int(label)] + [f"{p:.10g}" for p in row[:8]])
    _atomic_write_text(Path(args.out), buf.getvalue())
    print(f"wrote {len(records)} predictions to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    with open(args.predictions, newline="", encoding="utf-8") as fh:
        pred_rows = list(csv.DictReader(fh))
    records = corpus.load_manifest(args.manifest)
    labels = {r.speaker_id: r.severity_label for r in records}

    pairs = []
    for row in pred_rows:
        sid = row["speaker_id"]
        if sid not in labels:
            raise ValueError(f"predicted speaker {sid} not in manifest")
        if labels[sid] is None:
            raise ValueError(f"speaker {sid} has no label in manifest")
        pairs.append((labels[sid], int(row["predicted_label"])))

    matrix = metrics.confusion_matrix(pairs)
    report = metrics.metrics(matrix)
    text = metrics.format_report(matrix, report)
    out = Path(args.out)
    _atomic_write_text(out, text)
    _atomic_write_text(out.with_suffix(out.suffix + ".kv"), metrics.report_to_kv(matrix, report))
    print(text, end="")
    print(f"report written to {out} (+ .kv)")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dysarthria",
        description="Dysarthria severity pipeline: synthesize, extract, train, predict, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--n-per-class", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="dump feature CSVs from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--feature-set", choices=("acoustic12", "phase54", "both"),
                   default="acoustic12")
    p.add_argument("--frame-ms", type=float, default=50.0,
                   help="formant frame length for the acoustic dump")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the hierarchical classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="stage-1 config CSV (default: built-in eight models)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict labels for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="predictions CSV path")
    p.add_argument("--fusion", dest="fusion_mode", choices=("majority", "soft"),
                   default="majority", help="stage-2 vote fusion")
    p.add_argument("--tie-policy", choices=("severe", "least-severe"), default="severe")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against manifest labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report path (a .kv twin is written too)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("DYS_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        log.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
