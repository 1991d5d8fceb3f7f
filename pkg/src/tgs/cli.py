"""Command-line surface: run, eval, stats, transform, finalize, validate.

Exit codes: 0 success, 1 validation/domain error, 2 transport error,
3 usage error. Every subcommand accepts --config, --output-dir, --log-level,
and --json (machine-readable stdout).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import benchkit, metrics, pipeline
from .core import Split, load_mask
from .refchain import (
    ChainParseError,
    ChainPolicy,
    PromptTemplate,
    parse_chain,
    validate_chain,
)
from .toolbus import (
    BackendUnavailableError,
    ToolBusError,
    ToolTimeoutError,
    TransportFormatError,
)

log = logging.getLogger("tgs")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_TRANSPORT = 2
EXIT_USAGE = 3

_TRANSPORT_ERRORS = (BackendUnavailableError, ToolTimeoutError, TransportFormatError)
_TRANSPORT_PREFIXES = tuple(e.__name__ for e in _TRANSPORT_ERRORS)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _load_config(args) -> pipeline.PipelineConfig:
    if args.config:
        cfg = pipeline.PipelineConfig.load(args.config)
    else:
        cfg = pipeline.PipelineConfig(backends=pipeline.BackendSpec(kind="remote"))
    overrides = {}
    if getattr(args, "tau_bbox", None) is not None:
        overrides["tau_bbox"] = args.tau_bbox
    if getattr(args, "tau_text", None) is not None:
        overrides["tau_text"] = args.tau_text
    if getattr(args, "prompt_type", None):
        from .core import PromptType

        overrides["prompt_type"] = PromptType.parse(args.prompt_type)
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    manifest = benchkit.load_manifest(args.manifest, strict_paths=args.strict)
    samples = benchkit.manifest_samples(manifest, args.manifest)
    cfg = _load_config(args)
    config_dir = Path(args.config).parent if args.config else None
    bus = pipeline.build_bindings(cfg, base_dir=config_dir)

    results, summary = pipeline.run_batch(samples, cfg, bus)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in results:
        pipeline.write_masks(r, out / "masks")
    pipeline.write_traces(results, out / "traces.jsonl")
    (out / "summary.json").write_text(
        json.dumps(summary.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    _emit(args, summary.to_json(),
          "\n".join(f"{r.uid}: {r.status.value}"
                    + (f" ({r.failed_stage}: {r.error})" if r.error else "")
                    for r in results)
          + f"\ntotal={summary.total} " + " ".join(
              f"{k}={v}" for k, v in sorted(summary.by_status.items())))

    failed = [r for r in results if r.status is not pipeline.SampleStatus.OK]
    if any((r.error or "").startswith(_TRANSPORT_PREFIXES) for r in failed):
        return EXIT_TRANSPORT
    if failed:
        return EXIT_DOMAIN
    return EXIT_OK


def _load_predictions(pred_dir: Path, uid: str, n_frames: int):
    sample_dir = pred_dir / uid
    if not sample_dir.is_dir():
        raise ValueError(f"no prediction directory for uid {uid!r} under {pred_dir}")
    paths = sorted(sample_dir.glob("*.png")) + sorted(sample_dir.glob("*.json"))
    if len(paths) != n_frames:
        raise ValueError(
            f"uid {uid!r}: expected {n_frames} prediction masks, found {len(paths)}")
    return tuple(load_mask(p) for p in paths)


def cmd_eval(args) -> int:
    manifest = benchkit.load_manifest(args.manifest, strict_paths=args.strict)
    base = Path(args.manifest).parent / manifest.root
    pred_dir = Path(args.pred_dir)

    units = []
    for entry in manifest.entries:
        pred = _load_predictions(pred_dir, entry.uid, len(entry.frames))
        gt = None
        if entry.split is not Split.NULL:
            if entry.gt_mask_paths is None:
                raise ValueError(f"uid {entry.uid!r}: non-null entry without gt masks")
            gt = tuple(load_mask(base / p) for p in entry.gt_mask_paths)
        units.append(metrics.EvalUnit(uid=entry.uid, split=entry.split,
                                      pred=pred, gt=gt))

    report = metrics.aggregate(units, tolerance_px=args.tolerance_px)
    payload = report.to_json()
    if args.verbose:
        pooled = metrics.aggregate(units, tolerance_px=args.tolerance_px,
                                   frame_pooling="pooled")
        payload["pooled_frames"] = pooled.to_json()["splits"]
        payload["pooled_frames_null"] = pooled.to_json()["null"]

    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "per_sample.csv").write_text(report.per_sample_csv(), encoding="utf-8")

    _emit(args, payload, report.to_table())
    return EXIT_OK


def cmd_stats(args) -> int:
    manifest = benchkit.load_manifest(args.manifest, strict_paths=args.strict)
    stats = benchkit.reference_stats(manifest)
    payload = stats.to_json()
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "vocabulary.csv").write_text(stats.vocabulary_csv(), encoding="utf-8")
    hist = " ".join(f"{k}:{v}" for k, v in sorted(stats.word_histogram.items()))
    _emit(args, payload,
          f"entries={len(manifest.entries)} avg_words={stats.avg_words:.4f}\n"
          f"histogram (words:count): {hist}")
    return EXIT_OK


def cmd_transform(args) -> int:
    manifest = benchkit.load_manifest(args.manifest, strict_paths=args.strict)
    cfg = _load_config(args)
    config_dir = Path(args.config).parent if args.config else None
    bus = pipeline.build_bindings(cfg, base_dir=config_dir)
    if bus.generate is None:
        raise BackendUnavailableError(
            "no generate backend configured (set backends.urls.generate or "
            "TGS_GENERATE_URL)", capability="generate")
    template = (PromptTemplate.from_file(args.prompt_file)
                if args.prompt_file else None)
    records = benchkit.transform_manifest(manifest, bus.generate, template)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    review_path = out / "review_queue.jsonl"
    n = benchkit.export_review_queue(records, review_path)
    statuses = {}
    for r in records:
        statuses[r.review_status] = statuses.get(r.review_status, 0) + 1
    payload = {"records": n, "review_file": str(review_path),
               "by_status": statuses}
    _emit(args, payload,
          f"wrote {n} records to {review_path} "
          + " ".join(f"{k}={v}" for k, v in sorted(statuses.items())))
    return EXIT_OK


def cmd_finalize(args) -> int:
    import os
    from dataclasses import replace

    manifest = benchkit.load_manifest(args.manifest, strict_paths=args.strict)
    records = benchkit.load_review_queue(args.review_file)
    final = benchkit.finalize_manifest(manifest, records,
                                       name=args.name, version=args.version)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "manifest.json"
    # keep media paths resolvable from the new location: the finalized
    # manifest reuses the source media, so its root must point back there
    source_base = (Path(args.manifest).parent / manifest.root).resolve()
    final = replace(final, root=os.path.relpath(source_base, out.resolve()))
    benchkit.save_manifest(final, target)
    payload = {"manifest": str(target), "entries": len(final.entries),
               "splits": final.split_counts()}
    _emit(args, payload,
          f"finalized {len(final.entries)} entries -> {target}")
    return EXIT_OK


def cmd_validate(args) -> int:
    problems: list[dict] = []
    if args.chains_file:
        policy = ChainPolicy()
        with open(args.chains_file, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                uid = row.get("uid", f"line{line_no}")
                try:
                    parsed = parse_chain(row["chain"], strict=True)
                except ChainParseError as e:
                    problems.append({"uid": uid, "kind": type(e).__name__,
                                     "message": str(e), "severity": "hard"})
                    continue
                for v in validate_chain(parsed, policy):
                    if v.is_hard or args.strict:
                        problems.append({"uid": uid, "kind": v.code,
                                         "message": v.message, "severity": v.severity})
    else:
        try:
            benchkit.load_manifest(args.manifest, strict_paths=args.strict)
        except benchkit.ManifestError as e:
            problems.append({"uid": None, "kind": "manifest",
                             "message": str(e), "severity": "hard"})

    payload = {"violations": problems, "ok": not problems}
    text = ("no violations" if not problems else
            "\n".join(f"{p['uid']}: [{p['kind']}] {p['message']}" for p in problems))
    _emit(args, payload, text)
    return EXIT_OK if not problems else EXIT_DOMAIN


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--output-dir", default="tgs_out",
                   help="directory for artifacts (default: tgs_out)")
    p.add_argument("--log-level", default="warning",
                   choices=["debug", "info", "warning", "error"])
    p.add_argument("--json", action="store_true", help="machine-readable stdout")
    p.add_argument("--strict", action="store_true",
                   help="escalate path warnings / soft violations to failures")


def build_parser() -> _Parser:
    parser = _Parser(prog="tgs",
                     description="Think-Ground-Segment pipeline and evaluation tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the pipeline over a manifest")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--tau-bbox", type=float, dest="tau_bbox")
    p_run.add_argument("--tau-text", type=float, dest="tau_text")
    p_run.add_argument("--prompt-type", choices=["f", "s", "ref"], dest="prompt_type")
    p_run.add_argument("--workers", type=int)
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="evaluate predicted masks against a manifest")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--pred-dir", required=True, dest="pred_dir")
    p_eval.add_argument("--tolerance-px", type=int, dest="tolerance_px")
    p_eval.add_argument("--verbose", action="store_true",
                        help="also report pooled-frame aggregates")
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval, output_dir=None)

    p_stats = sub.add_parser("stats", help="reference-expression statistics")
    p_stats.add_argument("--manifest", required=True)
    _add_common(p_stats)
    p_stats.set_defaults(func=cmd_stats, output_dir=None)

    p_tr = sub.add_parser("transform", help="generate reasoning-intensive references")
    p_tr.add_argument("--manifest", required=True)
    p_tr.add_argument("--prompt-file", dest="prompt_file")
    _add_common(p_tr)
    p_tr.set_defaults(func=cmd_transform)

    p_fin = sub.add_parser("finalize", help="apply review decisions to a manifest")
    p_fin.add_argument("--manifest", required=True)
    p_fin.add_argument("--review-file", required=True, dest="review_file")
    p_fin.add_argument("--name")
    p_fin.add_argument("--version")
    _add_common(p_fin)
    p_fin.set_defaults(func=cmd_finalize)

    p_val = sub.add_parser("validate", help="validate a chains corpus or manifest")
    group = p_val.add_mutually_exclusive_group(required=True)
    group.add_argument("--chains-file", dest="chains_file")
    group.add_argument("--manifest")
    _add_common(p_val)
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _TRANSPORT_ERRORS as e:
        log.error("transport failure: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ToolBusError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as e:
        log.debug("domain failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
