#!/usr/bin/env python3
"""Build instruction-tuning records from teacher responses.

Reads a manifest plus a JSONL file of teacher responses ({"uid": ..,
"response": ..}), validates each response against the strict chain grammar
and policy, and writes accepted records as tuning JSONL plus a rejection
report for re-generation.

Usage:
    python3 scripts/build_tuning_set.py MANIFEST RESPONSES OUT_DIR
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from tgs.benchkit import load_manifest, manifest_samples
from tgs.refchain import TuningRecord, build_tuning_record, write_tuning_records


def main(argv: list[str]) -> int:
    if len(argv) != 3:
        print(__doc__)
        return 3
    manifest_path, responses_path, out_dir = map(Path, argv)
    manifest = load_manifest(manifest_path)
    samples = {s.uid: s for s in manifest_samples(manifest, manifest_path)}

    responses = {}
    with open(responses_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                responses[row["uid"]] = row["response"]

    accepted, rejected = [], []
    for uid, sample in samples.items():
        if uid not in responses:
            rejected.append({"uid": uid, "reasons": ["no teacher response"]})
            continue
        rec = build_tuning_record(sample, responses[uid])
        if isinstance(rec, TuningRecord):
            accepted.append(rec)
        else:
            rejected.append({"uid": rec.uid, "reasons": list(rec.reasons)})

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = write_tuning_records(accepted, out / "tuning_records.jsonl")
    (out / "rejections.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in rejected), encoding="utf-8")
    print(f"accepted={n} rejected={len(rejected)} -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
