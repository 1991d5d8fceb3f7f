#!/usr/bin/env python3
"""Regenerate the synthetic fixture corpus under fixtures/.

Six samples (2 seen / 2 unseen / 2 null), two 8x8 frames each, with ground
truth, hand-designed predictions, a scripted mock spec for the full pipeline,
a pipeline config, and small chain corpora for the validate command. Entirely
deterministic: rerunning reproduces the same bytes.

Hand-derived evaluation targets for the shipped predictions (tolerance 1 px):
  seen   J=F=0.75   (s1 perfect, s2 one perfect + one far-miss frame)
  unseen J=F=0.5    (u1 perfect, u2 both frames far misses)
  mix    J=F=0.625  (pooled over the four samples)
  null   S=0.125    (n1 empty, n2 a quarter foreground per frame)
"""

from __future__ import annotations

import json
import sys
import wave
from pathlib import Path

import numpy as np
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from tgs.benchkit import BenchmarkManifest, ManifestEntry, save_manifest
from tgs.core import FrameMask, GroundedBox, Split, all_background, mask_from_box, save_mask
from tgs.pipeline import BackendSpec, PipelineConfig
from tgs.refchain import chain, null_chain, serialize_chain
from tgs.toolbus import ScriptedMockSpec

ROOT = Path(__file__).resolve().parents[1] / "fixtures"

SQUARE = (2, 2, 6, 6)     # 4x4 block
SMALL_TL = (0, 0, 2, 2)   # 2x2 at top-left
SMALL_BR = (5, 5, 7, 7)   # 2x2 at bottom-right, >1 px from SMALL_TL
QUARTER_A = (0, 0, 4, 4)  # 16 of 64 px
QUARTER_B = (4, 4, 8, 8)

W = H = 8
N_FRAMES = 2


def think_text(uid: str, reference: str, f_obj: str | None, s_obj: str | None) -> str:
    think = (f'The referential expression is: "{reference}". '
             f"The video shows a small synthetic scene. "
             f"The audio contains a short test tone. "
             f"The reference related to visual cues.")
    if f_obj is None:
        return serialize_chain(null_chain(think))
    return serialize_chain(chain(f_obj, s_obj, think))


SAMPLES = [
    # uid, split, reference, category, per-frame gt box, per-frame pred box
    ("s1", Split.SEEN, "The guitar being played on the right", "guitar",
     [SQUARE, SQUARE], [SQUARE, SQUARE]),
    ("s2", Split.SEEN, "The piano left of the guitar", "piano",
     [SQUARE, SMALL_TL], [SQUARE, SMALL_BR]),
    ("u1", Split.UNSEEN, "The ukulele making a cheerful sound", "ukulele",
     [SQUARE, SQUARE], [SQUARE, SQUARE]),
    ("u2", Split.UNSEEN, "The cello resting beside the chair", "cello",
     [SMALL_TL, SMALL_TL], [SMALL_BR, SMALL_BR]),
    ("n1", Split.NULL, "The violin that is not there", "violin",
     [None, None], [None, None]),
    ("n2", Split.NULL, "The trumpet hidden behind the curtain", "trumpet",
     [None, None], [QUARTER_A, QUARTER_B]),
]

F_OBJECTS = {
    "guitar": "a guitar strummed on the right side",
    "piano": "a piano standing on the left side",
    "ukulele": "a ukulele held near the window",
    "cello": "a cello leaning on a wooden chair",
}


def box_mask(box) -> FrameMask:
    return all_background(W, H) if box is None else mask_from_box(W, H, box)


def write_frame(path: Path, idx: int) -> None:
    # flat gray with one marker pixel so frames differ visibly
    arr = np.full((H, W), 128, dtype=np.uint8)
    arr[0, idx % W] = 255
    Image.fromarray(arr, mode="L").save(path)


def write_silence(path: Path) -> None:
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(8000)
        fh.writeframes(b"\x00\x00" * 80)


def main() -> None:
    for sub in ("frames", "audio", "gt", "pred", "chains"):
        (ROOT / sub).mkdir(parents=True, exist_ok=True)

    entries = []
    think = {}
    ground = {}
    for uid, split, reference, category, gt_boxes, pred_boxes in SAMPLES:
        frame_rels = []
        gt_rels = []
        for i in range(N_FRAMES):
            frame_rel = f"frames/{uid}_{i}.png"
            write_frame(ROOT / frame_rel, i)
            frame_rels.append(frame_rel)
            gt_rel = f"gt/{uid}_{i}.json"
            save_mask(box_mask(gt_boxes[i]), ROOT / gt_rel)
            gt_rels.append(gt_rel)
            pred_dir = ROOT / "pred" / uid
            pred_dir.mkdir(parents=True, exist_ok=True)
            save_mask(box_mask(pred_boxes[i]), pred_dir / f"frame_{i:05d}.png")
        audio_rel = f"audio/{uid}.wav"
        write_silence(ROOT / audio_rel)

        entries.append(ManifestEntry(
            uid=uid, split=split, reference=reference,
            frames=tuple(frame_rels), audio=audio_rel,
            gt_mask_paths=tuple(gt_rels), gt_category=category))

        if split is Split.NULL:
            think[uid] = think_text(uid, reference, None, None)
        else:
            think[uid] = think_text(uid, reference, F_OBJECTS[category], category)
            for i, frame_rel in enumerate(frame_rels):
                target = gt_boxes[i] if uid in ("s1", "u1") else (
                    SQUARE if (uid == "s2" and i == 0) else SMALL_BR)
                decoy = GroundedBox(0, 0, 3, 3, box_score=0.05, text_score=0.9)
                winner = GroundedBox(*target, box_score=0.9, text_score=0.8)
                ground[frame_rel] = {category: (decoy, winner)}

    manifest = BenchmarkManifest(name="tgs-demo", version="1", entries=tuple(entries))
    save_manifest(manifest, ROOT / "manifest.json")

    spec = ScriptedMockSpec(
        think=think, ground=ground,
        generate={
            uid: json.dumps({"complex_ref": text})
            for uid, text in {
                "s1": "The stringed body answering the melody from the right",
                "s2": "The keyed instrument shadowing its louder stage partner",
                "u1": "The small four-stringed source of the bright tune",
                "u2": "The silent giant resting beside common furniture",
                "n1": "The bowed instrument the scene never actually contains",
                "n2": "The brass voice only implied by the setting",
            }.items()
        })
    spec.save(ROOT / "mockspec.json")

    cfg = PipelineConfig(backends=BackendSpec(kind="mock", mock_spec_path="mockspec.json"))
    (ROOT / "config.json").write_text(
        json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    good = [
        {"uid": "c1", "chain": think["s1"]},
        {"uid": "c2", "chain": think["s2"]},
        {"uid": "c3", "chain": think["n1"]},
    ]
    (ROOT / "chains" / "valid.jsonl").write_text(
        "".join(json.dumps(row) + "\n" for row in good), encoding="utf-8")
    merged = think["s1"].replace(
        "   <s_object>\n      guitar\n   </s_object>",
        "   <s_object> guitar </s_object>")
    bad = [good[0], {"uid": "c_bad", "chain": merged}, good[2]]
    (ROOT / "chains" / "bad.jsonl").write_text(
        "".join(json.dumps(row) + "\n" for row in bad), encoding="utf-8")

    print(f"fixtures written under {ROOT}")


if __name__ == "__main__":
    main()
