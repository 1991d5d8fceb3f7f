"""Benchmark construction kit: manifests, reference transformation, review.

A manifest is the canonical JSON description of a dataset: entries with
split labels, frame/audio/mask paths relative to a declared root, and
provenance. The transformation path rewrites each entry's reference into a
reasoning-intensive variant via the generate capability, queues the results
for human review, and finalizes a new manifest that targets the same objects
(same frames, same ground-truth masks, same splits) as the source.
"""

from __future__ import annotations

import json
import logging
import string
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .core import FrameRef, ReferenceSample, Split, load_mask
from .refchain import PromptTemplate, count_words, default_transform_prompt
from .toolbus import GenerateBackend, GenerateRequest, ToolBusError, invoke_generate

log = logging.getLogger(__name__)

WORD_BAND = (5, 15)  # required length band for generated references


class ManifestError(ValueError):
    """Schema violation; ``location`` is a JSON-pointer-style path."""

    def __init__(self, message: str, *, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


PROVENANCE_VALUES = ("original", "transformed", "human_revised")


@dataclass(frozen=True)
class ManifestEntry:
    uid: str
    split: Split
    reference: str
    frames: tuple[str, ...]
    audio: str | None = None
    gt_mask_paths: tuple[str, ...] | None = None
    gt_category: str | None = None
    provenance: str = "original"
    source_uid: str | None = None
    source_reference: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.gt_mask_paths is not None:
            object.__setattr__(self, "gt_mask_paths", tuple(self.gt_mask_paths))
        if not self.uid:
            raise ManifestError("uid must be non-empty")
        if not self.reference.strip():
            raise ManifestError(f"entry {self.uid!r}: reference is empty")
        if not self.frames:
            raise ManifestError(f"entry {self.uid!r}: frames list is empty")
        if self.provenance not in PROVENANCE_VALUES:
            raise ManifestError(
                f"entry {self.uid!r}: unknown provenance {self.provenance!r}")
        if self.provenance != "original" and not (self.source_uid and self.source_reference):
            raise ManifestError(
                f"entry {self.uid!r}: {self.provenance} entries need source_uid "
                f"and source_reference back-references")
        if self.gt_mask_paths is not None and len(self.gt_mask_paths) != len(self.frames):
            raise ManifestError(
                f"entry {self.uid!r}: {len(self.gt_mask_paths)} gt masks for "
                f"{len(self.frames)} frames")

    def to_json(self) -> dict:
        return {
            "uid": self.uid,
            "split": self.split.value,
            "reference": self.reference,
            "frames": list(self.frames),
            "audio": self.audio,
            "gt_mask_paths": None if self.gt_mask_paths is None else list(self.gt_mask_paths),
            "gt_category": self.gt_category,
            "provenance": self.provenance,
            "source_uid": self.source_uid,
            "source_reference": self.source_reference,
        }


@dataclass(frozen=True)
class BenchmarkManifest:
    name: str
    version: str
    entries: tuple[ManifestEntry, ...]
    root: str = "."

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        for e in self.entries:
            if e.uid in seen:
                raise ManifestError(f"duplicate uid {e.uid!r}")
            seen.add(e.uid)

    def by_uid(self, uid: str) -> ManifestEntry:
        for e in self.entries:
            if e.uid == uid:
                return e
        raise KeyError(uid)

    def split_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.entries:
            counts[e.split.value] = counts.get(e.split.value, 0) + 1
        return counts

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "root": self.root,
            "entries": [e.to_json() for e in self.entries],
        }


def _require(obj: Mapping, key: str, location: str):
    if key not in obj:
        raise ManifestError(f"missing key {key!r}", location=location)
    return obj[key]


def manifest_from_json(obj, *, location: str = "") -> BenchmarkManifest:
    if not isinstance(obj, dict):
        raise ManifestError("manifest must be a JSON object", location=location or "/")
    name = _require(obj, "name", "/name")
    version = _require(obj, "version", "/version")
    raw_entries = _require(obj, "entries", "/entries")
    if not isinstance(raw_entries, list):
        raise ManifestError("entries must be a list", location="/entries")
    entries = []
    for i, raw in enumerate(raw_entries):
        loc = f"/entries/{i}"
        if not isinstance(raw, dict):
            raise ManifestError("entry must be an object", location=loc)
        try:
            split = Split.parse(str(_require(raw, "split", f"{loc}/split")))
        except ValueError as e:
            raise ManifestError(str(e), location=f"{loc}/split") from None
        frames = _require(raw, "frames", f"{loc}/frames")
        if not isinstance(frames, list) or not all(isinstance(f, str) for f in frames):
            raise ManifestError("frames must be a list of strings", location=f"{loc}/frames")
        gt = raw.get("gt_mask_paths")
        if gt is not None and (not isinstance(gt, list)
                               or not all(isinstance(p, str) for p in gt)):
            raise ManifestError("gt_mask_paths must be a list of strings",
                                location=f"{loc}/gt_mask_paths")
        try:
            entries.append(ManifestEntry(
                uid=str(_require(raw, "uid", f"{loc}/uid")),
                split=split,
                reference=str(_require(raw, "reference", f"{loc}/reference")),
                frames=tuple(frames),
                audio=raw.get("audio"),
                gt_mask_paths=None if gt is None else tuple(gt),
                gt_category=raw.get("gt_category"),
                provenance=raw.get("provenance", "original"),
                source_uid=raw.get("source_uid"),
                source_reference=raw.get("source_reference"),
            ))
        except ManifestError as e:
            raise ManifestError(str(e), location=loc) from None
    try:
        return BenchmarkManifest(name=str(name), version=str(version),
                                 entries=tuple(entries), root=str(obj.get("root", ".")))
    except ManifestError as e:
        raise ManifestError(str(e), location="/entries") from None


def load_manifest(path: str | Path, *, strict_paths: bool = False) -> BenchmarkManifest:
    """Load and validate. Dangling media paths warn by default and raise when
    ``strict_paths`` is set."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"not valid JSON: {e}", location="/") from e
    manifest = manifest_from_json(obj)
    base = path.parent / manifest.root
    for i, entry in enumerate(manifest.entries):
        paths = list(entry.frames) + list(entry.gt_mask_paths or ())
        if entry.audio:
            paths.append(entry.audio)
        for rel in paths:
            if not (base / rel).exists():
                message = f"entry {entry.uid!r}: path {rel!r} does not exist under {base}"
                if strict_paths:
                    raise ManifestError(message, location=f"/entries/{i}")
                log.warning("%s", message)
    return manifest


def save_manifest(manifest: BenchmarkManifest, path: str | Path) -> None:
    """Canonical serialization: sorted keys, 2-space indent, trailing newline.
    save(load(m)) is byte-identical for canonical files."""
    Path(path).write_text(
        json.dumps(manifest.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8")


def manifest_samples(manifest: BenchmarkManifest, manifest_path: str | Path,
                     *, with_gt: bool = False) -> list[ReferenceSample]:
    """Materialize manifest entries as pipeline samples.

    Frame identity is the path as written in the manifest, so scripted mocks
    keyed on it stay machine-independent.
    """
    base = Path(manifest_path).parent / manifest.root
    samples = []
    for entry in manifest.entries:
        frames = tuple(
            FrameRef(frame_id=rel, path=str(base / rel)) for rel in entry.frames)
        gt = None
        if with_gt and entry.gt_mask_paths is not None:
            gt = tuple(load_mask(base / rel) for rel in entry.gt_mask_paths)
        samples.append(ReferenceSample(
            uid=entry.uid, frames=frames, reference=entry.reference,
            split=entry.split, audio=entry.audio, gt_masks=gt,
            gt_category=entry.gt_category))
    return samples


# ---------------------------------------------------------------------------
# Linguistic statistics
# ---------------------------------------------------------------------------


def tokenize_reference(text: str) -> list[str]:
    """Whitespace tokens, punctuation-stripped, lowercased; empties dropped."""
    out = []
    for tok in text.split():
        tok = tok.strip(string.punctuation).lower()
        if tok:
            out.append(tok)
    return out


@dataclass(frozen=True)
class ReferenceStats:
    avg_words: float
    word_histogram: dict[int, int]  # words-per-reference -> count
    vocabulary: Counter

    def to_json(self) -> dict:
        return {
            "avg_words": self.avg_words,
            "word_histogram": {str(k): v for k, v in sorted(self.word_histogram.items())},
            "vocabulary": [
                {"word": w, "count": c}
                for w, c in sorted(self.vocabulary.items(), key=lambda kv: (-kv[1], kv[0]))
            ],
        }

    def vocabulary_csv(self) -> str:
        lines = ["word,count"]
        for w, c in sorted(self.vocabulary.items(), key=lambda kv: (-kv[1], kv[0])):
            lines.append(f"{w},{c}")
        return "\n".join(lines) + "\n"


def reference_stats(manifest: BenchmarkManifest) -> ReferenceStats:
    counts = []
    vocab: Counter = Counter()
    hist: dict[int, int] = {}
    for entry in manifest.entries:
        toks = tokenize_reference(entry.reference)
        counts.append(len(toks))
        hist[len(toks)] = hist.get(len(toks), 0) + 1
        vocab.update(toks)
    avg = sum(counts) / len(counts) if counts else 0.0
    return ReferenceStats(avg_words=avg, word_histogram=hist, vocabulary=vocab)


# ---------------------------------------------------------------------------
# Reference transformation
# ---------------------------------------------------------------------------

REVIEW_STATUSES = ("pending", "accepted", "revised", "rejected")


@dataclass(frozen=True)
class TransformRecord:
    uid: str
    original_reference: str
    target_object_name: str
    generated_reference: str
    word_count: int
    review_status: str = "pending"
    revised_reference: str | None = None
    reject_reason: str | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.review_status not in REVIEW_STATUSES:
            raise ValueError(f"unknown review status {self.review_status!r}")
        if self.review_status == "accepted" and not self.generated_reference.strip():
            raise ValueError(f"record {self.uid!r}: accepted with empty reference")
        if self.review_status == "revised" and not (self.revised_reference or "").strip():
            raise ValueError(f"record {self.uid!r}: revised with empty text")

    @property
    def final_reference(self) -> str | None:
        if self.review_status == "accepted":
            return self.generated_reference
        if self.review_status == "revised":
            return self.revised_reference
        return None

    def to_json(self) -> dict:
        return {
            "uid": self.uid,
            "original_reference": self.original_reference,
            "target_object": self.target_object_name,
            "generated_reference": self.generated_reference,
            "word_count": self.word_count,
            "flags": list(self.flags),
            "decision": "" if self.review_status == "pending" else self.review_status,
            "revised_reference": self.revised_reference or "",
            "reason": self.reject_reason or "",
        }


def _extract_generated_reference(text: str) -> str:
    """Pull the reference out of a generation response: JSON object with a
    complex_ref/reference/ref key when present, otherwise the trimmed text."""
    text = text.strip()
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start:end + 1])
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            for key in ("complex_ref", "reference", "ref"):
                if isinstance(obj.get(key), str):
                    return obj[key].strip()
    return text.strip('"').strip()


def transform_reference(entry: ManifestEntry, backend: GenerateBackend,
                        template: PromptTemplate | None = None) -> TransformRecord:
    """Generate a reasoning-intensive replacement reference for one entry.

    The result is always a record: transport failures become rejections,
    not exceptions, so a batch transformation never loses entries.
    """
    if not entry.gt_category:
        raise ValueError(f"entry {entry.uid!r} has no target object name (gt_category)")
    template = template or default_transform_prompt()
    prompt = template.render(uid=entry.uid, target_object=entry.gt_category)
    try:
        response = invoke_generate(backend, GenerateRequest(uid=entry.uid, prompt=prompt))
    except ToolBusError as e:
        return TransformRecord(
            uid=entry.uid, original_reference=entry.reference,
            target_object_name=entry.gt_category, generated_reference="",
            word_count=0, review_status="rejected",
            reject_reason=f"transport: {e}")
    generated = _extract_generated_reference(response.text)
    n_words = count_words(generated)
    if not generated:
        return TransformRecord(
            uid=entry.uid, original_reference=entry.reference,
            target_object_name=entry.gt_category, generated_reference="",
            word_count=0, review_status="rejected", reject_reason="empty generation")
    if generated.strip().casefold() == entry.reference.strip().casefold():
        return TransformRecord(
            uid=entry.uid, original_reference=entry.reference,
            target_object_name=entry.gt_category, generated_reference=generated,
            word_count=n_words, review_status="rejected", reject_reason="unchanged")
    flags: tuple[str, ...] = ()
    if not (WORD_BAND[0] <= n_words <= WORD_BAND[1]):
        flags = ("word_band",)
    return TransformRecord(
        uid=entry.uid, original_reference=entry.reference,
        target_object_name=entry.gt_category, generated_reference=generated,
        word_count=n_words, flags=flags)


def transform_manifest(manifest: BenchmarkManifest, backend: GenerateBackend,
                       template: PromptTemplate | None = None) -> list[TransformRecord]:
    return [transform_reference(e, backend, template) for e in manifest.entries]


# ---------------------------------------------------------------------------
# Human review queue
# ---------------------------------------------------------------------------


def export_review_queue(records: Sequence[TransformRecord], path: str | Path) -> int:
    """Line-oriented, diff-friendly JSONL with original and generated side by
    side and an empty decision slot per row."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")
            n += 1
    return n


def load_review_queue(path: str | Path) -> list[TransformRecord]:
    """Rebuild records from a review file, applying any filled decision slots."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"line {line_no}: not valid JSON: {e.msg}") from e
            decision = (row.get("decision") or "").strip().lower()
            status = {"": "pending", "pending": "pending", "accept": "accepted",
                      "accepted": "accepted", "revise": "revised", "revised": "revised",
                      "reject": "rejected", "rejected": "rejected"}.get(decision)
            if status is None:
                raise ManifestError(f"line {line_no}: unknown decision {decision!r}")
            try:
                records.append(TransformRecord(
                    uid=row["uid"],
                    original_reference=row.get("original_reference", ""),
                    target_object_name=row.get("target_object", ""),
                    generated_reference=row.get("generated_reference", ""),
                    word_count=row.get("word_count", 0),
                    review_status=status,
                    revised_reference=row.get("revised_reference") or None,
                    reject_reason=row.get("reason") or None,
                    flags=tuple(row.get("flags", ())),
                ))
            except (KeyError, ValueError) as e:
                raise ManifestError(f"line {line_no}: {e}") from None
    return records


def import_review_decisions(path: str | Path,
                            records: Sequence[TransformRecord]) -> list[TransformRecord]:
    """Apply reviewed decision slots back onto the records.

    Decisions: "accept", "revised" (needs revised_reference), "rejected"
    (optional reason), or "" to stay pending. Unknown uids and empty revisions
    are errors.
    """
    by_uid = {r.uid: r for r in records}
    updated = dict(by_uid)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            uid = row.get("uid")
            if uid not in by_uid:
                raise ManifestError(f"line {line_no}: decision for unknown uid {uid!r}")
            decision = (row.get("decision") or "").strip().lower()
            rec = by_uid[uid]
            if decision in ("", "pending"):
                continue
            if decision in ("accept", "accepted"):
                updated[uid] = replace(rec, review_status="accepted")
            elif decision in ("revise", "revised"):
                text = (row.get("revised_reference") or "").strip()
                if not text:
                    raise ManifestError(
                        f"line {line_no}: revised decision for {uid!r} has empty text")
                updated[uid] = replace(rec, review_status="revised", revised_reference=text)
            elif decision in ("reject", "rejected"):
                updated[uid] = replace(rec, review_status="rejected",
                                       reject_reason=row.get("reason") or "rejected")
            else:
                raise ManifestError(f"line {line_no}: unknown decision {decision!r}")
    return [updated[r.uid] for r in records]


def finalize_manifest(source: BenchmarkManifest, records: Sequence[TransformRecord],
                      *, name: str | None = None,
                      version: str | None = None) -> BenchmarkManifest:
    """Manifest of accepted/revised transformations.

    Every kept entry points at the same media and ground truth as its source
    entry and keeps its split: the new references target the same objects.
    """
    entries = []
    for rec in records:
        final = rec.final_reference
        if final is None:
            continue
        src = source.by_uid(rec.uid)
        entries.append(replace(
            src,
            reference=final,
            provenance="transformed" if rec.review_status == "accepted" else "human_revised",
            source_uid=src.uid,
            source_reference=src.reference,
        ))
    return BenchmarkManifest(
        name=name or f"{source.name}-transformed",
        version=version or source.version,
        entries=tuple(entries),
        root=source.root,
    )
