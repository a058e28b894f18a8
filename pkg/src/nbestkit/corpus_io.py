"""On-disk data: N-best JSON lines, weight tables, parallel text.

One N-best record per line:

    {"id": 0, "src": "...", "refs": ["..."]?, "hyps": [{"text": "...",
     "logprob": -1.5?, "features": {"qe": 0.3}?, "count": 2?}, ...]}

``refs`` is omitted when empty; ``logprob``/``features``/``count`` are
omitted when absent, empty, or 1.  Unknown fields are ignored on read.
Weight files are ``name<TAB>decimal`` lines.  All files are UTF-8, LF.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import AlignmentError, ParseError, ValidationError


@dataclass(frozen=True)
class SourceSegment:
    id: int
    text: str

    def __post_init__(self):
        if self.id < 0:
            raise ValidationError(f"segment id must be nonnegative, got {self.id}")
        if "\n" in self.text:
            raise ValidationError("segment text must not contain newlines")


@dataclass(frozen=True)
class Candidate:
    text: str
    logprob: float | None = None
    features: dict[str, float] = field(default_factory=dict)
    multiplicity: int = 1

    def __post_init__(self):
        if "\n" in self.text:
            raise ValidationError("candidate text must not contain newlines")
        if self.multiplicity < 1:
            raise ValidationError("multiplicity must be >= 1")
        if self.logprob is not None:
            if not math.isfinite(self.logprob):
                raise ValidationError("logprob must be finite when present")
            if self.logprob > 0:
                raise ValidationError(f"logprob must be <= 0, got {self.logprob}")


@dataclass(frozen=True)
class NBestEntry:
    segment: SourceSegment
    candidates: tuple[Candidate, ...]
    references: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "references", tuple(self.references))

    @property
    def sample_count(self) -> int:
        return sum(c.multiplicity for c in self.candidates)


@dataclass
class WeightsTable:
    """Ordered feature-name -> weight map (insertion order preserved)."""

    entries: dict[str, float]

    def __post_init__(self):
        for name, value in self.entries.items():
            if not math.isfinite(value):
                raise ValidationError(f"weight {name!r} must be finite")
        self.entries = dict(self.entries)

    def names(self) -> list[str]:
        return list(self.entries)

    def __getitem__(self, name: str) -> float:
        return self.entries[name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightsTable):
            return NotImplemented
        return list(self.entries.items()) == list(other.entries.items())


def dedup_candidates(candidates) -> tuple[Candidate, ...]:
    """Merge identical candidates into multiplicities, first occurrence first.

    Candidates merge when text, logprob and features all agree.
    """
    merged: dict[tuple, int] = {}
    order: list[tuple] = []
    originals: dict[tuple, Candidate] = {}
    for cand in candidates:
        key = (cand.text, cand.logprob, tuple(sorted(cand.features.items())))
        if key not in merged:
            merged[key] = 0
            order.append(key)
            originals[key] = cand
        merged[key] += cand.multiplicity
    out = []
    for key in order:
        base = originals[key]
        out.append(
            Candidate(
                text=base.text,
                logprob=base.logprob,
                features=dict(base.features),
                multiplicity=merged[key],
            )
        )
    return tuple(out)


def _candidate_from_json(obj, line_no: int) -> Candidate:
    if not isinstance(obj, dict) or "text" not in obj:
        raise ParseError("hypothesis record must be an object with a 'text' field", line_no)
    features = obj.get("features") or {}
    try:
        return Candidate(
            text=obj["text"],
            logprob=obj.get("logprob"),
            features={str(k): float(v) for k, v in features.items()},
            multiplicity=int(obj.get("count", 1)),
        )
    except ValidationError as exc:
        raise ParseError(str(exc), line_no) from None


def read_nbest(path, dedup: bool = False) -> list[NBestEntry]:
    """Read an N-best JSON-lines file; validates unique, increasing ids."""
    entries: list[NBestEntry] = []
    last_id = None
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip("\r\n")
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON record: {exc.msg}", line_no) from None
            if not isinstance(record, dict) or "id" not in record or "src" not in record:
                raise ParseError("record must be an object with 'id' and 'src'", line_no)
            seg_id = record["id"]
            if not isinstance(seg_id, int):
                raise ParseError(f"id must be an integer, got {seg_id!r}", line_no)
            if seg_id in seen_ids:
                raise ValidationError(f"line {line_no}: duplicate id {seg_id}")
            if last_id is not None and seg_id < last_id:
                raise ValidationError(
                    f"line {line_no}: ids must be strictly increasing "
                    f"({seg_id} after {last_id})"
                )
            seen_ids.add(seg_id)
            last_id = seg_id
            try:
                segment = SourceSegment(id=seg_id, text=record["src"])
            except ValidationError as exc:
                raise ParseError(str(exc), line_no) from None
            candidates = tuple(
                _candidate_from_json(h, line_no) for h in record.get("hyps", [])
            )
            if dedup:
                candidates = dedup_candidates(candidates)
            entries.append(
                NBestEntry(
                    segment=segment,
                    candidates=candidates,
                    references=tuple(record.get("refs", ())),
                )
            )
    return entries


def _candidate_to_json(cand: Candidate) -> dict:
    obj: dict = {"text": cand.text}
    if cand.logprob is not None:
        obj["logprob"] = cand.logprob
    if cand.features:
        obj["features"] = dict(cand.features)
    if cand.multiplicity != 1:
        obj["count"] = cand.multiplicity
    return obj


def write_nbest(entries, path) -> None:
    """Write entries as N-best JSON lines; inverse of :func:`read_nbest`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in entries:
            record: dict = {"id": entry.segment.id, "src": entry.segment.text}
            if entry.references:
                record["refs"] = list(entry.references)
            record["hyps"] = [_candidate_to_json(c) for c in entry.candidates]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_lines(path) -> list[str]:
    """All lines of a text file, newline-stripped; CRLF/CR tolerated."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    if text == "":
        return []
    if text.endswith("\n"):
        text = text[:-1]
    return text.split("\n")


def read_parallel(src_path, ref_path) -> list[tuple[str, str]]:
    """Line-aligned (source, reference) pairs; CRLF tolerated."""
    srcs = read_lines(src_path)
    refs = read_lines(ref_path)
    if len(srcs) != len(refs):
        raise AlignmentError(
            f"line count mismatch: {len(srcs)} source lines vs {len(refs)} reference lines"
        )
    return list(zip(srcs, refs))


def read_weights(path) -> WeightsTable:
    """Read a ``name<TAB>decimal`` weights file, order preserved."""
    entries: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(
                    f"expected 'name<TAB>decimal', got {line!r}", line_no
                )
            name, raw = parts
            if name in entries:
                raise ValidationError(f"line {line_no}: repeated weight name {name!r}")
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(f"non-numeric weight {raw!r}", line_no) from None
            if not math.isfinite(value):
                raise ParseError(f"weight {raw!r} is not finite", line_no)
            entries[name] = value
    return WeightsTable(entries)


def write_weights(table: WeightsTable, path) -> None:
    """Write a weights table; round-trips exactly (repr preserves all digits)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, value in table.entries.items():
            fh.write(f"{name}\t{value!r}\n")
