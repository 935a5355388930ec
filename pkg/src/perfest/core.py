"""Domain types and JSON Lines persistence for invocation records.

A record file is UTF-8 JSON Lines, one self-contained object per line.
Probabilities are stored linear (not log); log transforms happen at
feature-extraction time. The sequence length |x| used by downstream
features is the number of token steps returned by the service.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import ValidationError

_PROB_SUM_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class TokenStep:
    """One generated (or scored) token with its top-k candidate probabilities.

    top_probs is ordered non-increasing by probability; k may be as small
    as 1 (real services return varying depths).
    """

    token: str
    top_probs: tuple  # tuple of (token, prob), descending by prob

    def validate(self, line=None):
        if len(self.top_probs) < 1:
            raise ValidationError("top_probs must have length >= 1",
                                  field="top_probs", line=line)
        total = 0.0
        prev = float("inf")
        for tok, p in self.top_probs:
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"prob {p!r} outside [0, 1]",
                                      field="top_probs", line=line)
            if p > prev:
                raise ValidationError("top_probs not sorted non-increasing",
                                      field="top_probs", line=line)
            prev = p
            total += p
        if total > 1.0 + _PROB_SUM_TOL:
            raise ValidationError(f"top_probs sum {total} exceeds 1",
                                  field="top_probs", line=line)


@dataclass(frozen=True, slots=True)
class InvocationRecord:
    """One sample's full invocation episode against a black-box service."""

    service_id: str
    task_id: str
    context_id: str
    sample_id: str
    input_text: str
    generated_text: str
    output_steps: tuple  # tuple of TokenStep
    input_scores: Optional[tuple] = None  # per-input-token probs in (0, 1]
    reference: Optional[str] = None

    def validate(self, line=None, require_steps=False):
        if require_steps and len(self.output_steps) == 0:
            raise ValidationError("output_steps empty", field="output_steps",
                                  line=line)
        for step in self.output_steps:
            step.validate(line=line)
        if self.input_scores is not None:
            for s in self.input_scores:
                if not (0.0 < s <= 1.0):
                    raise ValidationError(
                        f"input score {s!r} outside (0, 1]",
                        field="input_scores", line=line)

    @property
    def key(self):
        return (self.service_id, self.task_id, self.context_id)


@dataclass(frozen=True, slots=True)
class TaskDataset:
    """Samples of one task: (sample_id, input_text, optional reference)."""

    task_id: str
    samples: tuple  # tuple of (sample_id, input_text, reference-or-None)
    split: str = "test"  # train | dev | test

    def validate(self):
        if self.split not in ("train", "dev", "test"):
            raise ValidationError(f"unknown split {self.split!r}", field="split")
        ids = [s[0] for s in self.samples]
        if len(ids) != len(set(ids)):
            raise ValidationError("duplicate sample_id within task",
                                  field="samples")


@dataclass(frozen=True, slots=True)
class ContextSpec:
    """In-context examples drawn from a task's train split."""

    context_id: str
    examples: tuple  # tuple of (input_text, reference)
    count: int

    def validate(self):
        if self.count != len(self.examples):
            raise ValidationError("count != len(examples)", field="count")


def _step_to_obj(step: TokenStep):
    return {"token": step.token,
            "top_probs": [[t, p] for t, p in step.top_probs]}


def _record_to_obj(rec: InvocationRecord):
    obj = {
        "service_id": rec.service_id,
        "task_id": rec.task_id,
        "context_id": rec.context_id,
        "sample_id": rec.sample_id,
        "input_text": rec.input_text,
        "generated_text": rec.generated_text,
        "output_steps": [_step_to_obj(s) for s in rec.output_steps],
    }
    if rec.input_scores is not None:
        obj["input_scores"] = list(rec.input_scores)
    if rec.reference is not None:
        obj["reference"] = rec.reference
    return obj


def _require(obj, name, line):
    if name not in obj:
        raise ValidationError(f"missing field {name!r}", field=name, line=line)
    return obj[name]


def record_from_obj(obj, line=None) -> InvocationRecord:
    """Build and validate a record from a parsed JSON object."""
    steps = []
    raw_steps = _require(obj, "output_steps", line)
    if not isinstance(raw_steps, list):
        raise ValidationError("output_steps must be an array",
                              field="output_steps", line=line)
    for raw in raw_steps:
        try:
            pairs = tuple((str(t), float(p)) for t, p in raw["top_probs"])
            steps.append(TokenStep(token=str(raw["token"]), top_probs=pairs))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed step: {exc}",
                                  field="output_steps", line=line) from exc
    scores = obj.get("input_scores")
    rec = InvocationRecord(
        service_id=str(_require(obj, "service_id", line)),
        task_id=str(_require(obj, "task_id", line)),
        context_id=str(_require(obj, "context_id", line)),
        sample_id=str(_require(obj, "sample_id", line)),
        input_text=str(_require(obj, "input_text", line)),
        generated_text=str(_require(obj, "generated_text", line)),
        output_steps=tuple(steps),
        input_scores=tuple(float(s) for s in scores) if scores is not None else None,
        reference=str(obj["reference"]) if obj.get("reference") is not None else None,
    )
    rec.validate(line=line)
    return rec


def read_records(path) -> list:
    """Read a JSON Lines record file, validating every line.

    Raises ValidationError naming the field and 1-based line number on the
    first malformed line; raises OSError for a missing file.
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for i, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid JSON: {exc}", line=i) from exc
            records.append(record_from_obj(obj, line=i))
    return records


def write_records(records: Sequence[InvocationRecord], path) -> None:
    """Write records as JSON Lines. read_records round-trips field-for-field."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            rec.validate()
            f.write(json.dumps(_record_to_obj(rec), ensure_ascii=False))
            f.write("\n")


def append_records(records: Sequence[InvocationRecord], path) -> None:
    """Append records to an existing (or new) JSON Lines file."""
    with open(path, "a", encoding="utf-8") as f:
        for rec in records:
            rec.validate()
            f.write(json.dumps(_record_to_obj(rec), ensure_ascii=False))
            f.write("\n")


def read_tasks(path) -> list:
    """Read a task JSON Lines file into TaskDataset objects (grouped by
    task_id and split)."""
    groups = {}
    with open(path, "r", encoding="utf-8") as f:
        for i, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid JSON: {exc}", line=i) from exc
            task_id = str(_require(obj, "task_id", i))
            sample_id = str(_require(obj, "sample_id", i))
            text = str(_require(obj, "input_text", i))
            ref = obj.get("reference")
            split = str(obj.get("split", "test"))
            groups.setdefault((task_id, split), []).append(
                (sample_id, text, str(ref) if ref is not None else None))
    tasks = []
    for (task_id, split), samples in sorted(groups.items()):
        ds = TaskDataset(task_id=task_id, samples=tuple(samples), split=split)
        ds.validate()
        tasks.append(ds)
    return tasks


def write_tasks(tasks: Sequence[TaskDataset], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ds in tasks:
            for sample_id, text, ref in ds.samples:
                obj = {"task_id": ds.task_id, "sample_id": sample_id,
                       "input_text": text, "split": ds.split}
                if ref is not None:
                    obj["reference"] = ref
                f.write(json.dumps(obj, ensure_ascii=False))
                f.write("\n")


class RecordStore:
    """In-memory record store indexed by (service_id, task_id, context_id).

    Append-only; iteration order is insertion order within each group.
    """

    def __init__(self, records=()):
        self._groups = {}
        self.extend(records)

    def extend(self, records):
        for rec in records:
            self._groups.setdefault(rec.key, []).append(rec)

    def get(self, service_id, task_id, context_id):
        return list(self._groups.get((service_id, task_id, context_id), ()))

    def keys(self):
        return sorted(self._groups.keys())

    def contexts_for_task(self, task_id):
        return sorted({c for (_, t, c) in self._groups if t == task_id})

    def __len__(self):
        return sum(len(v) for v in self._groups.values())

    def all_records(self):
        for key in self.keys():
            yield from self._groups[key]

    @classmethod
    def from_file(cls, path):
        return cls(read_records(path))

    def save(self, path):
        write_records(list(self.all_records()), path)
