"""Per-sequence token-probability features.

Four features are computed from a single invocation record:

* nll      -- negative log-likelihood of the generated answer (sum of
              -ln p_top1 over steps); lower means more confident.
* ppl      -- perplexity of the input reconstruction; lower means the
              service is more familiar with the input text.
* gap      -- summed margin between the top-1 and top-2 candidate
              probabilities; higher means more decisive.
* max_ent  -- maximum per-step Shannon entropy (natural log) of the
              truncated-and-renormalized top-k distribution; lower means
              more certain.

Probabilities below 1e-12 are rejected outright rather than floored:
real APIs never return exact zeros for chosen tokens, so a zero here is
an upstream bug worth surfacing.
"""

from __future__ import annotations

import math
from enum import Enum

from .core import InvocationRecord
from .errors import (CapabilityError, DegenerateProbabilityError,
                     GroupingError, ValidationError)

PROB_FLOOR = 1e-12


class FeatureKind(str, Enum):
    NLL = "nll"
    PPL = "ppl"
    GAP = "gap"
    MAXENT = "max_ent"


def sample_features(record: InvocationRecord, kinds=None, ppl_mode="normalized"):
    """All requested features for one record, as {FeatureKind: value}."""
    kinds = list(FeatureKind) if kinds is None else [FeatureKind(k) for k in kinds]
    out = {}
    for kind in kinds:
        if kind is FeatureKind.PPL:
            out[kind] = ppl(record, mode=ppl_mode)
        else:
            out[kind] = _EXTRACTORS[kind](record)
    return out


def _require_steps(record: InvocationRecord):
    if len(record.output_steps) == 0:
        raise ValidationError("record has no output steps",
                              field="output_steps")


def nll(record: InvocationRecord) -> float:
    """Sum of -ln(top-1 probability) over the generated steps."""
    _require_steps(record)
    total = 0.0
    for step in record.output_steps:
        p = step.top_probs[0][1]
        if p < PROB_FLOOR:
            raise DegenerateProbabilityError(
                f"top probability {p!r} below {PROB_FLOOR} in sample "
                f"{record.sample_id!r}")
        total -= math.log(p)
    return total


def ppl(record: InvocationRecord, mode: str = "normalized") -> float:
    """Input-reconstruction perplexity.

    mode="normalized" (default) returns exp(mean of -ln score), which is
    comparable across input lengths. mode="summed" returns exp(sum),
    the unnormalized exponentiated reconstruction loss.
    """
    if mode not in ("normalized", "summed"):
        raise ValueError(f"unknown ppl mode {mode!r}")
    if record.input_scores is None or len(record.input_scores) == 0:
        raise CapabilityError(
            "record has no input_scores; PPL requires a service with "
            "input-scoring capability")
    total = 0.0
    for s in record.input_scores:
        if s < PROB_FLOOR:
            raise DegenerateProbabilityError(
                f"input score {s!r} below {PROB_FLOOR} in sample "
                f"{record.sample_id!r}")
        total -= math.log(s)
    if mode == "normalized":
        return math.exp(total / len(record.input_scores))
    return math.exp(total)


def gap(record: InvocationRecord) -> float:
    """Summed (p_top1 - p_top2) over steps; p_top2 is 0 when k == 1."""
    _require_steps(record)
    total = 0.0
    for step in record.output_steps:
        p1 = step.top_probs[0][1]
        p2 = step.top_probs[1][1] if len(step.top_probs) > 1 else 0.0
        total += p1 - p2
    return total


def _step_entropy(step) -> float:
    mass = sum(p for _, p in step.top_probs)
    if mass < PROB_FLOOR:
        raise DegenerateProbabilityError(
            "step has no probability mass to renormalize")
    h = 0.0
    for _, p in step.top_probs:
        q = p / mass
        if q > 0.0:
            h -= q * math.log(q)
    return h


def max_ent(record: InvocationRecord) -> float:
    """Maximum per-step entropy of the renormalized top-k distribution.

    The full vocabulary distribution is unavailable from a black-box
    service, so the truncated top-k mass is renormalized to 1; this
    biases the entropy downward, which is acceptable since only relative
    comparisons are consumed downstream.
    """
    _require_steps(record)
    return max(_step_entropy(step) for step in record.output_steps)


_EXTRACTORS = {
    FeatureKind.NLL: nll,
    FeatureKind.PPL: ppl,
    FeatureKind.GAP: gap,
    FeatureKind.MAXENT: max_ent,
}


def extract_task_features(records, kinds, ppl_mode: str = "normalized"):
    """Compute one value per record for each requested feature kind.

    All records must share (service_id, task_id, context_id). Returns a
    dict FeatureKind -> list of floats in record order.
    """
    records = list(records)
    if not records:
        raise GroupingError("no records to extract features from")
    key = records[0].key
    for rec in records:
        if rec.key != key:
            raise GroupingError(
                f"mixed groups: {rec.key} vs {key}; extract features per "
                "(service, task, context)")
    out = {}
    for kind in kinds:
        kind = FeatureKind(kind)
        if kind is FeatureKind.PPL:
            out[kind] = [ppl(r, mode=ppl_mode) for r in records]
        else:
            fn = _EXTRACTORS[kind]
            out[kind] = [fn(r) for r in records]
    return out


def sequence_confidence(record: InvocationRecord) -> float:
    """Length-normalized sequence likelihood exp(-nll/|x|), in (0, 1].

    Used as the per-sample confidence for threshold-based baselines.
    """
    return math.exp(-nll(record) / len(record.output_steps))
