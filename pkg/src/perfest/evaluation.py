"""Ground-truth scoring, error metrics, cross-validation, and the
experiment runner that pits meta-models against the baselines.

Performances and errors are fractions in [0, 1]; rendered tables scale
by 100 for readability.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field

import numpy as np

from . import baselines as bl
from . import metamodels as mm
from .core import RecordStore
from .errors import (ConfigurationError, CoverageError,
                     InsufficientDataError, ValidationError)
from .features import FeatureKind, sequence_confidence
from .profile import build_profile
from .seeding import derive_rng

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _normalize_tokens(text: str):
    return text.lower().translate(_PUNCT_TABLE).split()


def f1_score(prediction: str, reference: str) -> float:
    """Token-overlap F1 with lowercase + punctuation-stripped whitespace
    tokens (bag-of-words overlap). Both empty -> 1.0; one empty -> 0.0."""
    pred = _normalize_tokens(prediction)
    ref = _normalize_tokens(reference)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    counts = {}
    for tok in pred:
        counts[tok] = counts.get(tok, 0) + 1
    overlap = 0
    for tok in ref:
        if counts.get(tok, 0) > 0:
            counts[tok] -= 1
            overlap += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def per_sample_f1(records):
    """Per-record F1 against the reference; all records must be labeled."""
    out = []
    for rec in records:
        if rec.reference is None:
            raise ValidationError(
                f"record {rec.sample_id!r} has no reference; cannot score",
                field="reference")
        out.append(f1_score(rec.generated_text, rec.reference))
    return out


def task_performance(records) -> float:
    """Mean per-sample F1 for one (service, task, context) group."""
    scores = per_sample_f1(list(records))
    if not scores:
        raise InsufficientDataError("no records to score")
    return sum(scores) / len(scores)


def mae(pairs):
    """Mean and population standard deviation of |estimate - truth|."""
    pairs = list(pairs)
    if not pairs:
        raise InsufficientDataError("mae of zero pairs is undefined")
    errors = np.array([abs(e - t) for e, t in pairs])
    return float(errors.mean()), float(errors.std())


def kfold_split(n: int, folds: int, seed: int, groups=None):
    """Deterministic k-fold index split.

    Without groups: a seeded shuffle partitioned into folds whose sizes
    differ by at most one. With groups (a length-n list of group labels),
    whole groups are assigned to folds so no group straddles a boundary.
    Returns a list of (train_indices, test_indices) tuples.
    """
    if folds < 2:
        raise ConfigurationError(f"folds must be >= 2, got {folds}")
    rng = derive_rng(seed, "kfold")
    if groups is None:
        if n < folds:
            raise ConfigurationError(f"{n} rows cannot fill {folds} folds")
        perm = rng.permutation(n)
        parts = np.array_split(perm, folds)
    else:
        if len(groups) != n:
            raise ConfigurationError("groups must have one label per row")
        uniq = sorted(set(groups))
        if len(uniq) < folds:
            raise ConfigurationError(
                f"{len(uniq)} groups cannot fill {folds} folds")
        order = rng.permutation(len(uniq))
        group_parts = np.array_split([uniq[i] for i in order], folds)
        by_group = {}
        for i, g in enumerate(groups):
            by_group.setdefault(g, []).append(i)
        parts = [np.array(sorted(i for g in part for i in by_group[g]),
                          dtype=int)
                 for part in group_parts]
    out = []
    all_idx = set(range(n))
    for part in parts:
        test = sorted(int(i) for i in part)
        train = sorted(all_idx.difference(test))
        out.append((train, test))
    return out


DEFAULT_BASELINES = ("avg_train", "atc", "sample_8", "sample_16", "sample_32")


@dataclass(frozen=True)
class ExperimentPlan:
    services: tuple
    tasks: tuple
    contexts_per_task: int
    unlabeled_n: int = 400
    d: int = 100
    feature_kinds: tuple = (FeatureKind.NLL, FeatureKind.PPL)
    model_specs: tuple = ()
    baselines: tuple = DEFAULT_BASELINES
    folds: int = 5
    seed: int = 0
    ppl_mode: str = "normalized"

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "feature_kinds",
                           tuple(FeatureKind(k) for k in self.feature_kinds))
        object.__setattr__(self, "model_specs", tuple(self.model_specs))
        object.__setattr__(self, "baselines", tuple(self.baselines))
        for name, v in (("services", len(self.services)),
                        ("tasks", len(self.tasks)),
                        ("contexts_per_task", self.contexts_per_task),
                        ("unlabeled_n", self.unlabeled_n), ("d", self.d),
                        ("folds", self.folds)):
            if v < 1:
                raise ConfigurationError(f"plan field {name} must be >= 1")


@dataclass
class ReportRow:
    service_id: str
    task_id: str
    context_id: str
    estimator: str
    estimate: float
    true_performance: float
    absolute_error: float


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)  # estimator -> (mae, sd)

    def errors_for(self, estimator):
        return [r.absolute_error for r in self.rows
                if r.estimator == estimator]

    def to_obj(self):
        return {
            "rows": [[r.service_id, r.task_id, r.context_id, r.estimator,
                      r.estimate, r.true_performance, r.absolute_error]
                     for r in self.rows],
            "aggregates": {k: list(v) for k, v in
                           sorted(self.aggregates.items())},
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_obj(), f, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
        rep = cls()
        rep.rows = [ReportRow(*row) for row in obj["rows"]]
        rep.aggregates = {k: tuple(v) for k, v in obj["aggregates"].items()}
        return rep


def render_table(report: ExperimentReport, services) -> str:
    """Estimators x services summary (MAE +/- SD, in F1 percentage points)."""
    estimators = sorted({r.estimator for r in report.rows})
    by = {}
    for r in report.rows:
        by.setdefault((r.estimator, r.service_id), []).append(
            r.absolute_error)
    width = max(len(e) for e in estimators) + 2
    header = "estimator".ljust(width) + "".join(
        s.rjust(16) for s in list(services) + ["total"])
    lines = [header, "-" * len(header)]
    for est in estimators:
        cells = []
        for svc in list(services) + [None]:
            if svc is None:
                errs = [e for (es, sv), v in by.items() if es == est
                        for e in v]
            else:
                errs = by.get((est, svc), [])
            if errs:
                arr = np.array(errs)
                cells.append(f"{100 * arr.mean():.2f}±{100 * arr.std():.2f}"
                             .rjust(16))
            else:
                cells.append("-".rjust(16))
        lines.append(est.ljust(width) + "".join(cells))
    return "\n".join(lines)


@dataclass
class _SettingData:
    truth: float
    per_f1: list          # per-sample F1, record order, all records
    sampled_f1: list      # per-sample F1 of the unlabeled subset
    profile: object
    confidences: np.ndarray  # from the sampled unlabeled subset, sorted


def _prepare_setting(plan, records, s, t, c):
    per_f1 = per_sample_f1(records)
    truth = sum(per_f1) / len(per_f1)
    rng = derive_rng(plan.seed, "unlabeled", s, t, c)
    k = min(plan.unlabeled_n, len(records))
    idx = np.sort(rng.choice(len(records), size=k, replace=False))
    sampled = [records[i] for i in idx]
    profile = build_profile(sampled, plan.feature_kinds, plan.d,
                            ppl_mode=plan.ppl_mode)
    conf = np.sort([sequence_confidence(r) for r in sampled])
    return _SettingData(truth=truth, per_f1=per_f1,
                        sampled_f1=[per_f1[i] for i in idx],
                        profile=profile, confidences=conf)


def _estimator_name(spec, index, specs):
    same_kind = [sp for sp in specs if sp.kind == spec.kind]
    if len(same_kind) > 1:
        return f"{spec.kind.value}#{index}"
    return spec.kind.value


def run_experiment(plan: ExperimentPlan, store: RecordStore) -> ExperimentReport:
    """Grouped cross-validated comparison of meta-models and baselines.

    For each fold, meta-models are trained on the train-task settings and
    applied to the test-task settings; baselines are computed from the
    train-fold labels (Sample^n uses the target task's own labeled
    samples, as defined). Fully deterministic under plan.seed.
    """
    contexts = {}
    missing = []
    for t in plan.tasks:
        ctxs = store.contexts_for_task(t)[:plan.contexts_per_task]
        if len(ctxs) < plan.contexts_per_task:
            missing.append(("*", t, f"<{plan.contexts_per_task} contexts>"))
        contexts[t] = ctxs
    settings = [(s, t, c) for s in plan.services for t in plan.tasks
                for c in contexts[t]]
    for key in settings:
        if not store.get(*key):
            missing.append(key)
    if missing:
        raise CoverageError(
            f"record store is missing {len(missing)} required "
            f"(service, task, context) groups", missing=missing)

    data = {key: _prepare_setting(plan, store.get(*key), *key)
            for key in settings}

    # Sample^n estimates depend only on (service, task); precompute
    sample_ns = sorted(int(b.split("_", 1)[1]) for b in plan.baselines
                       if b.startswith("sample_"))
    sample_est = {}
    for n in sample_ns:
        for s in plan.services:
            for t in plan.tasks:
                vals = []
                for c in contexts[t]:
                    per = data[(s, t, c)].per_f1
                    if len(per) < n:
                        raise InsufficientDataError(
                            f"setting {(s, t, c)} has {len(per)} labeled "
                            f"samples, need {n}")
                    rng = derive_rng(plan.seed, "samplen", s, t, c)
                    order = rng.permutation(len(per))
                    vals.append(float(np.mean([per[i] for i in order[:n]])))
                sample_est[(n, s, t)] = float(np.mean(vals))

    groups = [t for (_, t, _) in settings]
    splits = kfold_split(len(settings), plan.folds, plan.seed, groups=groups)

    report = ExperimentReport()
    for train_idx, test_idx in splits:
        train_keys = [settings[i] for i in train_idx]
        test_keys = [settings[i] for i in test_idx]
        train_rows = [mm.TrainingRow(profile=data[k].profile,
                                     target=data[k].truth)
                      for k in train_keys]

        estimates = {}  # estimator -> {key: estimate}
        for i, spec in enumerate(plan.model_specs):
            name = _estimator_name(spec, i, plan.model_specs)
            model = mm.train(spec, train_rows, plan.seed)
            preds = mm.predict_many(model,
                                    [data[k].profile for k in test_keys])
            estimates[name] = dict(zip(test_keys, preds.tolist()))

        if "avg_train" in plan.baselines:
            per_service = {
                s: bl.avg_train_estimate(
                    [data[k].truth for k in train_keys if k[0] == s])
                for s in plan.services}
            estimates["avg_train"] = {k: per_service[k[0]]
                                      for k in test_keys}
        if "atc" in plan.baselines:
            calibs = {s: [] for s in plan.services}
            for k in train_keys:
                d = data[k]
                calibs[k[0]].append(bl.atc_calibrate(
                    d.confidences, d.sampled_f1,
                    source_task_id=k[1], context_id=k[2]))
            estimates["atc"] = {
                k: bl.atc_estimate(calibs[k[0]], data[k].confidences)
                for k in test_keys}
        for n in sample_ns:
            estimates[f"sample_{n}"] = {
                k: sample_est[(n, k[0], k[1])] for k in test_keys}

        for name in sorted(estimates):
            for key in test_keys:
                est = float(estimates[name][key])
                truth = data[key].truth
                report.rows.append(ReportRow(
                    service_id=key[0], task_id=key[1], context_id=key[2],
                    estimator=name, estimate=est, true_performance=truth,
                    absolute_error=abs(est - truth)))

    for name in sorted({r.estimator for r in report.rows}):
        pairs = [(r.estimate, r.true_performance) for r in report.rows
                 if r.estimator == name]
        report.aggregates[name] = mae(pairs)
    return report
