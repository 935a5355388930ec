"""Black-box service layer: a deterministic synthetic marketplace for
desk-scale experiments plus an HTTP client for real logprob-exposing
services.

Synthetic marketplace model
---------------------------
Service i has skill s_i, task j has difficulty delta_j, context k of task
j has helpfulness h_jk. Per-sample correctness probability is

    q = clip(s_i - delta_j + h_jk, 0, 1)

and each sample's F1 is q plus noise of scale 0.4*q*(1-q), snapped to a
0.1 grid (so q = 1 yields an exactly correct answer). Answers are built
from 10 reference tokens with round(10*f) of them reproduced, making the
token-overlap F1 equal f by construction.

Token probabilities track correctness at strength feature_fidelity
(phi): the per-sample target top-1 mass is

    mu_gen = (1 - phi) * 0.62 + phi * (0.35 + 0.60 * f + eta_gen)

with eta_gen ~ N(0, 0.08), and analogously mu_inp for the input-token
reconstruction scores with an independent eta_inp, so NLL and PPL carry
independently-noised views of the same signal. Step probabilities are
drawn in a +/-0.05 Beta(2,2) band around the target, floored at
0.9 * phi * f**8 (which pins the fully-confident extreme: phi = 1 and
f = 1 force top-1 >= 0.9). At phi = 0 no quantity depends on f.

A simulated fine-tune lifts per-sample correctness to
clip(1.3 * q + 0.05): away from the q ~ 0.73 saturation point the gain
0.3 * q + 0.05 grows with the service's base correctness, so on hard
tasks better-performing services gain more. This grounds the
fine-tune-target ranking scenario.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (ContextSpec, InvocationRecord, RecordStore, TaskDataset,
                   TokenStep)
from .errors import CapabilityError, ConfigurationError, TransportError
from .seeding import derive_rng

OUTPUT_STEPS = 4
INPUT_SCORE_LEN = 5
REF_TOKEN_COUNT = 10
CONTEXT_EXAMPLES = 3

_REF_TOKENS = tuple(f"ref{i}" for i in range(REF_TOKEN_COUNT))
_BAD_TOKENS = tuple(f"off{i}" for i in range(REF_TOKEN_COUNT))
_REF_TEXT = " ".join(_REF_TOKENS)
_PRED_TEXTS = tuple(" ".join(_REF_TOKENS[:r] + _BAD_TOKENS[r:])
                    for r in range(REF_TOKEN_COUNT + 1))


@dataclass(frozen=True)
class ServiceDescriptor:
    service_id: str
    kind: str  # "mock" | "http"
    capabilities: dict = field(default_factory=lambda: {
        "generation": True, "input_scoring": True, "top_k_depth": 3})
    config: dict = field(default_factory=dict)

    def supports_input_scoring(self):
        return bool(self.capabilities.get("input_scoring", False))


@dataclass(frozen=True)
class MarketplaceConfig:
    n_services: int = 5
    n_tasks: int = 13
    samples_per_task: int = 400
    contexts_per_task: int = 10
    skill_range: tuple = (0.2, 0.9)
    difficulty_range: tuple = (0.0, 0.45)
    helpfulness_range: tuple = (0.0, 0.10)
    feature_fidelity: float = 0.9
    seed: int = 0

    def __post_init__(self):
        for name in ("skill_range", "difficulty_range", "helpfulness_range"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ConfigurationError(f"{name} must be within [0, 1]")
        if not (0.0 <= self.feature_fidelity <= 1.0):
            raise ConfigurationError("feature_fidelity must be in [0, 1]")
        for name in ("n_services", "n_tasks", "samples_per_task",
                     "contexts_per_task"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    def service_id(self, i):
        return f"svc{i:02d}"

    def task_id(self, j):
        return f"task{j:02d}"

    def context_id(self, k):
        return f"ctx{k:02d}"

    def sample_id(self, m):
        return f"s{m:04d}"


@dataclass(frozen=True)
class MarketplaceTruth:
    """Generator parameters: the marketplace's own ground truth."""

    config: MarketplaceConfig
    skills: np.ndarray        # (I,)
    difficulties: np.ndarray  # (J,)
    helpfulness: np.ndarray   # (J, K)

    def correctness(self, i, j, k) -> float:
        return float(np.clip(self.skills[i] - self.difficulties[j]
                             + self.helpfulness[j, k], 0.0, 1.0))

    def finetuned_correctness(self, i, j, k) -> float:
        return float(np.clip(1.3 * self.correctness(i, j, k) + 0.05,
                             0.0, 1.0))

    def simulated_finetune_diff(self, i, j, k) -> float:
        """Expected performance gain of fine-tuning service i on task j."""
        return self.finetuned_correctness(i, j, k) - self.correctness(i, j, k)


def marketplace_truth(config: MarketplaceConfig) -> MarketplaceTruth:
    rng = derive_rng(config.seed, "marketplace-params")
    skills = rng.uniform(*config.skill_range, size=config.n_services)
    difficulties = rng.uniform(*config.difficulty_range, size=config.n_tasks)
    helpfulness = rng.uniform(*config.helpfulness_range,
                              size=(config.n_tasks,
                                    config.contexts_per_task))
    return MarketplaceTruth(config=config, skills=skills,
                            difficulties=difficulties,
                            helpfulness=helpfulness)


def _generate_setting(config: MarketplaceConfig, truth: MarketplaceTruth,
                      i: int, j: int, k: int):
    """All records for one (service, task, context), deterministic in
    (config.seed, i, j, k)."""
    m = config.samples_per_task
    phi = config.feature_fidelity
    q = truth.correctness(i, j, k)
    rng = derive_rng(config.seed, "records", i, j, k)

    eps = rng.normal(0.0, 1.0, size=m)
    eta_gen = rng.normal(0.0, 0.08, size=m)
    eta_inp = rng.normal(0.0, 0.08, size=m)
    band_gen = rng.beta(2.0, 2.0, size=(m, OUTPUT_STEPS))
    band_inp = rng.beta(2.0, 2.0, size=(m, INPUT_SCORE_LEN))

    sigma = 0.4 * q * (1.0 - q)
    f_grid = np.rint(10.0 * np.clip(q + sigma * eps, 0.0, 1.0)).astype(int)
    f = f_grid / 10.0

    mu_gen = (1 - phi) * 0.62 + phi * (0.35 + 0.60 * f + eta_gen)
    mu_inp = (1 - phi) * 0.58 + phi * (0.33 + 0.58 * f + eta_inp)
    floor = np.maximum(0.02, 0.9 * phi * f ** 8)
    p1 = np.clip(mu_gen[:, None] + 0.10 * (band_gen - 0.5),
                 floor[:, None], 0.995)
    scores = np.clip(mu_inp[:, None] + 0.10 * (band_inp - 0.5), 0.02, 0.995)
    p2 = np.minimum(p1, 0.55 * (1.0 - p1))
    p3 = np.minimum(p2, 0.30 * (1.0 - p1))

    service_id = config.service_id(i)
    task_id = config.task_id(j)
    context_id = config.context_id(k)
    records = []
    for s in range(m):
        r = f_grid[s]
        pred_tokens = (_REF_TOKENS[:r] + _BAD_TOKENS[r:])[:OUTPUT_STEPS]
        steps = []
        for t in range(OUTPUT_STEPS):
            a = p1[s, t]
            if a > 0.97:  # mimic services that return a single candidate
                probs = ((pred_tokens[t], a),)
            else:
                probs = ((pred_tokens[t], a), ("alt1", p2[s, t]),
                         ("alt2", p3[s, t]))
            steps.append(TokenStep(token=pred_tokens[t], top_probs=probs))
        records.append(InvocationRecord(
            service_id=service_id, task_id=task_id, context_id=context_id,
            sample_id=config.sample_id(s),
            input_text=f"{task_id} query {s}",
            generated_text=_PRED_TEXTS[r],
            output_steps=tuple(steps),
            input_scores=tuple(scores[s].tolist()),
            reference=_REF_TEXT))
    return records


def synth_marketplace(config: MarketplaceConfig):
    """Generate the full marketplace: service descriptors, task datasets
    (train split feeds contexts; test split is what gets invoked), and a
    record store covering every (service, task, context) triple."""
    truth = marketplace_truth(config)
    services = [ServiceDescriptor(
        service_id=config.service_id(i), kind="mock",
        capabilities={"generation": True, "input_scoring": True,
                      "top_k_depth": 3},
        config={"seed": config.seed, "service_index": i,
                "n_services": config.n_services, "n_tasks": config.n_tasks,
                "samples_per_task": config.samples_per_task,
                "contexts_per_task": config.contexts_per_task,
                "feature_fidelity": config.feature_fidelity})
        for i in range(config.n_services)]

    tasks = []
    for j in range(config.n_tasks):
        task_id = config.task_id(j)
        test_samples = tuple(
            (config.sample_id(s), f"{task_id} query {s}", _REF_TEXT)
            for s in range(config.samples_per_task))
        train_samples = tuple(
            (f"tr{s:03d}", f"{task_id} train query {s}", _REF_TEXT)
            for s in range(CONTEXT_EXAMPLES * config.contexts_per_task))
        tasks.append(TaskDataset(task_id=task_id, samples=test_samples,
                                 split="test"))
        tasks.append(TaskDataset(task_id=task_id, samples=train_samples,
                                 split="train"))

    store = RecordStore()
    for i in range(config.n_services):
        for j in range(config.n_tasks):
            for k in range(config.contexts_per_task):
                store.extend(_generate_setting(config, truth, i, j, k))
    return services, tasks, store


def marketplace_contexts(config: MarketplaceConfig, task_index: int):
    """The ContextSpec objects for one task (3 train examples each)."""
    task_id = config.task_id(task_index)
    out = []
    for k in range(config.contexts_per_task):
        examples = tuple(
            (f"{task_id} train query {k * CONTEXT_EXAMPLES + e}", _REF_TEXT)
            for e in range(CONTEXT_EXAMPLES))
        out.append(ContextSpec(context_id=config.context_id(k),
                               examples=examples, count=CONTEXT_EXAMPLES))
    return out


def _mock_indices(config, service_id, task_id, context_id, sample_id):
    try:
        i = int(service_id.removeprefix("svc"))
        j = int(task_id.removeprefix("task"))
        k = int(context_id.removeprefix("ctx"))
        s = int(sample_id.removeprefix("s"))
    except ValueError as exc:
        raise ConfigurationError(
            f"mock ids must follow the generator's naming: {exc}") from exc
    for name, v, hi in (("service", i, config.n_services),
                        ("task", j, config.n_tasks),
                        ("context", k, config.contexts_per_task),
                        ("sample", s, config.samples_per_task)):
        if not (0 <= v < hi):
            raise ConfigurationError(f"{name} index {v} out of range")
    return i, j, k, s


def invoke(service: ServiceDescriptor, input_text: str,
           context: ContextSpec, sample_id: str, task_id: str,
           mock_config: MarketplaceConfig | None = None,
           client=None) -> InvocationRecord:
    """Single invocation. Mock services are deterministic in
    (config seed, service, task, context, sample); HTTP services go
    through HttpClient."""
    if service.kind == "mock":
        if mock_config is None:
            raise ConfigurationError("mock invocation needs its "
                                     "MarketplaceConfig")
        truth = marketplace_truth(mock_config)
        i, j, k, s = _mock_indices(mock_config, service.service_id, task_id,
                                   context.context_id, sample_id)
        return _generate_setting(mock_config, truth, i, j, k)[s]
    if service.kind == "http":
        client = client or HttpClient(service)
        return client.invoke(input_text, context, sample_id, task_id)
    raise ConfigurationError(f"unknown service kind {service.kind!r}")


# ---------------------------------------------------------------------------
# HTTP client (OpenAI-compatible completions with logprobs)

class HttpClient:
    """Completions client for services that expose top-k token logprobs.

    Requests are retried up to `max_attempts` times with exponential
    backoff; responses missing logprob fields raise CapabilityError and
    nothing is fabricated. Input scoring uses the echo-with-logprobs
    form when the service supports it.
    """

    def __init__(self, descriptor: ServiceDescriptor, session=None,
                 max_attempts: int = 3, backoff: float = 0.5,
                 timeout: float = 60.0):
        self.descriptor = descriptor
        if session is None:
            import requests
            session = requests.Session()
        self.session = session
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.timeout = timeout

    def _post(self, payload):
        url = self.descriptor.config["endpoint"]
        last = None
        for attempt in range(self.max_attempts):
            try:
                resp = self.session.post(url, json=payload,
                                         timeout=self.timeout)
            except Exception as exc:  # connection-level failure
                last = exc
            else:
                if resp.status_code < 500:
                    return resp
                last = RuntimeError(f"HTTP {resp.status_code}")
            if attempt + 1 < self.max_attempts:
                time.sleep(self.backoff * 2 ** attempt)
        raise TransportError(
            f"service {self.descriptor.service_id} unreachable after "
            f"{self.max_attempts} attempts: {last}")

    def _completion_payload(self, prompt, echo):
        cfg = self.descriptor.config
        payload = {
            "model": cfg.get("model", self.descriptor.service_id),
            "prompt": prompt,
            "logprobs": int(self.descriptor.capabilities.get(
                "top_k_depth", 5)),
            "max_tokens": 0 if echo else int(cfg.get("max_tokens", 32)),
            "echo": echo,
            "temperature": 0,
        }
        return payload

    @staticmethod
    def _steps_from_logprobs(lp) -> tuple:
        tokens = lp.get("tokens")
        top = lp.get("top_logprobs")
        if tokens is None or top is None:
            raise CapabilityError(
                "response lacks token-level top logprobs; request the "
                "completion with logprobs enabled")
        steps = []
        for tok, cand in zip(tokens, top):
            if cand is None:
                raise CapabilityError(
                    f"no candidate logprobs returned for token {tok!r}")
            pairs = sorted(((t, float(np.exp(v))) for t, v in cand.items()),
                           key=lambda tp: -tp[1])
            steps.append(TokenStep(token=tok, top_probs=tuple(pairs)))
        return tuple(steps)

    def invoke(self, input_text, context: ContextSpec, sample_id,
               task_id) -> InvocationRecord:
        prompt = "".join(f"{q}\n{a}\n\n" for q, a in context.examples)
        prompt += input_text
        resp = self._post(self._completion_payload(prompt, echo=False))
        body = resp.json()
        try:
            choice = body["choices"][0]
        except (KeyError, IndexError) as exc:
            raise CapabilityError(f"malformed completion response: {exc}")
        lp = choice.get("logprobs")
        if lp is None:
            raise CapabilityError(
                f"service {self.descriptor.service_id} returned no "
                "logprobs field")
        steps = self._steps_from_logprobs(lp)

        input_scores = None
        if self.descriptor.supports_input_scoring():
            escore = self._post(self._completion_payload(prompt, echo=True))
            elp = escore.json()["choices"][0].get("logprobs")
            if elp is None or elp.get("token_logprobs") is None:
                raise CapabilityError(
                    "echo scoring returned no token logprobs")
            # first token has no conditioning context; services emit null
            vals = [v for v in elp["token_logprobs"] if v is not None]
            input_scores = tuple(float(np.exp(v)) for v in vals)

        rec = InvocationRecord(
            service_id=self.descriptor.service_id, task_id=task_id,
            context_id=context.context_id, sample_id=sample_id,
            input_text=input_text, generated_text=choice.get("text", ""),
            output_steps=steps, input_scores=input_scores, reference=None)
        rec.validate()
        return rec
