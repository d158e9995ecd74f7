"""Response sources: LLM endpoints, simulated agents, human session files.

Each source yields ResponseRecords carrying the raw text a participant
produced for a trial. LLM calls go through an on-disk cache so reruns are
network-free; simulated agents are pure functions of (trial, spec, seed).
"""

from __future__ import annotations

import json
import os
import random
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path
from typing import Mapping, Optional, Sequence

import httpx

from .errors import (ApiError, DuplicateResponse, FormatError, SchemaError,
                     SpecError, TransportError, UnknownTrial)
from .seeding import derive_rng
from .stats import random_span
from .taskgen import Trial, detokenize, remainder_tokens, render_prompt
from .treebank import base_label, binarize, node_spans, parse_bracketed, \
    span_index

API_KEY_ENV = "PROBE_API_KEY"
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})
MIX_RULES = ("node", "parent", "random-span", "other")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "llm"
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.0
    max_tokens: int = 200
    request_timeout: float = 30.0
    max_retries: int = 3
    cache_dir: Optional[str] = None
    agent_spec: Optional[str] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise FormatError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise FormatError("max_tokens must be >= 1")
        if self.max_retries < 0:
            raise FormatError("max_retries must be >= 0")


@dataclass(frozen=True)
class ResponseRecord:
    trial_id: str
    backend: str
    raw_text: str
    latency_ms: float
    cached: bool
    timestamp: float
    fallback: Optional[str] = None

    def to_dict(self) -> dict:
        out = {
            "trial_id": self.trial_id,
            "backend": self.backend,
            "raw_text": self.raw_text,
            "latency_ms": self.latency_ms,
            "cached": self.cached,
            "timestamp": self.timestamp,
        }
        if self.fallback is not None:
            out["fallback"] = self.fallback
        return out


def response_from_dict(data: Mapping) -> ResponseRecord:
    try:
        return ResponseRecord(
            trial_id=data["trial_id"], backend=data["backend"],
            raw_text=data["raw_text"], latency_ms=data["latency_ms"],
            cached=data["cached"], timestamp=data["timestamp"],
            fallback=data.get("fallback"))
    except KeyError as exc:
        raise SchemaError(f"response record missing key {exc}") from exc


# -- LLM backend -----------------------------------------------------------

def _cache_key(config: BackendConfig, prompt: str) -> str:
    payload = json.dumps({
        "endpoint": config.endpoint_url,
        "model": config.model_name,
        "prompt": prompt,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }, sort_keys=True, ensure_ascii=False)
    return sha256(payload.encode("utf-8")).hexdigest()


def _cache_read(config: BackendConfig, key: str) -> Optional[dict]:
    if not config.cache_dir:
        return None
    path = Path(config.cache_dir) / f"{key}.json"
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def _cache_write(config: BackendConfig, key: str, entry: dict) -> None:
    if not config.cache_dir:
        return
    directory = Path(config.cache_dir)
    directory.mkdir(parents=True, exist_ok=True)
    tmp = directory / f".{key}.{uuid.uuid4().hex}.tmp"
    tmp.write_text(json.dumps(entry, sort_keys=True, ensure_ascii=False),
                   encoding="utf-8")
    os.replace(tmp, directory / f"{key}.json")


def query_llm(prompt: str, config: BackendConfig, trial_id: str = "",
              transport: Optional[httpx.BaseTransport] = None,
              sleep=time.sleep) -> ResponseRecord:
    """One independent chat completion, cached on disk by request content.

    The request carries a single user message and no history, so every
    trial is answered from a cold context. The bearer token is read from
    the environment alone.
    """
    backend = f"llm:{config.model_name}"
    key = _cache_key(config, prompt)
    hit = _cache_read(config, key)
    if hit is not None:
        return ResponseRecord(trial_id=trial_id, backend=backend,
                              raw_text=hit["raw_text"],
                              latency_ms=hit["latency_ms"], cached=True,
                              timestamp=hit["timestamp"])
    body = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error = None
    with httpx.Client(transport=transport,
                      timeout=config.request_timeout) as client:
        for attempt in range(config.max_retries + 1):
            if attempt:
                sleep(0.5 * 2 ** (attempt - 1) * (1 + random.random() / 4))
            started = time.monotonic()
            try:
                resp = client.post(config.endpoint_url, json=body,
                                   headers=headers)
            except httpx.TransportError as exc:
                last_error = f"transport failure: {exc}"
                continue
            if resp.status_code in RETRYABLE_STATUSES:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ApiError(f"HTTP {resp.status_code}: {resp.text[:200]}",
                               status=resp.status_code,
                               body=resp.text[:2000])
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ApiError(f"malformed completion body: {exc}") from exc
            latency = (time.monotonic() - started) * 1000.0
            entry = {"raw_text": text, "latency_ms": latency,
                     "timestamp": time.time()}
            _cache_write(config, key, entry)
            return ResponseRecord(trial_id=trial_id, backend=backend,
                                  raw_text=text, latency_ms=latency,
                                  cached=False,
                                  timestamp=entry["timestamp"])
    raise TransportError(
        f"gave up after {config.max_retries + 1} attempts: {last_error}")


# -- simulated agents ------------------------------------------------------

def parse_agent_spec(spec: str) -> list[tuple[str, float]]:
    """Expand an agent spec to (rule, probability) pairs summing to 1."""
    spec = spec.strip()
    if spec in ("node", "parent", "random-span", "tree-span"):
        return [(spec, 1.0)]
    if spec.startswith("mix(") and spec.endswith(")"):
        pairs = []
        for part in spec[4:-1].split(","):
            if "=" not in part:
                raise SpecError(f"bad mixture component {part!r}")
            name, _, value = part.partition("=")
            name = name.strip()
            if name not in MIX_RULES:
                raise SpecError(f"unknown mixture rule {name!r}")
            if any(name == seen for seen, _ in pairs):
                raise SpecError(f"duplicate mixture rule {name!r}")
            try:
                prob = float(value)
            except ValueError as exc:
                raise SpecError(f"bad probability {value!r}") from exc
            if not (0 <= prob <= 1):
                raise SpecError(f"probability {prob} outside [0, 1]")
            pairs.append((name, prob))
        if not pairs or abs(sum(p for _, p in pairs) - 1.0) > 1e-9:
            raise SpecError(f"mixture probabilities must sum to 1: {spec!r}")
        return pairs
    raise SpecError(f"unparseable agent spec {spec!r}")


def _rule_candidates(rule: str, trial: Trial, tree, index):
    if rule == "node":
        return sorted(span for span, info in index.items()
                      if base_label(info.category) == trial.demo.node_cat)
    if rule == "parent":
        return sorted(span for span, info in index.items()
                      if info.parent_category is not None
                      and trial.demo.parent_cat is not None
                      and base_label(info.parent_category)
                      == trial.demo.parent_cat)
    if rule == "tree-span":
        return sorted(node_spans(binarize(tree)))
    return None


def sim_respond(trial: Trial, agent_spec: str, seed: int) -> ResponseRecord:
    """Deterministic rule-based answer for one trial."""
    rules = parse_agent_spec(agent_spec)
    tree = parse_bracketed(trial.test.tree, lang=trial.test.lang)
    index = span_index(tree)
    tokens = list(trial.test.tokens)
    rng = derive_rng(seed, "sim", trial.trial_id)
    if len(rules) == 1:
        rule = rules[0][0]
    else:
        # rule selection draws from its own stream so a degenerate mixture
        # behaves exactly like the pure agent
        rule_rng = derive_rng(seed, "sim-rule", trial.trial_id)
        names = [name for name, _ in rules]
        probs = [prob for _, prob in rules]
        rule = names[int(rule_rng.choice(len(names), p=probs))]

    fallback = None
    if rule == "other":
        return ResponseRecord(trial_id=trial.trial_id,
                              backend=f"sim:{agent_spec}",
                              raw_text=detokenize(tokens, trial.test.lang),
                              latency_ms=0.0, cached=False, timestamp=0.0)
    if rule == "random-span":
        span = random_span(len(tokens), rng)
    else:
        candidates = _rule_candidates(rule, trial, tree, index)
        if not candidates:
            for substitute in ("node", "parent", "random-span"):
                if substitute == rule:
                    continue
                candidates = _rule_candidates(substitute, trial, tree, index)
                if substitute == "random-span":
                    fallback = substitute
                    break
                if candidates:
                    fallback = substitute
                    break
        if fallback == "random-span":
            span = random_span(len(tokens), rng)
        else:
            span = candidates[int(rng.integers(len(candidates)))]
    remainder = remainder_tokens(tokens, span)
    return ResponseRecord(trial_id=trial.trial_id,
                          backend=f"sim:{agent_spec}",
                          raw_text=detokenize(remainder, trial.test.lang),
                          latency_ms=0.0, cached=False, timestamp=0.0,
                          fallback=fallback)


# -- human session import --------------------------------------------------

REQUIRED_SESSION_KEYS = ("session_id", "trial_id", "text")


def import_sessions(files: Sequence, trials: Sequence[Trial],
                    ) -> tuple[list[ResponseRecord], list[str]]:
    """Turn session export files into response records.

    Returns the records plus the ids of trials nobody answered. A second
    answer for the same trial within one session is an error.
    """
    known = {t.trial_id for t in trials}
    answered: set[str] = set()
    records: list[ResponseRecord] = []
    for path in files:
        seen_here: set[str] = set()
        for line_no, line in enumerate(
                Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: not JSON: {exc}") \
                    from exc
            for key in REQUIRED_SESSION_KEYS:
                if key not in row:
                    raise SchemaError(f"{path}:{line_no}: missing {key!r}")
            trial_id = row["trial_id"]
            if trial_id not in known:
                raise UnknownTrial(f"{path}:{line_no}: {trial_id!r}")
            if trial_id in seen_here:
                raise DuplicateResponse(f"{path}:{line_no}: {trial_id!r}")
            seen_here.add(trial_id)
            answered.add(trial_id)
            records.append(ResponseRecord(
                trial_id=trial_id,
                backend=f"human:{row['session_id']}",
                raw_text=row["text"],
                latency_ms=float(row.get("latency_ms", 0.0)),
                cached=False,
                timestamp=float(row.get("timestamp", 0.0))))
    unanswered = sorted(known - answered)
    return records, unanswered


# -- batch driver ----------------------------------------------------------

def respond_all(trials: Sequence[Trial], config: BackendConfig,
                seed: int = 0, transport=None, sleep=time.sleep,
                parallel: int = 1,
                template_id: str = "default") -> list[ResponseRecord]:
    """Answer every trial with the configured backend, in trial order."""
    if config.kind == "sim":
        if not config.agent_spec:
            raise SpecError("sim backend needs an agent_spec")
        return [sim_respond(t, config.agent_spec, seed) for t in trials]
    if config.kind != "llm":
        raise FormatError(f"backend kind {config.kind!r} cannot respond")

    def ask(trial: Trial) -> ResponseRecord:
        prompt = render_prompt(trial, template_id=template_id)
        return query_llm(prompt, config, trial_id=trial.trial_id,
                         transport=transport, sleep=sleep)

    if parallel <= 1:
        return [ask(t) for t in trials]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(ask, trials))
