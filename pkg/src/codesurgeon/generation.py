"""Randomized generation campaigns and extraction of tagged samples."""

from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import templates
from .gateway import ChatRequest, ChatResponse, Gateway
from .samples import (
    BUG_TYPES,
    LANGUAGES,
    CorpusStats,
    IdFactory,
    SyntheticSample,
    corpus_stats,
    format_timestamp,
    validate_sample,
)

logger = logging.getLogger(__name__)

TAGS = ("error_description", "buggy_code", "fixed_code")
REJECTION_CATEGORIES = ("missing-tag", "unbalanced-tag", "empty-section", "no-change", "transport-error")


@dataclass(frozen=True)
class GenerationTask:
    language: str
    bug_type: str
    model: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language {self.language!r}")
        if self.bug_type not in BUG_TYPES:
            raise ValueError(f"unknown bug type {self.bug_type!r}")


@dataclass(frozen=True)
class CampaignConfig:
    models: tuple[str, ...]
    samples_per_model: int = 5000
    temperature: float = 0.7
    rng_seed: int = 0
    max_tokens: int = 2048
    epoch: datetime | None = None

    def __post_init__(self):
        if self.samples_per_model < 1:
            raise ValueError("samples_per_model must be >= 1")
        if not self.models:
            raise ValueError("at least one model is required")
        if len(set(self.models)) != len(self.models):
            raise ValueError("model names must be unique")


class Rejection(str):
    """A rejection category; a plain ``str`` subclass so it compares to literals."""


def task_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def pick_task(rng: np.random.Generator, model: str = "", seed: int = 0) -> GenerationTask:
    lang = LANGUAGES[int(rng.integers(len(LANGUAGES)))]
    bug = BUG_TYPES[int(rng.integers(len(BUG_TYPES)))]
    return GenerationTask(language=lang, bug_type=bug, model=model, seed=seed)


def build_generation_prompt(task: GenerationTask) -> tuple[str, str]:
    system = templates.load("generation", "system")
    user = templates.load("generation", "user").format(
        language=task.language, bug_type=task.bug_type
    )
    return system, user


def _strip_one_newline(text: str) -> str:
    if text.startswith("\r\n"):
        text = text[2:]
    elif text.startswith("\n"):
        text = text[1:]
    if text.endswith("\r\n"):
        text = text[:-2]
    elif text.endswith("\n"):
        text = text[:-1]
    return text


def _extract_sections(raw: str) -> dict[str, str] | Rejection:
    spans: dict[str, tuple[int, int]] = {}
    for tag in TAGS:
        opens = [m.start() for m in re.finditer(f"<{tag}>", raw)]
        closes = [m.start() for m in re.finditer(f"</{tag}>", raw)]
        if not opens and not closes:
            return Rejection("missing-tag")
        if len(opens) != 1 or len(closes) != 1:
            return Rejection("unbalanced-tag")
        start = opens[0] + len(tag) + 2
        end = closes[0]
        if end < start:
            return Rejection("unbalanced-tag")
        spans[tag] = (start, end)
    # sections must not nest or interleave
    ordered = sorted(spans.values())
    for (s1, e1), (s2, _) in zip(ordered, ordered[1:]):
        if s2 < e1:
            return Rejection("unbalanced-tag")
    return {tag: _strip_one_newline(raw[s:e]) for tag, (s, e) in spans.items()}


def extract_tagged_sample(
    raw: str,
    task: GenerationTask,
    sample_id: str = "",
    created_at: str = "",
) -> SyntheticSample | Rejection:
    """Parse a tagged model response into a sample, or return a rejection.

    Each of the three tags must occur exactly once as an open/close pair;
    section order is free.  Content is kept verbatim apart from one leading
    and one trailing newline.
    """
    sections = _extract_sections(raw)
    if isinstance(sections, Rejection):
        return sections
    if any(not v.strip() for v in sections.values()):
        return Rejection("empty-section")
    sample = SyntheticSample(
        id=sample_id,
        language=task.language,
        bug_type=task.bug_type,
        description=sections["error_description"],
        buggy_code=sections["buggy_code"],
        fixed_code=sections["fixed_code"],
        generator_model=task.model,
        created_at=created_at,
    )
    reason = validate_sample(sample)
    if reason is not None:
        return Rejection("no-change" if reason == "no-change" else "empty-section")
    return sample


@dataclass
class CampaignResult:
    corpus: list[SyntheticSample]
    stats: CorpusStats
    tasks: list[GenerationTask]
    outcomes: list[str]


def campaign_tasks(cfg: CampaignConfig) -> list[GenerationTask]:
    tasks = []
    index = 0
    for model in cfg.models:
        for _ in range(cfg.samples_per_model):
            rng = task_rng(cfg.rng_seed, index)
            task_seed = int(rng.integers(2**31 - 1))
            tasks.append(pick_task(rng, model=model, seed=task_seed))
            index += 1
    return tasks


def generation_request(task: GenerationTask, cfg: CampaignConfig) -> ChatRequest:
    system, user = build_generation_prompt(task)
    return ChatRequest(
        model=task.model,
        system_text=system,
        user_text=user,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
        seed=task.seed,
    )


def run_campaign(cfg: CampaignConfig, gateway: Gateway) -> CampaignResult:
    """Issue ``samples_per_model`` requests per model and keep valid extractions.

    Per-request transport failures count as invalid generations.  Output
    order follows task index, so the corpus is reproducible regardless of
    completion order.
    """
    epoch = cfg.epoch or datetime.now(timezone.utc).replace(microsecond=0)
    created_at = format_timestamp(epoch)
    next_id = IdFactory(epoch, salt=f"campaign:{cfg.rng_seed}")
    tasks = campaign_tasks(cfg)
    results = gateway.complete_batch([generation_request(t, cfg) for t in tasks])

    corpus: list[SyntheticSample] = []
    outcomes: list[str] = []
    attempted = Counter(t.model for t in tasks)
    rejections: dict[str, Counter] = defaultdict(Counter)
    for task, (_, outcome) in zip(tasks, results):
        sample_id = next_id()
        if not isinstance(outcome, ChatResponse):
            logger.warning("generation for %s failed: %s", task.model, outcome)
            rejections[task.model]["transport-error"] += 1
            outcomes.append("transport-error")
            continue
        parsed = extract_tagged_sample(outcome.text, task, sample_id, created_at)
        if isinstance(parsed, Rejection):
            rejections[task.model][str(parsed)] += 1
            outcomes.append(str(parsed))
            continue
        corpus.append(parsed)
        outcomes.append("valid")
    stats = corpus_stats(corpus, attempted=attempted,
                         rejections={m: dict(c) for m, c in rejections.items()})
    return CampaignResult(corpus=corpus, stats=stats, tasks=tasks, outcomes=outcomes)
