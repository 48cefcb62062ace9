"""Diff views, evaluation prompts, score parsing and cross-model evaluation."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from difflib import SequenceMatcher
from typing import Sequence

from . import templates
from .gateway import ChatRequest, ChatResponse, Gateway
from .repair_format import split_lines
from .samples import SyntheticSample
from .scoring import (
    CRITERIA,
    CriterionScores,
    WeightConfig,
    sample_length_score,
    weighted_score,
)

logger = logging.getLogger(__name__)

SCORE_SCHEMA = {
    "type": "object",
    "properties": {name: {"type": "number", "minimum": 0, "maximum": 10} for name in CRITERIA},
    "required": list(CRITERIA),
    "additionalProperties": False,
}

_FENCE_RE = re.compile(r"^```(?:json)?\s*\n(.*?)\n\s*```$", re.DOTALL)


class ScoreRejection(ValueError):
    def __init__(self, category: str, message: str = ""):
        super().__init__(f"{category}: {message}" if message else category)
        self.category = category


@dataclass(frozen=True)
class ScoreCard:
    sample_id: str
    evaluator_model: str
    criteria: CriterionScores
    length_score: float
    weighted_total: float

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "evaluator_model": self.evaluator_model,
            "criteria": self.criteria.to_dict(),
            "length_score": self.length_score,
            "weighted_total": self.weighted_total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreCard":
        return cls(
            sample_id=d["sample_id"],
            evaluator_model=d["evaluator_model"],
            criteria=CriterionScores(**{k: d["criteria"][k] for k in CRITERIA}),
            length_score=float(d["length_score"]),
            weighted_total=float(d["weighted_total"]),
        )


def _unified_range(start: int, stop: int) -> str:
    length = stop - start
    first = start + 1 if length else start
    return f"{first},{length}"


def diff_view(buggy: str, fixed: str, context: int = 3) -> str:
    """Unified diff from ``buggy`` to ``fixed``; empty string when they are equal.

    Hunk headers always carry both start and length (``@@ -a,b +c,d @@``).
    """
    a, b = split_lines(buggy), split_lines(fixed)
    if a == b:
        return ""
    out = ["--- buggy", "+++ fixed"]
    for group in SequenceMatcher(None, a, b, autojunk=False).get_grouped_opcodes(context):
        i1, i2 = group[0][1], group[-1][2]
        j1, j2 = group[0][3], group[-1][4]
        out.append(f"@@ -{_unified_range(i1, i2)} +{_unified_range(j1, j2)} @@")
        for tag, a1, a2, b1, b2 in group:
            if tag == "equal":
                out.extend(" " + line for line in a[a1:a2])
                continue
            if tag in ("replace", "delete"):
                out.extend("-" + line for line in a[a1:a2])
            if tag in ("replace", "insert"):
                out.extend("+" + line for line in b[b1:b2])
    return "\n".join(out)


def build_eval_prompt(sample: SyntheticSample, diff: str) -> tuple[str, str]:
    system = templates.load("evaluation", "system")
    user = templates.load("evaluation", "user").format(
        language=sample.language,
        bug_type=sample.bug_type,
        description=sample.description,
        diff=diff,
    )
    return system, user


def parse_scores(raw: str) -> CriterionScores:
    """Parse an evaluator reply into criterion scores.

    Raises :class:`ScoreRejection` with category ``not-json``,
    ``missing-field``, ``non-numeric`` or ``out-of-range``.  Unknown keys are
    ignored; a surrounding markdown fence is tolerated.
    """
    text = raw.strip()
    m = _FENCE_RE.match(text)
    if m:
        text = m.group(1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScoreRejection("not-json", str(exc)) from exc
    if not isinstance(data, dict):
        raise ScoreRejection("not-json", "expected a JSON object")
    values = {}
    for name in CRITERIA:
        if name not in data:
            raise ScoreRejection("missing-field", name)
        v = data[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ScoreRejection("non-numeric", f"{name}={v!r}")
        if not 0 <= v <= 10:
            raise ScoreRejection("out-of-range", f"{name}={v!r}")
        values[name] = v
    return CriterionScores(**values)


def _request_seed(seed: int, sample_id: str, evaluator: str) -> int:
    h = hashlib.sha256(f"{seed}:{sample_id}:{evaluator}".encode()).digest()
    return int.from_bytes(h[:4], "big") >> 1


@dataclass
class EvaluationResult:
    cards: list[ScoreCard]
    rejections: Counter = field(default_factory=Counter)
    failures: list[dict] = field(default_factory=list)

    @property
    def attempted(self) -> int:
        return len(self.cards) + sum(self.rejections.values())


def cross_evaluate(
    corpus: Sequence[SyntheticSample],
    evaluator_models: Sequence[str],
    gateway: Gateway,
    temperature: float = 0.2,
    weights: WeightConfig = WeightConfig(),
    seed: int = 0,
    max_tokens: int = 512,
) -> EvaluationResult:
    """Have every evaluator score every sample.

    Parse rejections and transport failures are counted per category and
    never abort the run.  Cards come back sorted by (sample_id, evaluator).
    """
    weights.validate()
    jobs = []
    reqs = []
    for sample in corpus:
        system, user = build_eval_prompt(sample, diff_view(sample.buggy_code, sample.fixed_code))
        for model in evaluator_models:
            jobs.append((sample, model))
            reqs.append(ChatRequest(
                model=model, system_text=system, user_text=user, temperature=temperature,
                max_tokens=max_tokens, schema=SCORE_SCHEMA,
                seed=_request_seed(seed, sample.id, model),
            ))
    result = EvaluationResult(cards=[])
    for (sample, model), (_, outcome) in zip(jobs, gateway.complete_batch(reqs)):
        if not isinstance(outcome, ChatResponse):
            result.rejections["transport-error"] += 1
            result.failures.append({"sample_id": sample.id, "evaluator_model": model,
                                    "category": "transport-error", "detail": str(outcome)})
            continue
        try:
            criteria = parse_scores(outcome.text)
        except ScoreRejection as exc:
            logger.info("rejected score from %s for %s: %s", model, sample.id, exc)
            result.rejections[exc.category] += 1
            result.failures.append({"sample_id": sample.id, "evaluator_model": model,
                                    "category": exc.category, "detail": str(exc)})
            continue
        ls = sample_length_score(sample, weights.length_cap)
        result.cards.append(ScoreCard(sample.id, model, criteria, ls, weighted_score(criteria, ls, weights)))
    result.cards.sort(key=lambda c: (c.sample_id, c.evaluator_model))
    return result
