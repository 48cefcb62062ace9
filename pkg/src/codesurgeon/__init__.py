"""Synthetic bug/fix pair pipeline for automated program repair.

Stages: generate tagged samples with chat models, score them with every
model, filter on a weighted quality threshold, encode them in a numbered-line
input / hunk output format, benchmark patch generators by exact match, and
validate the benchmark with ANOVA-family statistics.
"""

__version__ = "0.1.0"

from .samples import SyntheticSample, dedup_corpus, fingerprint, remove_overlap  # noqa: E402
from .repair_format import DiffHunk, RepairTask, apply_hunks, compute_hunks  # noqa: E402
from .scoring import CriterionScores, WeightConfig, length_score, weighted_score  # noqa: E402

__all__ = [
    "SyntheticSample",
    "dedup_corpus",
    "fingerprint",
    "remove_overlap",
    "DiffHunk",
    "RepairTask",
    "apply_hunks",
    "compute_hunks",
    "CriterionScores",
    "WeightConfig",
    "length_score",
    "weighted_score",
]
