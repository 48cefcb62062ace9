"""Statistical report over a run matrix: normality, variance, ANOVA, Tukey, plot data."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .benchmark import RunMatrix
from .statlab import (
    DegenerateInput,
    anova_oneway,
    density_points,
    levene,
    qq_points,
    shapiro_wilk,
    tukey_hsd,
)

_RESULT = {
    "type": "object",
    "properties": {
        "statistic": {"type": ["number", "null"]},
        "p_value": {"type": ["number", "null"]},
        "df": {"type": ["array", "null"]},
        "error": {"type": "string"},
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["alpha", "settings"],
    "properties": {
        "alpha": {"type": "number"},
        "config": {"type": "object"},
        "settings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["setting", "summary", "shapiro_wilk", "levene", "anova", "tukey_hsd"],
                "properties": {
                    "setting": {"type": "string"},
                    "summary": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["configuration", "mean", "std", "runs"],
                        },
                    },
                    "shapiro_wilk": {"type": "object", "additionalProperties": _RESULT},
                    "levene": _RESULT,
                    "anova": _RESULT,
                    "tukey_hsd": {
                        "oneOf": [
                            {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["group_a", "group_b", "mean_diff", "p_adj", "reject"],
                                },
                            },
                            {"type": "object", "required": ["error"]},
                        ]
                    },
                },
            },
        },
    },
}


def _safe(fn, *args, **kw) -> dict | list:
    try:
        res = fn(*args, **kw)
    except (DegenerateInput, ValueError) as exc:
        return {"error": str(exc)}
    if isinstance(res, list):
        return [r.to_dict() for r in res]
    return res.to_dict()


def analyze_matrix(matrix: RunMatrix, alpha: float = 0.05) -> dict:
    rows = [list(map(float, r)) for r in matrix.pp]
    shapiro = {name: _safe(shapiro_wilk, row) for name, row in zip(matrix.configurations, rows)}
    if len(rows) >= 2:
        lev = _safe(levene, rows)
        anova = _safe(anova_oneway, rows)
        tukey = _safe(tukey_hsd, rows, matrix.configurations, alpha=alpha)
    else:
        lev = anova = tukey = {"error": "need at least two configurations"}
    return {
        "setting": matrix.setting,
        "summary": matrix.summary(),
        "shapiro_wilk": shapiro,
        "levene": lev,
        "anova": anova,
        "tukey_hsd": tukey,
    }


def write_plot_data(matrices: Sequence[RunMatrix], qq_path: str | Path, density_path: str | Path) -> None:
    """Long-format CSVs with one block of points per (setting, configuration)."""
    with open(qq_path, "w", newline="", encoding="utf-8") as qf, \
            open(density_path, "w", newline="", encoding="utf-8") as df:
        qw = csv.writer(qf, lineterminator="\n")
        dw = csv.writer(df, lineterminator="\n")
        qw.writerow(("setting", "configuration", "theoretical_quantile", "sample_quantile"))
        dw.writerow(("setting", "configuration", "x", "density"))
        for m in matrices:
            for name, row in zip(m.configurations, m.pp):
                if row.size >= 3:
                    for t, v in qq_points(row):
                        qw.writerow((m.setting, name, repr(t), repr(v)))
                try:
                    pts = density_points(row)
                except (DegenerateInput, ValueError):
                    continue
                for x, d in pts:
                    dw.writerow((m.setting, name, repr(x), repr(d)))
