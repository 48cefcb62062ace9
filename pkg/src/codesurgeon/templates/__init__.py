"""Versioned prompt templates shipped as package data."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

TEMPLATE_VERSION = "v1"


@lru_cache(maxsize=None)
def load(kind: str, part: str, version: str = TEMPLATE_VERSION) -> str:
    """Return template text for ``kind`` (generation/evaluation/repair) and ``part`` (system/user)."""
    ref = resources.files(__package__).joinpath(kind, f"{version}.{part}.txt")
    return ref.read_text(encoding="utf-8").rstrip("\n")
