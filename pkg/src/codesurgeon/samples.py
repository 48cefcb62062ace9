"""Sample records, validation, fingerprinting and corpus curation."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping

LANGUAGES = (
    "Python",
    "Java",
    "C++",
    "Go",
    "Ruby",
    "Rust",
    "Swift",
    "Kotlin",
    "PHP",
    "C#",
    "JavaScript",
    "Pascal",
)

BUG_TYPES = (
    "Arithmetic errors (e.g., division by zero or integer overflows)",
    "Concurrency issues (e.g., race conditions, deadlocks)",
    "Improper error handling (e.g., missing exceptions or uncaught exceptions)",
    "Inconsistent state in object-oriented code (e.g., failing to update object attributes correctly)",
    "Incorrect conditionals (e.g., wrong boolean expressions)",
    "Incorrect loop boundaries",
    "Incorrect use of API methods or functions",
    "Infinite loops",
    "Memory leaks or buffer overflows (for C/C++ code)",
    "Misuse of data structures (e.g., incorrect initialization or access)",
    "Off-by-one errors",
    "Resource leaks (e.g., open files or sockets not being closed)",
    "SQL injections or unsafe user input handling",
)

SAMPLE_KEYS = (
    "id",
    "language",
    "bug_type",
    "description",
    "buggy_code",
    "fixed_code",
    "generator_model",
    "created_at",
)

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


@dataclass(frozen=True)
class SyntheticSample:
    id: str
    language: str
    bug_type: str
    description: str
    buggy_code: str
    fixed_code: str
    generator_model: str
    created_at: str

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in SAMPLE_KEYS}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticSample":
        missing = [k for k in SAMPLE_KEYS if k not in data]
        if missing:
            raise ValueError(f"sample record missing keys: {', '.join(missing)}")
        return cls(**{k: data[k] for k in SAMPLE_KEYS})


@dataclass
class CorpusStats:
    total: int = 0
    count_by_language: dict[str, int] = field(default_factory=dict)
    count_by_bug: dict[str, int] = field(default_factory=dict)
    count_by_model: dict[str, int] = field(default_factory=dict)
    validity_by_model: dict[str, float] = field(default_factory=dict)
    attempted_by_model: dict[str, int] = field(default_factory=dict)
    rejections_by_model: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def percentages(self, dimension: str) -> dict[str, float]:
        counts = getattr(self, f"count_by_{dimension}")
        if not self.total:
            return {k: 0.0 for k in counts}
        return {k: 100.0 * v / self.total for k, v in counts.items()}


def validate_sample(raw: SyntheticSample) -> str | None:
    """Return ``None`` for a valid sample, else the first violated rule.

    Rejection reasons: ``empty-description``, ``empty-buggy-code``,
    ``empty-fixed-code``, ``no-change``, ``unknown-language``,
    ``unknown-bug-type``.
    """
    if not raw.description.strip():
        return "empty-description"
    if not raw.buggy_code.strip():
        return "empty-buggy-code"
    if not raw.fixed_code.strip():
        return "empty-fixed-code"
    if raw.buggy_code == raw.fixed_code:
        return "no-change"
    if raw.language not in LANGUAGES:
        return "unknown-language"
    if raw.bug_type not in BUG_TYPES:
        return "unknown-bug-type"
    return None


def normalize_code(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in text.split("\n"))


def fingerprint(sample: SyntheticSample) -> str:
    """SHA-256 hex digest of the normalized (buggy, fixed) code pair."""
    h = hashlib.sha256()
    for part in (normalize_code(sample.buggy_code), normalize_code(sample.fixed_code)):
        data = part.encode("utf-8")
        # length prefix keeps the pair boundary unambiguous
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    return h.hexdigest()


def dedup_corpus(samples: Iterable[SyntheticSample]) -> tuple[list[SyntheticSample], int]:
    seen: set[str] = set()
    unique = []
    dropped = 0
    for s in samples:
        fp = fingerprint(s)
        if fp in seen:
            dropped += 1
            continue
        seen.add(fp)
        unique.append(s)
    return unique, dropped


def remove_overlap(
    train: Iterable[SyntheticSample], test_fingerprints: set[str] | frozenset[str]
) -> list[SyntheticSample]:
    return [s for s in train if fingerprint(s) not in test_fingerprints]


def corpus_stats(
    samples: Iterable[SyntheticSample],
    attempted: Mapping[str, int] | None = None,
    rejections: Mapping[str, Mapping[str, int]] | None = None,
) -> CorpusStats:
    """Count samples per language, bug type and generator model.

    ``attempted`` maps model -> number of generation requests issued; when
    given, validity is ``valid / attempted`` per model.
    """
    samples = list(samples)
    by_lang = Counter(s.language for s in samples)
    by_bug = Counter(s.bug_type for s in samples)
    by_model = Counter(s.generator_model for s in samples)
    stats = CorpusStats(
        total=len(samples),
        count_by_language={k: by_lang[k] for k in sorted(by_lang)},
        count_by_bug={k: by_bug[k] for k in sorted(by_bug)},
        count_by_model={k: by_model[k] for k in sorted(by_model)},
    )
    if attempted is not None:
        for model in sorted(attempted):
            n = attempted[model]
            stats.attempted_by_model[model] = n
            stats.validity_by_model[model] = by_model.get(model, 0) / n if n else 0.0
    if rejections is not None:
        stats.rejections_by_model = {
            m: dict(sorted(r.items())) for m, r in sorted(rejections.items())
        }
    return stats


def _encode_crockford(value: int, length: int) -> str:
    out = []
    for _ in range(length):
        out.append(_CROCKFORD[value & 31])
        value >>= 5
    return "".join(reversed(out))


def make_id(timestamp_ms: int, entropy: int) -> str:
    """ULID-shaped identifier: 48-bit millisecond time + 80-bit entropy."""
    if not 0 <= timestamp_ms < 1 << 48:
        raise ValueError("timestamp out of ULID range")
    return _encode_crockford(timestamp_ms, 10) + _encode_crockford(entropy % (1 << 80), 16)


class IdFactory:
    """Monotonic ULID-style ids; deterministic for a given (epoch, salt)."""

    def __init__(self, epoch: datetime, salt: str = ""):
        self.timestamp_ms = int(epoch.timestamp() * 1000)
        digest = hashlib.sha256(salt.encode("utf-8")).digest()
        # top bits cleared so the counter cannot overflow the 80-bit field
        self._base = int.from_bytes(digest[:10], "big") >> 24 << 8
        self._counter = 0

    def __call__(self) -> str:
        value = self._base + self._counter
        self._counter += 1
        return make_id(self.timestamp_ms, value)


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def write_jsonl(path: str | Path, records: Iterable[Mapping]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=False))
            fh.write("\n")
            n += 1
    return n


def load_corpus(path: str | Path) -> list[SyntheticSample]:
    return [SyntheticSample.from_dict(rec) for rec in read_jsonl(path)]


def save_corpus(path: str | Path, samples: Iterable[SyntheticSample]) -> int:
    return write_jsonl(path, (s.to_dict() for s in samples))
