"""Training input/output text format, hunk computation and hunk application.

Line model: a text is split on ``"\\n"`` only, so ``"a\\nb\\n"`` has three
lines (the last one empty) and ``"\\r"`` stays part of the line content.
The empty text has zero lines.  This makes every round trip byte-exact,
including changes to the final newline.

Hunk ranges are 1-based and inclusive.  A pure insertion after line ``k`` is
written as the hunk ``k..k`` whose replacement starts with the original line
``k`` (an insertion before line 1 ends with the original line 1 instead).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

INST_OPEN = "<inst>"
INST_CLOSE = "</inst>"
DESC = "<desc>"
FILE = "<file>"
LINES = "<lines>"
LE = "<le>"
SEP = "<sep>"

_RANGE_RE = re.compile(r"^(\d+)<le>(\d+)$")
_NUMBERED_RE = re.compile(r"^(\d+)\t")


class FormatError(ValueError):
    """Raised when a value cannot be encoded or decoded."""

    def __init__(self, category: str, message: str = ""):
        super().__init__(f"{category}: {message}" if message else category)
        self.category = category


def split_lines(text: str) -> list[str]:
    return text.split("\n") if text else []


def join_lines(lines: Sequence[str]) -> str:
    return "\n".join(lines)


@dataclass(frozen=True)
class DiffHunk:
    start_line: int
    end_line: int
    replacement: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "replacement", tuple(self.replacement))
        if self.start_line < 1 or self.end_line < self.start_line:
            raise FormatError("bad-range", f"{self.start_line}..{self.end_line}")
        for line in self.replacement:
            if "\n" in line:
                raise FormatError("bad-replacement", "replacement lines may not contain newlines")

    def to_dict(self) -> dict:
        return {"start": self.start_line, "end": self.end_line, "replacement": list(self.replacement)}

    @classmethod
    def from_dict(cls, d: dict) -> "DiffHunk":
        return cls(int(d["start"]), int(d["end"]), tuple(d["replacement"]))


def check_hunks(hunks: Sequence[DiffHunk], line_count: int | None = None) -> None:
    prev_end = 0
    for h in hunks:
        if h.start_line <= prev_end:
            raise FormatError("overlapping-hunks", f"hunk at {h.start_line} overlaps previous ending {prev_end}")
        if line_count is not None and h.end_line > line_count:
            raise FormatError("range-out-of-bounds", f"{h.end_line} > {line_count} lines")
        prev_end = h.end_line


@dataclass(frozen=True)
class RepairTask:
    file_name: str
    description: str
    vulnerable_lines: tuple[int, ...]
    buggy_code: str
    gold_hunks: tuple[DiffHunk, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "vulnerable_lines", tuple(self.vulnerable_lines))
        object.__setattr__(self, "gold_hunks", tuple(self.gold_hunks))
        n = len(split_lines(self.buggy_code))
        if "\n" in self.file_name or "\r" in self.file_name:
            raise FormatError("bad-file-name", "file name may not span lines")
        if list(self.vulnerable_lines) != sorted(set(self.vulnerable_lines)):
            raise FormatError("bad-lines", "vulnerable lines must be strictly increasing")
        if any(not 1 <= v <= n for v in self.vulnerable_lines):
            raise FormatError("bad-lines", f"vulnerable lines outside 1..{n}")
        check_hunks(self.gold_hunks, n)

    @property
    def gold_output(self) -> str:
        return encode_output(self.file_name, self.gold_hunks)

    def fixed_code(self) -> str:
        return apply_hunks(self.buggy_code, self.gold_hunks)


def number_lines(code: str) -> str:
    return "\n".join(f"{i}\t{line}" for i, line in enumerate(split_lines(code), 1))


def strip_numbers(numbered: str) -> str:
    out = []
    for i, line in enumerate(split_lines(numbered), 1):
        m = _NUMBERED_RE.match(line)
        if not m or int(m.group(1)) != i:
            raise FormatError("bad-numbering", f"line {i}: {line[:40]!r}")
        out.append(line[m.end():])
    return join_lines(out)


def encode_input(task: RepairTask) -> str:
    parts = [
        INST_OPEN,
        DESC + task.description,
        FILE + task.file_name,
        LINES + " ".join(str(v) for v in task.vulnerable_lines),
    ]
    if task.buggy_code:
        parts.append(number_lines(task.buggy_code))
    parts.append(INST_CLOSE)
    return "\n".join(parts)


def decode_input(text: str) -> tuple[str, str, tuple[int, ...], str]:
    """Inverse of :func:`encode_input`: (description, file_name, lines, buggy_code).

    The header is located from the end: the real ``<file>`` line is the last
    one immediately followed by a ``<lines>`` line, since numbered code lines
    always start with a digit.  The description may therefore contain any
    tag-like text, newlines included.
    """
    rows = text.split("\n")
    if len(rows) < 5 or rows[0] != INST_OPEN or rows[-1] != INST_CLOSE:
        raise FormatError("bad-input", "missing <inst> block")
    header = None
    for i in range(len(rows) - 2, 0, -1):
        if rows[i].startswith(FILE) and rows[i + 1].startswith(LINES):
            header = i
            break
    if header is None or not rows[1].startswith(DESC):
        raise FormatError("bad-input", "missing <desc>/<file>/<lines> header")
    description = "\n".join(rows[1:header])[len(DESC):]
    file_name = rows[header][len(FILE):]
    raw_lines = rows[header + 1][len(LINES):].split()
    try:
        lines = tuple(int(v) for v in raw_lines)
    except ValueError as exc:
        raise FormatError("bad-input", "non-numeric line list") from exc
    code = strip_numbers("\n".join(rows[header + 2:-1]))
    return description, file_name, lines, code


def encode_output(file_name: str, hunks: Sequence[DiffHunk]) -> str:
    if "\n" in file_name:
        raise FormatError("bad-file-name", "file name may not span lines")
    check_hunks(hunks)
    for h in hunks:
        for a, b in zip(h.replacement, h.replacement[1:]):
            if a == SEP and _RANGE_RE.match(b):
                # would read back as a hunk boundary
                raise FormatError("ambiguous-replacement", f"<sep> followed by {b!r}")
    rows = [FILE + file_name]
    for i, h in enumerate(hunks):
        if i:
            rows.append(SEP)
        rows.append(f"{h.start_line}{LE}{h.end_line}")
        rows.extend(h.replacement)
    return "\n".join(rows)


def parse_output(text: str) -> tuple[str, list[DiffHunk]]:
    """Parse the hunk output format; raises :class:`FormatError` on rejection.

    Rejection categories: ``empty``, ``missing-file-tag``, ``bad-range``,
    ``overlapping-hunks``.  A bare ``<file>`` line is the (valid) empty
    patch.  A ``<sep>`` line only separates hunks when the next line is a
    range line, so code lines reading ``<sep>`` survive; the one unencodable
    case, ``<sep>`` followed by a range-shaped line inside a replacement, is
    refused by :func:`encode_output`.
    """
    if not text.strip():
        raise FormatError("empty")
    rows = text.split("\n")
    if not rows[0].startswith(FILE):
        raise FormatError("missing-file-tag")
    file_name = rows[0][len(FILE):]
    hunks: list[DiffHunk] = []
    i = 1
    while i < len(rows):
        m = _RANGE_RE.match(rows[i])
        if not m:
            raise FormatError("bad-range", f"expected start<le>end, got {rows[i][:40]!r}")
        start, end = int(m.group(1)), int(m.group(2))
        if start < 1 or end < start:
            raise FormatError("bad-range", f"{start}<le>{end}")
        i += 1
        body = []
        while i < len(rows):
            if rows[i] == SEP and i + 1 < len(rows) and _RANGE_RE.match(rows[i + 1]):
                i += 1
                break
            body.append(rows[i])
            i += 1
        hunks.append(DiffHunk(start, end, tuple(body)))
    check_hunks(hunks)
    return file_name, hunks


def apply_hunks(buggy: str, hunks: Sequence[DiffHunk]) -> str:
    lines = split_lines(buggy)
    check_hunks(hunks, len(lines))
    for h in reversed(hunks):
        lines[h.start_line - 1:h.end_line] = list(h.replacement)
    return join_lines(lines)


def _lcs_matches(a: Sequence[str], b: Sequence[str]) -> list[tuple[int, int]]:
    """Index pairs of one longest common subsequence of ``a`` and ``b``."""
    n, m = len(a), len(b)
    # suffix LCS lengths, one row at a time kept in a full table for backtracking
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = table[i], table[i + 1]
        ai = a[i]
        for j in range(m - 1, -1, -1):
            if ai == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    pairs = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def compute_hunks(buggy: str, fixed: str) -> list[DiffHunk]:
    """Minimal line-level edit script from ``buggy`` to ``fixed`` as hunks.

    Raises :class:`FormatError` when ``buggy`` is empty and ``fixed`` is not:
    with no lines there is no range to replace.
    """
    a, b = split_lines(buggy), split_lines(fixed)
    if a == b:
        return []
    if not a:
        raise FormatError("range-out-of-bounds", "cannot express an insertion into an empty file")
    pre = 0
    while pre < len(a) and pre < len(b) and a[pre] == b[pre]:
        pre += 1
    suf = 0
    while suf < len(a) - pre and suf < len(b) - pre and a[-1 - suf] == b[-1 - suf]:
        suf += 1
    mid = _lcs_matches(a[pre:len(a) - suf], b[pre:len(b) - suf])
    matches = [(i + pre, j + pre) for i, j in mid] + [(len(a) - suf + k, len(b) - suf + k) for k in range(suf)]
    matches.append((len(a), len(b)))

    # (a_start, a_end_exclusive, b_start, b_end_exclusive) change blocks, 0-based
    blocks = []
    ia, ib = pre, pre
    for ma, mb in matches:
        if ma > ia or mb > ib:
            blocks.append((ia, ma, ib, mb))
        ia, ib = ma + 1, mb + 1

    raw: list[tuple[int, int, list[str]]] = []
    for sa, ea, sb, eb in blocks:
        repl = b[sb:eb]
        if ea > sa:
            raw.append((sa + 1, ea, repl))
        elif sa > 0:
            # insertion after line sa: re-emit that (unchanged) line first
            raw.append((sa, sa, [a[sa - 1]] + repl))
        else:
            raw.append((1, 1, repl + [a[0]]))

    merged: list[tuple[int, int, list[str]]] = []
    for start, end, repl in raw:
        if merged and start <= merged[-1][1] + 1:
            pstart, pend, prepl = merged[-1]
            if start <= pend:
                # both blocks re-emit the same shared line; drop one copy
                merged[-1] = (pstart, max(pend, end), prepl[:-1] + repl if prepl and repl and prepl[-1] == a[start - 1] else prepl + repl)
            else:
                merged[-1] = (pstart, end, prepl + repl)
        else:
            merged.append((start, end, repl))
    return [DiffHunk(s, e, tuple(r)) for s, e, r in merged]


EXTENSIONS = {
    "Python": ".py", "Java": ".java", "C++": ".cpp", "Go": ".go", "Ruby": ".rb",
    "Rust": ".rs", "Swift": ".swift", "Kotlin": ".kt", "PHP": ".php", "C#": ".cs",
    "JavaScript": ".js", "Pascal": ".pas",
}


def _drop_shared_final_newline(buggy: str, fixed: str) -> tuple[str, str]:
    if buggy.endswith("\n") and fixed.endswith("\n"):
        return buggy[:-1], fixed[:-1]
    return buggy, fixed


def task_from_sample(sample) -> RepairTask:
    """Turn a buggy/fixed sample into a repair task whose gold hunks rebuild the fix.

    A final newline present on both sides is dropped first so it does not
    show up as an extra empty numbered line.  The vulnerable lines are the
    buggy lines covered by the gold hunks.
    """
    buggy, fixed = _drop_shared_final_newline(sample.buggy_code, sample.fixed_code)
    hunks = compute_hunks(buggy, fixed)
    lines = sorted({n for h in hunks for n in range(h.start_line, h.end_line + 1)})
    return RepairTask(
        file_name=sample.id + EXTENSIONS.get(sample.language, ".txt"),
        description=sample.description,
        vulnerable_lines=tuple(lines),
        buggy_code=buggy,
        gold_hunks=tuple(hunks),
    )


def training_record(task: RepairTask, **extra) -> dict:
    rec = {
        "input_text": encode_input(task),
        "output_text": encode_output(task.file_name, task.gold_hunks),
        "file": task.file_name,
        "hunks": [h.to_dict() for h in task.gold_hunks],
        "lines": list(task.vulnerable_lines),
    }
    rec.update(extra)
    return rec


def task_from_record(rec: dict) -> RepairTask:
    description, file_name, lines, buggy = decode_input(rec["input_text"])
    if "hunks" in rec:
        hunks = [DiffHunk.from_dict(h) for h in rec["hunks"]]
    else:
        file_name, hunks = parse_output(rec["output_text"])
    return RepairTask(file_name, description, lines, buggy, tuple(hunks))
