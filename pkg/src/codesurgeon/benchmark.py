"""Perfect-prediction benchmark under the Top@k sampling protocol."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from . import templates
from .gateway import ChatRequest, ChatResponse, Gateway
from .repair_format import FormatError, RepairTask, encode_input, parse_output

logger = logging.getLogger(__name__)

TOP1_TEMPERATURE = 0.4
TOP5_TEMPERATURE = 0.8


@dataclass(frozen=True)
class EvalProtocol:
    k: int = 1
    temperature: float = TOP1_TEMPERATURE
    runs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")

    @property
    def setting(self) -> str:
        return f"Top@{self.k}"

    @classmethod
    def top1(cls, runs: int = 50, seed: int = 0) -> "EvalProtocol":
        return cls(1, TOP1_TEMPERATURE, runs, seed)

    @classmethod
    def top5(cls, runs: int = 50, seed: int = 0) -> "EvalProtocol":
        return cls(5, TOP5_TEMPERATURE, runs, seed)


class PatchGenerator(Protocol):
    """Produces ``k`` candidate outputs for a task.

    ``seed`` identifies the (run, task) draw; candidate ``j`` must depend
    only on ``(seed, j)`` so Top@k is nested in Top@(k+1).
    """

    reentrant: bool

    def __call__(self, task: RepairTask, k: int, temperature: float, seed: int) -> list[str]: ...


def normalize_output(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = "\n".join(line.rstrip() for line in text.split("\n"))
    return text[:-1] if text.endswith("\n") else text


def perfect_match(candidate: str, gold: str) -> bool:
    return normalize_output(candidate) == normalize_output(gold)


def semantic_match(candidate: str, gold: str) -> bool:
    """Same file and identical hunk lists after parsing both sides."""
    try:
        return parse_output(candidate) == parse_output(gold)
    except FormatError:
        return False


@lru_cache(maxsize=65536)
def task_key(task: RepairTask) -> str:
    return hashlib.sha256(encode_input(task).encode("utf-8")).hexdigest()


def uniform_draw(*parts) -> float:
    """Deterministic U[0, 1) from the hashed ``parts``."""
    return derive_seed(*parts) / float(1 << 63)


def derive_seed(*parts) -> int:
    h = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1


@dataclass
class TopKResult:
    pp: float
    matched: int
    total: int
    semantic_pp: float
    failures: int = 0


def evaluate_topk(
    tasks: Sequence[RepairTask],
    generator: PatchGenerator,
    protocol: EvalProtocol,
    run_seed: int | None = None,
    detail: bool = False,
) -> float | TopKResult:
    """Fraction of tasks with at least one of ``k`` candidates matching gold exactly.

    A generator exception counts that task as unmatched.  Each task's draw
    is seeded from ``(run_seed, task content)``, so the score does not depend
    on task order.
    """
    if not tasks:
        raise ValueError("no tasks to evaluate")
    base = protocol.seed if run_seed is None else run_seed
    lock = None if getattr(generator, "reentrant", False) else threading.Lock()
    matched = semantic = failures = 0
    for task in tasks:
        gold = task.gold_output
        seed = derive_seed(base, task_key(task))
        try:
            if lock is None:
                cands = generator(task, protocol.k, protocol.temperature, seed)
            else:
                with lock:
                    cands = generator(task, protocol.k, protocol.temperature, seed)
        except Exception as exc:
            logger.warning("generator failed on %s: %s", task.file_name, exc)
            failures += 1
            continue
        cands = list(cands)[: protocol.k]
        if any(perfect_match(c, gold) for c in cands):
            matched += 1
        if any(semantic_match(c, gold) for c in cands):
            semantic += 1
    pp = matched / len(tasks)
    if detail:
        return TopKResult(pp, matched, len(tasks), semantic / len(tasks), failures)
    return pp


@dataclass
class RunMatrix:
    configurations: list[str]
    setting: str
    pp: np.ndarray  # shape (configurations, runs)

    def __post_init__(self):
        self.pp = np.asarray(self.pp, dtype=float)
        if self.pp.shape[0] != len(self.configurations):
            raise ValueError("one row per configuration required")
        if np.any((self.pp < 0) | (self.pp > 1)):
            raise ValueError("pp values must lie in [0, 1]")

    @property
    def runs(self) -> int:
        return self.pp.shape[1]

    def row(self, config: str) -> np.ndarray:
        return self.pp[self.configurations.index(config)]

    def summary(self) -> list[dict]:
        out = []
        for name, row in zip(self.configurations, self.pp):
            std = float(np.std(row, ddof=1)) if row.size > 1 else 0.0
            out.append({"configuration": name, "setting": self.setting,
                        "mean": float(np.mean(row)), "std": std, "runs": int(row.size)})
        return out


def run_matrix(
    tasks: Sequence[RepairTask],
    generators: Mapping[str, PatchGenerator],
    protocol: EvalProtocol,
) -> RunMatrix:
    names = list(generators)
    pp = np.zeros((len(names), protocol.runs))
    for i, name in enumerate(names):
        for r in range(protocol.runs):
            pp[i, r] = evaluate_topk(tasks, generators[name], protocol,
                                     run_seed=derive_seed(protocol.seed, name, r))
    return RunMatrix(names, protocol.setting, pp)


MATRIX_HEADER = ("configuration", "setting", "run", "pp")


def write_matrix_csv(path: str | Path, matrices: Sequence[RunMatrix]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATRIX_HEADER)
        for m in matrices:
            for name, row in zip(m.configurations, m.pp):
                for r, v in enumerate(row):
                    w.writerow((name, m.setting, r, repr(float(v))))


def read_matrix_csv(path: str | Path) -> list[RunMatrix]:
    cells: dict[str, dict[str, dict[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MATRIX_HEADER:
            raise ValueError(f"matrix CSV must have header {','.join(MATRIX_HEADER)}")
        for row in reader:
            cells.setdefault(row["setting"], {}).setdefault(row["configuration"], {})[int(row["run"])] = float(row["pp"])
    out = []
    for setting, by_config in cells.items():
        names = list(by_config)
        runs = sorted(by_config[names[0]])
        for n in names:
            if sorted(by_config[n]) != runs:
                raise ValueError(f"configuration {n} has a different run set in {setting}")
        out.append(RunMatrix(names, setting, [[by_config[n][r] for r in runs] for n in names]))
    return out


# ---------------------------------------------------------------------------
# generators


def _corrupt(text: str, salt: int) -> str:
    return text + f"\n// candidate {salt}"


@dataclass
class OracleGenerator:
    reentrant: bool = True

    def __call__(self, task, k, temperature, seed):
        return [task.gold_output] * k


@dataclass
class NeverGenerator:
    reentrant: bool = True

    def __call__(self, task, k, temperature, seed):
        return [_corrupt(task.gold_output, j) for j in range(k)]


@dataclass
class BernoulliGenerator:
    """Each candidate matches gold independently with probability ``p``."""

    p: float
    reentrant: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")

    def __call__(self, task, k, temperature, seed):
        out = []
        for j in range(k):
            u = uniform_draw(seed, j)
            out.append(task.gold_output if u < self.p else _corrupt(task.gold_output, j))
        return out


@dataclass
class GatewayGenerator:
    """Asks a chat model for candidates; the model sees the encoded task input."""

    gateway: Gateway
    model: str
    max_tokens: int = 1024
    reentrant: bool = True

    def __call__(self, task, k, temperature, seed):
        system = templates.load("repair", "system")
        user = encode_input(task)
        reqs = [ChatRequest(self.model, system, user, temperature, self.max_tokens, seed=derive_seed(seed, j))
                for j in range(k)]
        out = []
        for _, res in self.gateway.complete_batch(reqs):
            if not isinstance(res, ChatResponse):
                raise res
            out.append(res.text)
        return out


def generator_from_spec(spec: str, gateway_factory: Callable[[], Gateway] | None = None) -> PatchGenerator:
    """Build a generator from ``mock:oracle``, ``mock:never``, ``mock:p=0.3`` or ``model:<name>``."""
    if spec == "mock:oracle":
        return OracleGenerator()
    if spec == "mock:never":
        return NeverGenerator()
    if spec.startswith("mock:p="):
        return BernoulliGenerator(float(spec[len("mock:p="):]))
    if spec.startswith("model:"):
        if gateway_factory is None:
            raise ValueError("model generators need a gateway")
        return GatewayGenerator(gateway_factory(), spec[len("model:"):])
    raise ValueError(f"unknown generator spec {spec!r}")


def binomial_band(p: float, n: int, sigmas: float = 3.0) -> tuple[float, float]:
    sd = math.sqrt(p * (1 - p) / n)
    return p - sigmas * sd, p + sigmas * sd
