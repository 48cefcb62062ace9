import itertools

import pytest

from codesurgeon.samples import SyntheticSample

_ids = itertools.count()


def make_sample(buggy="x = 1\ny = x / 0", fixed="x = 1\ny = x / 1", **kw) -> SyntheticSample:
    fields = dict(
        id=f"S{next(_ids):06d}",
        language="Python",
        bug_type="Off-by-one errors",
        description="Division by a constant zero.",
        buggy_code=buggy,
        fixed_code=fixed,
        generator_model="m1",
        created_at="2025-01-01T00:00:00Z",
    )
    fields.update(kw)
    return SyntheticSample(**fields)


@pytest.fixture
def sample_factory():
    return make_sample


_ALPHABET = ["", " ", "x = 1", "return y", "}", "{", "<sep>", "1<le>2", "\r", "\t# note", "<file>a"]


def random_text(rng, max_lines=30) -> str:
    n = rng.randint(0, max_lines)
    return "\n".join(rng.choice(_ALPHABET) + (str(rng.randint(0, 3)) if rng.random() < 0.5 else "") for _ in range(n))


def mutate_text(rng, text: str) -> str:
    """Apply 1-5 random replace/delete/insert edits to the lines of ``text``."""
    lines = text.split("\n") if text else []
    for _ in range(rng.randint(1, 5)):
        op = rng.choice(("replace", "delete", "insert"))
        if op == "insert" or not lines:
            k = rng.randint(0, len(lines))
            lines[k:k] = [rng.choice(_ALPHABET) + "!" for _ in range(rng.randint(1, 3))]
        elif op == "delete":
            k = rng.randrange(len(lines))
            del lines[k:k + rng.randint(1, 3)]
        else:
            k = rng.randrange(len(lines))
            lines[k] = lines[k] + "~"
    if rng.random() < 0.1:
        return "\n".join(lines) + "\n"
    return "\n".join(lines)


NOISY_URL = "mock://noisy?seed=7&malformed_rate=0.05"
JUDGE_URL = "mock://well-formed?seed=11"
EPOCH_TEXT = "2025-01-01T00:00:00Z"


def run_pipeline(workdir, models=("a", "b"), per_model=50, seed=3, runs=10):
    """Drive every CLI stage on the mock backend; returns {stage: exit code}."""
    from codesurgeon.cli import main

    w = str(workdir)
    steps = {
        "generate": ["generate", "--models", ",".join(models), "--per-model", str(per_model),
                     "--seed", str(seed), "--base-url", NOISY_URL, "--epoch", EPOCH_TEXT,
                     "--out", f"{w}/corpus.jsonl", "--report", f"{w}/gen.json"],
        "score": ["score", "--corpus", f"{w}/corpus.jsonl", "--evaluators", "e1,e2,e3",
                  "--seed", "1", "--base-url", JUDGE_URL,
                  "--out", f"{w}/cards.jsonl", "--report", f"{w}/score.json"],
        "filter": ["filter", "--cards", f"{w}/cards.jsonl", "--corpus", f"{w}/corpus.jsonl",
                   "--out", f"{w}/kept.jsonl", "--report", f"{w}/filter.json"],
        "preprocess": ["preprocess", "--in", f"{w}/corpus.jsonl", "--out", f"{w}/train.jsonl",
                       "--report", f"{w}/pre.json"],
        "bench": ["bench", "--tasks", f"{w}/train.jsonl", "--config-gen", "oracle=mock:oracle",
                  "--config-gen", "p30=mock:p=0.3", "--config-gen", "p60=mock:p=0.6",
                  "--k", "1", "--runs", str(runs), "--seed", "5", "--out", f"{w}/matrix.csv"],
        "bench5": ["bench", "--tasks", f"{w}/train.jsonl", "--config-gen", "oracle=mock:oracle",
                   "--config-gen", "p30=mock:p=0.3", "--config-gen", "p60=mock:p=0.6",
                   "--k", "5", "--runs", str(runs), "--seed", "5", "--out", f"{w}/matrix.csv", "--append"],
        "analyze": ["analyze", "--matrix", f"{w}/matrix.csv", "--out", f"{w}/report.json"],
        "stats": ["stats", "--corpus", f"{w}/kept.jsonl", "--out", f"{w}/stats.json"],
    }
    codes = {}
    for name, argv in steps.items():
        codes[name] = main(argv)
        if codes[name]:
            break
    return codes


def injected_failures(models=("a", "b"), per_model=50, seed=3):
    """Number of generations the noisy mock corrupts for the run_pipeline campaign."""
    from codesurgeon.gateway import MockBackend
    from codesurgeon.generation import CampaignConfig, campaign_tasks, generation_request
    from codesurgeon.samples import parse_timestamp

    cfg = CampaignConfig(models=tuple(models), samples_per_model=per_model, rng_seed=seed,
                         epoch=parse_timestamp(EPOCH_TEXT))
    mock = MockBackend.from_url(NOISY_URL)
    return sum(mock.would_malform(generation_request(t, cfg)) for t in campaign_tasks(cfg))
