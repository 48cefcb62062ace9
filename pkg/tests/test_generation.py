import math
from collections import Counter
from datetime import datetime, timezone

import numpy as np
import pytest

from codesurgeon.gateway import EndpointConfig, Gateway, MockBackend
from codesurgeon.generation import (
    TAGS,
    CampaignConfig,
    GenerationTask,
    build_generation_prompt,
    campaign_tasks,
    extract_tagged_sample,
    generation_request,
    pick_task,
    run_campaign,
    task_rng,
)
from codesurgeon.samples import BUG_TYPES, LANGUAGES, fingerprint

EPOCH = datetime(2025, 1, 1, tzinfo=timezone.utc)
TASK = GenerationTask("Python", "Off-by-one errors", model="m")


def tagged(desc="Loop bound is off by one.", buggy="for i in range(n + 1):\n    a[i]", fixed="for i in range(n):\n    a[i]"):
    return (f"Sure!\n<error_description>\n{desc}\n</error_description>\n"
            f"<buggy_code>\n{buggy}\n</buggy_code>\n<fixed_code>\n{fixed}\n</fixed_code>\nDone.")


class TestPickTask:
    def test_replay(self):
        assert pick_task(task_rng(5, 3)) == pick_task(task_rng(5, 3))

    def test_cell_frequencies_uniform(self):
        rng = np.random.default_rng(123)
        n = 156_000
        cells = Counter()
        for _ in range(n):
            t = pick_task(rng)
            cells[(t.language, t.bug_type)] += 1
        assert len(cells) == 156
        p = 1 / 156
        sd = math.sqrt(n * p * (1 - p))
        assert all(abs(c - n * p) <= 4 * sd for c in cells.values())
        marg = Counter(lang for lang, _ in cells.elements())
        assert all(abs(v / n - 1 / 12) < 0.005 for v in marg.values())

    def test_bad_enum_rejected(self):
        with pytest.raises(ValueError):
            GenerationTask("COBOL", BUG_TYPES[0])


class TestPrompt:
    def test_contents(self):
        system, user = build_generation_prompt(TASK)
        assert "expert software developer" in system and "security specialist" in system
        assert "Python" in user and "Off-by-one errors" in user
        for tag in TAGS:
            assert f"<{tag}>" in user and f"</{tag}>" in user

    def test_deterministic_and_bounded(self):
        lengths = []
        for lang in LANGUAGES:
            for bug in BUG_TYPES:
                t = GenerationTask(lang, bug)
                a, b = build_generation_prompt(t), build_generation_prompt(t)
                assert a == b
                lengths.append(len(a[0]) + len(a[1]))
        assert max(lengths) < 2500


class TestExtract:
    def test_valid(self):
        s = extract_tagged_sample(tagged(), TASK, "id1", "2025-01-01T00:00:00Z")
        assert s.description == "Loop bound is off by one."
        assert s.buggy_code.startswith("for i in range(n + 1)")
        assert s.language == "Python" and s.generator_model == "m" and s.id == "id1"

    def test_fields_are_substrings(self):
        raw = tagged(buggy="\n  x\n", fixed="y  ")
        s = extract_tagged_sample(raw, TASK)
        for v in (s.description, s.buggy_code, s.fixed_code):
            assert v in raw
        assert s.buggy_code == "\n  x\n"  # only one newline trimmed on each side

    def test_order_agnostic(self):
        raw = ("<fixed_code>b</fixed_code><error_description>d</error_description>"
               "<buggy_code>a</buggy_code>")
        s = extract_tagged_sample(raw, TASK)
        assert (s.buggy_code, s.fixed_code, s.description) == ("a", "b", "d")

    @pytest.mark.parametrize("raw,reason", [
        (tagged().replace("</fixed_code>", ""), "unbalanced-tag"),
        (tagged().replace("<error_description>\nLoop bound is off by one.\n</error_description>", ""), "missing-tag"),
        (tagged() + "<buggy_code>again</buggy_code>", "unbalanced-tag"),
        ("<buggy_code><fixed_code>x</fixed_code></buggy_code><error_description>d</error_description>",
         "unbalanced-tag"),
        ("</buggy_code>x<buggy_code><fixed_code>y</fixed_code><error_description>d</error_description>",
         "unbalanced-tag"),
        (tagged(fixed="   "), "empty-section"),
        (tagged(desc=""), "empty-section"),
        (tagged(buggy="same", fixed="same"), "no-change"),
        ("no tags here", "missing-tag"),
    ])
    def test_rejections(self, raw, reason):
        assert extract_tagged_sample(raw, TASK) == reason


class TestCampaign:
    def test_well_formed(self):
        cfg = CampaignConfig(models=("a", "b"), samples_per_model=10, epoch=EPOCH)
        res = run_campaign(cfg, Gateway(EndpointConfig(), MockBackend(seed=1)))
        assert len(res.corpus) == 20
        assert res.stats.validity_by_model == {"a": 1.0, "b": 1.0}
        assert {s.created_at for s in res.corpus} == {"2025-01-01T00:00:00Z"}
        assert len({s.id for s in res.corpus}) == 20

    def test_language_reaches_mock(self):
        cfg = CampaignConfig(models=("a",), samples_per_model=30, epoch=EPOCH)
        res = run_campaign(cfg, Gateway(EndpointConfig(), MockBackend()))
        for s in res.corpus:
            if s.language == "Python":
                assert s.buggy_code.startswith("#")
            if s.language == "Go":
                assert s.buggy_code.startswith("//")

    def test_noisy_validity_is_exact(self):
        mock = MockBackend(seed=4, personality="noisy", malformed_rate=0.0342)
        cfg = CampaignConfig(models=("nemotron",), samples_per_model=2000, epoch=EPOCH, rng_seed=9)
        res = run_campaign(cfg, Gateway(EndpointConfig(), mock))
        injected = sum(mock.would_malform(generation_request(t, cfg)) for t in campaign_tasks(cfg))
        assert len(res.corpus) == 2000 - injected
        # binomial band around the reference 96.58% validity
        sd = math.sqrt(0.0342 * 0.9658 / 2000)
        assert abs(res.stats.validity_by_model["nemotron"] - 0.9658) < 4 * sd
        rej = res.stats.rejections_by_model["nemotron"]
        assert sum(rej.values()) + len(res.corpus) == 2000

    def test_replay_identical(self):
        cfg = CampaignConfig(models=("a", "b"), samples_per_model=15, epoch=EPOCH, rng_seed=2)
        r1 = run_campaign(cfg, Gateway(EndpointConfig(max_in_flight=4), MockBackend(seed=5, personality="noisy")))
        r2 = run_campaign(cfg, Gateway(EndpointConfig(max_in_flight=1), MockBackend(seed=5, personality="noisy")))
        assert r1.corpus == r2.corpus

    def test_reordering_keeps_fingerprints(self):
        cfg = CampaignConfig(models=("a",), samples_per_model=20, epoch=EPOCH)
        mock = MockBackend(seed=1)
        gw = Gateway(EndpointConfig(), mock)
        reqs = [generation_request(t, cfg) for t in campaign_tasks(cfg)]
        fwd = [r.text for _, r in gw.complete_batch(reqs)]
        rev = [r.text for _, r in gw.complete_batch(reqs[::-1])]
        assert set(fwd) == set(rev)
        res = run_campaign(cfg, gw)
        assert len({fingerprint(s) for s in res.corpus}) == 20

    def test_transport_errors_count_as_invalid(self):
        class Broken(MockBackend):
            def send(self, req, cfg):
                if req.seed % 2:
                    raise RuntimeError("connection reset")
                return super().send(req, cfg)

        cfg = CampaignConfig(models=("a",), samples_per_model=20, epoch=EPOCH)
        res = run_campaign(cfg, Gateway(EndpointConfig(), Broken()))
        odd = sum(t.seed % 2 for t in res.tasks)
        assert res.outcomes.count("transport-error") == odd
        assert len(res.corpus) == 20 - odd

    def test_bug_counts_multinomial(self):
        cfg = CampaignConfig(models=("a",), samples_per_model=130, epoch=EPOCH, rng_seed=0)
        counts = Counter(t.bug_type for t in campaign_tasks(cfg))
        sd = math.sqrt(130 * (1 / 13) * (12 / 13))
        assert all(abs(counts[b] - 10) <= 3 * sd for b in BUG_TYPES)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            CampaignConfig(models=("a",), samples_per_model=0)
        with pytest.raises(ValueError):
            CampaignConfig(models=())


def test_request_carries_temperature():
    cfg = CampaignConfig(models=("a",), temperature=0.7)
    req = generation_request(TASK, cfg)
    assert req.temperature == 0.7 and req.schema is None
