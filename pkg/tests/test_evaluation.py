import json
import random
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codesurgeon.evaluation import (
    SCORE_SCHEMA,
    ScoreCard,
    ScoreRejection,
    build_eval_prompt,
    cross_evaluate,
    diff_view,
    parse_scores,
)
from codesurgeon.gateway import EndpointConfig, Gateway, MockBackend
from codesurgeon.scoring import CRITERIA, CriterionScores, WeightConfig, sample_length_score, weighted_score

from conftest import make_sample

_HEADER = re.compile(r"^@@ -(\d+),(\d+) \+(\d+),(\d+) @@$")


def apply_unified(old: str, diff: str) -> str:
    """Minimal unified-diff applier written independently of the library."""
    src = old.split("\n") if old else []
    if not diff:
        return old
    rows = diff.split("\n")
    assert rows[0] == "--- buggy" and rows[1] == "+++ fixed"
    out, pos, i = [], 0, 2
    while i < len(rows):
        m = _HEADER.match(rows[i])
        assert m, rows[i]
        a_start, a_len = int(m.group(1)), int(m.group(2))
        begin = a_start - 1 if a_len else a_start
        out.extend(src[pos:begin])
        pos = begin
        i += 1
        while i < len(rows) and not rows[i].startswith("@@ "):
            tag, text = rows[i][0], rows[i][1:]
            if tag == " ":
                assert src[pos] == text
                out.append(text)
                pos += 1
            elif tag == "-":
                assert src[pos] == text
                pos += 1
            else:
                assert tag == "+"
                out.append(text)
            i += 1
    out.extend(src[pos:])
    return "\n".join(out)


def mutate(rng: random.Random, lines: list[str]) -> list[str]:
    out = list(lines)
    for _ in range(rng.randint(1, 6)):
        op = rng.choice("rdi")
        k = rng.randrange(len(out) + 1)
        if op == "i" or not out:
            out.insert(k, f"new {rng.random():.6f}")
        elif op == "d":
            del out[min(k, len(out) - 1)]
        else:
            out[min(k, len(out) - 1)] = f"changed {rng.random():.6f}"
    return out


class TestDiffView:
    def test_identical_is_empty(self):
        assert diff_view("a\nb", "a\nb") == ""

    def test_single_line_change(self):
        d = diff_view("1\n2\n3\n4\n5", "1\n2\nX\n4\n5")
        body = d.split("\n")
        assert body[:2] == ["--- buggy", "+++ fixed"]
        assert sum(r.startswith("@@") for r in body) == 1
        assert [r for r in body if r[:1] == "-" and not r.startswith("---")] == ["-3"]
        assert [r for r in body if r[:1] == "+" and not r.startswith("+++")] == ["+X"]
        assert body[2] == "@@ -1,5 +1,5 @@"

    def test_context_is_three_lines(self):
        old = "\n".join(str(i) for i in range(20))
        new = old.replace("10", "ten")
        rows = diff_view(old, new).split("\n")
        assert rows[2] == "@@ -8,7 +8,7 @@"

    def test_random_200_line_pairs_apply(self):
        rng = random.Random(17)
        for _ in range(200):
            old = [f"line {rng.randrange(50)}" for _ in range(200)]
            new = mutate(rng, old)
            a, b = "\n".join(old), "\n".join(new)
            assert apply_unified(a, diff_view(a, b)) == b

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.sampled_from("abcde"), max_size=15), st.lists(st.sampled_from("abcdef"), max_size=15))
    def test_round_trip_property(self, xs, ys):
        a, b = "\n".join(xs), "\n".join(ys)
        assert apply_unified(a, diff_view(a, b)) == b


class TestPrompt:
    def test_names_criteria_and_is_deterministic(self):
        s = make_sample()
        d = diff_view(s.buggy_code, s.fixed_code)
        first = build_eval_prompt(s, d)
        assert first == build_eval_prompt(s, d)
        system, user = first
        for name in CRITERIA:
            assert name in user
        assert s.description in user and d in user
        assert "JSON" in user

    def test_linear_in_diff_length(self):
        s = make_sample()
        xs, ys = [], []
        for n in range(1, 101):
            diff = "x" * (37 * n)
            xs.append(len(diff))
            ys.append(sum(map(len, build_eval_prompt(s, diff))))
        mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
        slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)
        assert 0.9 <= slope <= 1.1


class TestParseScores:
    def test_valid(self):
        c = parse_scores('{"correctness":9,"code_quality":8,"security":8,"performance":7,"completeness":9}')
        assert c == CriterionScores(9, 8, 8, 7, 9)

    def test_fence_and_extra_keys(self):
        raw = '```json\n{"correctness":9,"code_quality":8,"security":8,"performance":7,"completeness":9,"note":"ok"}\n```'
        assert parse_scores(raw).performance == 7

    @pytest.mark.parametrize("raw,cat", [
        ('{"correctness":11,"code_quality":8,"security":8,"performance":7,"completeness":9}', "out-of-range"),
        ('{"correctness":-0.5,"code_quality":8,"security":8,"performance":7,"completeness":9}', "out-of-range"),
        ('{"correctness":9,"code_quality":8,"performance":7,"completeness":9}', "missing-field"),
        ('{"correctness":"9","code_quality":8,"security":8,"performance":7,"completeness":9}', "non-numeric"),
        ('{"correctness":true,"code_quality":8,"security":8,"performance":7,"completeness":9}', "non-numeric"),
        ("I think it is great", "not-json"),
        ("[1, 2, 3]", "not-json"),
    ])
    def test_rejections(self, raw, cat):
        with pytest.raises(ScoreRejection) as info:
            parse_scores(raw)
        assert info.value.category == cat

    def test_schema_lists_all_fields(self):
        assert sorted(SCORE_SCHEMA["required"]) == sorted(CRITERIA)


FIXED = dict(correctness=9, code_quality=8, security=8, performance=7, completeness=9)


class TestCrossEvaluate:
    def test_cardinality(self):
        corpus = [make_sample(buggy=f"a{i}", fixed=f"b{i}") for i in range(3)]
        res = cross_evaluate(corpus, ["e1", "e2"], Gateway(EndpointConfig(), MockBackend(seed=2)))
        assert len(res.cards) == 6 and res.attempted == 6
        assert [(c.sample_id, c.evaluator_model) for c in res.cards] == sorted(
            (s.id, m) for s in corpus for m in ("e1", "e2"))

    def test_fixed_scores_and_weighted_total(self):
        corpus = [make_sample(buggy=f"a{i}", fixed=f"b{i}") for i in range(4)]
        w = WeightConfig()
        res = cross_evaluate(corpus, ["e1", "e2", "e3"], Gateway(EndpointConfig(), MockBackend(fixed_scores=FIXED)), weights=w)
        assert {c.criteria for c in res.cards} == {CriterionScores(**FIXED)}
        for c in res.cards:
            s = next(x for x in corpus if x.id == c.sample_id)
            assert c.length_score == sample_length_score(s)
            assert abs(c.weighted_total - weighted_score(c.criteria, c.length_score, w)) < 1e-9

    def test_rejections_counted(self):
        class Bad(MockBackend):
            def send(self, req, cfg):
                if req.model == "liar":
                    return json.dumps({**FIXED, "security": 42}), {}
                return super().send(req, cfg)

        corpus = [make_sample(buggy=f"a{i}", fixed=f"b{i}") for i in range(5)]
        res = cross_evaluate(corpus, ["ok", "liar"], Gateway(EndpointConfig(), Bad()))
        assert len(res.cards) == 5 and res.rejections["out-of-range"] == 5
        assert len(res.cards) + sum(res.rejections.values()) == 10

    def test_deterministic(self):
        corpus = [make_sample(buggy=f"a{i}", fixed=f"b{i}") for i in range(5)]
        r1 = cross_evaluate(corpus, ["e1", "e2"], Gateway(EndpointConfig(), MockBackend(seed=8)))
        r2 = cross_evaluate(corpus, ["e1", "e2"], Gateway(EndpointConfig(max_in_flight=1), MockBackend(seed=8)))
        assert r1.cards == r2.cards

    def test_uses_evaluation_temperature(self):
        seen = []

        class Spy(MockBackend):
            def send(self, req, cfg):
                seen.append(req)
                return super().send(req, cfg)

        cross_evaluate([make_sample()], ["e"], Gateway(EndpointConfig(), Spy()))
        assert seen[0].temperature == 0.2 and seen[0].schema == SCORE_SCHEMA

    def test_card_dict_round_trip(self):
        card = ScoreCard("s", "e", CriterionScores(**FIXED), 5.0, 8.0)
        assert ScoreCard.from_dict(json.loads(json.dumps(card.to_dict()))) == card
