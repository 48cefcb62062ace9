"""
Generate, score and filter a synthetic corpus
=============================================

Everything runs against the built-in mock backend, so no model server is needed.
Point ``EndpointConfig.base_url`` at an OpenAI-compatible server to use real models.
"""

from datetime import datetime, timezone

from codesurgeon.evaluation import cross_evaluate
from codesurgeon.gateway import EndpointConfig, Gateway, MockBackend
from codesurgeon.generation import CampaignConfig, run_campaign
from codesurgeon.samples import dedup_corpus
from codesurgeon.scoring import aggregate, filter_corpus, histogram, summarize

# a noisy mock corrupts 5% of generations so the validity checks have work to do
mock = MockBackend(seed=7, personality="noisy", malformed_rate=0.05)
gateway = Gateway(EndpointConfig(max_in_flight=4), mock)

campaign = CampaignConfig(models=("gen-a", "gen-b"), samples_per_model=200, rng_seed=1,
                          epoch=datetime(2025, 1, 1, tzinfo=timezone.utc))
result = run_campaign(campaign, gateway)
corpus, dropped = dedup_corpus(result.corpus)
print("valid samples:", len(corpus), "duplicates:", dropped)
print("validity by model:", result.stats.validity_by_model)
print("rejections:", result.stats.rejections_by_model)

# every evaluator scores every sample at temperature 0.2
judged = cross_evaluate(corpus, ["judge-1", "judge-2", "judge-3"], Gateway(EndpointConfig(), MockBackend(seed=3)))
print("score cards:", len(judged.cards), "rejected replies:", dict(judged.rejections))

# mean of the per-evaluator weighted totals, then the 8.5 cut
agg = aggregate(judged.cards, corpus)
kept, report = filter_corpus(agg.records, 8.5)
print(f"retained {report.retained}/{report.total} ({100 * report.retention_fraction:.1f}%)")

for row in summarize(kept, corpus, "language")[:5]:
    print(f"  {row.group:<12} mean={row.mean:.2f} std={row.std:.2f} n={row.count}")

# text histogram of the retained scores
for left, count in histogram([r.final_score for r in kept], 0.25):
    if count:
        print(f"  {left:5.2f} {'#' * count}")
