import pytest

from codesurgeon.config import ConfigError, PipelineConfig, config_from_dict, dump_config, load_config, load_weights
from codesurgeon.scoring import WeightConfig


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("")
    cfg = load_config(p)
    assert cfg == PipelineConfig()
    assert (cfg.campaign.temperature, cfg.evaluation.temperature) == (0.7, 0.2)
    assert (cfg.benchmark.top1_temperature, cfg.benchmark.top5_temperature) == (0.4, 0.8)
    assert cfg.filter.threshold == 8.5 and cfg.benchmark.runs == 50
    assert cfg.weights.to_weight_config() == WeightConfig()


def test_none_path_gives_defaults():
    assert load_config(None) == PipelineConfig()


def test_weights_summing_to_point_nine(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[weights]\nlength = 0.1\n")
    with pytest.raises(ConfigError, match="weights"):
        load_config(p)


@pytest.mark.parametrize("data,path", [
    ({"filter": {"threshold": 11.0}}, "filter.threshold"),
    ({"filter": {"combiner": "max"}}, "filter.combiner"),
    ({"endpoint": {"max_in_flight": 0}}, "endpoint.max_in_flight"),
    ({"endpoint": {"retry_max": "3"}}, "endpoint.retry_max"),
    ({"campaign": {"models": ["a", "a"]}}, "campaign.models"),
    ({"benchmark": {"colour": 1}}, "benchmark.colour"),
    ({"nonsense": {}}, "nonsense"),
    ({"campaign": 3}, "campaign"),
])
def test_schema_violations_name_the_field(data, path):
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        config_from_dict(data)


def test_partial_table_keeps_other_defaults():
    cfg = config_from_dict({"campaign": {"models": ["m1", "m2"], "seed": 9}})
    assert cfg.campaign.models == ["m1", "m2"] and cfg.campaign.temperature == 0.7


def test_integer_accepted_for_float():
    assert config_from_dict({"filter": {"threshold": 9}}).filter.threshold == 9.0


def test_round_trip(tmp_path):
    cfg = config_from_dict({
        "campaign": {"models": ["a", "b"], "samples_per_model": 7, "seed": 3},
        "weights": {"correctness": 0.4, "length": 0.1},
        "endpoint": {"base_url": "http://localhost:1234/v1", "constrained_decoding": False},
    })
    p = tmp_path / "c.toml"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg
    p.write_text(dump_config(PipelineConfig()))
    assert load_config(p) == PipelineConfig()


def test_load_weights(tmp_path):
    bare = tmp_path / "w.toml"
    bare.write_text("correctness = 0.5\ncode_quality = 0.0\n")
    assert load_weights(bare).correctness == 0.5
    table = tmp_path / "t.toml"
    table.write_text("[weights]\nlength = 0.3\ncorrectness = 0.2\n")
    assert load_weights(table).length == 0.3
    bad = tmp_path / "b.toml"
    bad.write_text("length = 0.5\n")
    with pytest.raises(ConfigError, match="weights"):
        load_weights(bad)


def test_unreadable_and_invalid(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    p = tmp_path / "x.toml"
    p.write_text("[[[")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(p)
