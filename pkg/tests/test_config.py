"""Run configuration validation."""

import json

import pytest

from dytag.config import ConfigError, RunConfig, validate_config, validate_payload

BASE = {"dataset_name": "d", "dataset_dir": "x"}


def test_all_errors_reported_at_once_with_suggestion():
    with pytest.raises(ConfigError) as exc:
        validate_payload(
            {
                "dataset_name": "x",
                "dataset_dir": "y",
                "batchsize": 4,
                "seed": -3,
                "mode": "wat",
            }
        )
    msgs = "\n".join(exc.value.errors)
    assert "batchsize" in msgs and "batch_size" in msgs
    assert "seed must be a non-negative integer" in msgs
    assert "mode must be one of" in msgs
    assert len(exc.value.errors) == 3


def test_http_backend_requires_api_key_env(monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    with pytest.raises(ConfigError) as exc:
        validate_payload(
            dict(BASE, backend="http", endpoint="https://api.example.com")
        )
    assert any("LLM_API_KEY" in m for m in exc.value.errors)


def test_http_backend_requires_endpoint(monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "k")
    with pytest.raises(ConfigError) as exc:
        validate_payload(dict(BASE, backend="http"))
    assert any("endpoint" in m for m in exc.value.errors)


def test_http_backend_accepted_with_key_and_endpoint(monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "k")
    cfg = validate_payload(
        dict(BASE, backend="http", endpoint="https://api.example.com")
    )
    assert cfg.backend == "http"


def test_defaults_fill_in():
    cfg = validate_payload(dict(BASE))
    assert cfg.window == 10240
    assert cfg.batch_size == 256
    assert cfg.temperature == 0.0
    assert cfg.seed == 7
    assert cfg.mode == "gad"
    assert cfg.tasks == ("lp", "nr", "ec")


def test_resolved_paths_hang_off_out_dir():
    cfg = validate_payload(dict(BASE, out_dir="/tmp/run-here"))
    assert cfg.knowledge_path == "/tmp/run-here/knowledge.json"
    assert cfg.transcript_path == "/tmp/run-here/transcript.jsonl"
    implicit = validate_payload(dict(BASE))
    assert implicit.out_dir == "runs/d"


def test_tasks_subset_validated():
    cfg = validate_payload(dict(BASE, tasks=["lp"]))
    assert cfg.tasks == ("lp",)
    with pytest.raises(ConfigError, match="unknown entries"):
        validate_payload(dict(BASE, tasks=["lp", "frobnicate"]))
    with pytest.raises(ConfigError, match="must not be empty"):
        validate_payload(dict(BASE, tasks=[]))


def test_local_fraction_range():
    validate_payload(dict(BASE, local_fraction=1.0))
    with pytest.raises(ConfigError, match="local_fraction"):
        validate_payload(dict(BASE, local_fraction=0.0))
    with pytest.raises(ConfigError, match="local_fraction"):
        validate_payload(dict(BASE, local_fraction=1.5))


def test_bool_not_accepted_for_numbers():
    with pytest.raises(ConfigError, match="got bool"):
        validate_payload(dict(BASE, seed=True))


def test_missing_required_keys():
    with pytest.raises(ConfigError) as exc:
        validate_payload({})
    joined = " ".join(exc.value.errors)
    assert "dataset_name" in joined and "dataset_dir" in joined


def test_root_must_be_object():
    with pytest.raises(ConfigError, match="JSON object"):
        validate_payload(["not", "a", "dict"])


def test_invalid_json_file(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        validate_config(p)


def test_valid_file_round_trip(tmp_path):
    p = tmp_path / "ok.json"
    p.write_text(json.dumps(dict(BASE, window=16, batch_size=4)))
    cfg = validate_config(p)
    assert isinstance(cfg, RunConfig)
    assert cfg.window == 16 and cfg.batch_size == 4


def test_dataset_files_fixed_order(tmp_path):
    cfg = validate_payload(dict(BASE, dataset_dir=str(tmp_path)))
    names = [p.rsplit("/", 1)[-1] for p in cfg.dataset_files()]
    assert names == ["edges.csv", "node_texts.csv", "edge_texts.csv", "labels.csv"]
    dtgb = validate_payload(
        dict(BASE, dataset_dir=str(tmp_path), dataset_format="dtgb")
    )
    names = [p.rsplit("/", 1)[-1] for p in dtgb.dataset_files()]
    assert names == ["edge_list.csv", "entity_text.csv", "relation_text.csv"]
    (tmp_path / "labels.csv").write_text("label_id,label\n0,A\n")
    names = [p.rsplit("/", 1)[-1] for p in dtgb.dataset_files()]
    assert names[-1] == "labels.csv"
