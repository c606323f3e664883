"""
測試 I/O 工具：JSON 解析、雜湊、指標表與平行執行
"""
import json
import math

import pandas as pd
import pytest

from errors import ConfigError
from io_helpers import (
    canonical_json,
    ensure_output_dir,
    parse_json_text,
    read_json_file,
    run_pool,
    runtime_versions,
    sha256_of,
    write_json,
    write_metric_rows,
)


@pytest.mark.parametrize("text", [
    '{"a": 1}',
    '```json\n{"a": 1}\n```',
    '```\n{"a": 1}\n```',
    '  {"a": 1}  \n',
])
def test_parse_json_text_strips_fences(text):
    assert parse_json_text(text) == {"a": 1}


def test_parse_json_text_reports_config_error():
    with pytest.raises(ConfigError):
        parse_json_text("{not json")


def test_read_json_file(tmp_path):
    target = tmp_path / "x.json"
    write_json(target, {"b": [1, 2]})
    assert read_json_file(target) == {"b": [1, 2]}
    with pytest.raises(ConfigError):
        read_json_file(tmp_path / "nope.json")


def test_hash_ignores_key_order():
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'
    assert sha256_of({"b": 1, "a": 2}) == sha256_of({"a": 2, "b": 1})
    assert sha256_of({"a": 1}) != sha256_of({"a": 2})


def test_ensure_output_dir(tmp_path):
    target = ensure_output_dir(tmp_path / "a" / "b")
    assert target.is_dir()
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError) as info:
        ensure_output_dir(blocker / "sub")
    assert info.value.key == "output_dir"


def test_metric_rows_round_trip(tmp_path):
    target = tmp_path / "metrics.csv"
    write_metric_rows(target, [("marginals", 0.1, 10.0, 100, 0, "ks", 0.1 + 0.2)])
    frame = pd.read_csv(target, float_precision="round_trip")
    assert list(frame.columns) == ["experiment", "h", "T", "alpha", "seed", "metric", "value"]
    assert frame["value"].iloc[0] == 0.1 + 0.2


def test_runtime_versions_keys():
    versions = runtime_versions()
    assert {"python", "numpy", "scipy", "pandas", "package", "rng"} <= set(versions)
    json.dumps(versions)


@pytest.mark.parametrize("jobs", [1, 2, 4])
def test_run_pool_keeps_task_order(jobs):
    tasks = [float(i) for i in range(10)]
    assert run_pool(math.sqrt, tasks, jobs) == [math.sqrt(t) for t in tasks]


def test_run_pool_empty():
    assert run_pool(math.sqrt, [], 3) == []
