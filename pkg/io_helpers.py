"""
I/O Helper Functions
環境設定、JSON 解析、CSV 輸出與平行執行的統一介面
"""
import hashlib
import json
import logging
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd
import scipy
from dotenv import load_dotenv

from errors import ConfigError

load_dotenv()

OUTPUT_DIR = os.getenv("QUASI_OUTPUT_DIR", "results")
JOBS = int(os.getenv("QUASI_JOBS", "1"))
LOG_LEVEL = os.getenv("QUASI_LOG_LEVEL", "INFO")
SERVER_HOST = os.getenv("QUASI_SERVER_HOST", "127.0.0.1")
SERVER_PORT = int(os.getenv("QUASI_SERVER_PORT", "5000"))

PACKAGE_VERSION = "1.0.0"
RNG_NAME = "numpy.random.Philox"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level=None):
    """
    設定 root logger（只由 CLI / server 呼叫一次）

    Args:
        level: 日誌等級名稱，預設讀取 QUASI_LOG_LEVEL
    """
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT, force=True)


def parse_json_text(text):
    """
    解析 JSON 文字，允許 ```json ... ``` 包裹（手動貼上的設定常見）

    Args:
        text: 原始文字

    Returns:
        解析後的 Python 對象（dict 或 list）
    """
    cleaned = text.strip()

    # 移除 markdown 代碼塊標記
    if cleaned.startswith("```json"):
        cleaned = cleaned[7:]
    elif cleaned.startswith("```"):
        cleaned = cleaned[3:]

    if cleaned.endswith("```"):
        cleaned = cleaned[:-3]

    try:
        return json.loads(cleaned.strip())
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON ({e.msg} at line {e.lineno})") from e


def read_json_file(path):
    """Read and parse a JSON file; missing files are config errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_json_text(path.read_text(encoding="utf-8"))


def canonical_json(obj):
    """Compact, key-sorted JSON used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_of(obj):
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def ensure_output_dir(path):
    """
    建立輸出目錄並確認可寫入

    Raises:
        ConfigError: 目錄無法建立或不可寫
    """
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {path}: {e}", key="output_dir") from e
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory is not writable: {path}", key="output_dir")
    return path


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_frame(path, frame):
    """Write a DataFrame with round-trip float formatting (bit-identical reruns)."""
    frame.to_csv(path, index=False, float_format="%.17g")


def write_metric_rows(path, rows):
    """
    輸出長格式指標表：experiment, h, T, alpha, seed, metric, value
    """
    columns = ["experiment", "h", "T", "alpha", "seed", "metric", "value"]
    write_frame(path, pd.DataFrame(rows, columns=columns))


def runtime_versions():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "package": PACKAGE_VERSION,
        "rng": RNG_NAME,
    }


def run_pool(fn, tasks, jobs):
    """
    在 process pool 中執行 fn(task)，結果依 task 順序回傳

    Args:
        fn: 模組層級函數（需可 pickle）
        tasks: 任務列表
        jobs: 平行數，<= 1 時直接依序執行
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
