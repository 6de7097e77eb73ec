import csv
from pathlib import Path

import pytest

from repetitionlab.config import load_lab_config, load_workflow_config
from repetitionlab.harness import cli, default_grid, run_grid
from repetitionlab.schemas import DecoderConfig
from repetitionlab.workflow_sim import simulate_replications, simulate_transaction


@pytest.fixture
def test_output_dir(tmp_path):
    """テスト用の出力ディレクトリを作成"""
    output_dir = tmp_path / "test_results"
    output_dir.mkdir()
    return output_dir


def read_rows(path: Path) -> dict[str, dict[str, str]]:
    with open(path, "r", encoding="utf-8") as f:
        return {row["label"]: row for row in csv.DictReader(f)}


def test_greedy_rate_at_scale():
    """10000試行で貪欲デコードの繰り返し率が 0.773 ± 0.05 に入ることを確認します。

    実行例:
        uv run pytest manual_tests/manual_test_acceptance.py -v -k test_greedy_rate_at_scale
    """
    config = load_lab_config("default")
    grid = default_grid(config.experiment, base_seed=0, trials=10000)
    grid = grid.model_copy(update={"configs": [DecoderConfig(max_tokens=grid.horizon)]})
    (row,) = run_grid(config.model, grid)
    assert abs(row.repetition_rate - 0.773) <= 0.05


def test_ablation_full_run(test_output_dir):
    """1000試行の比較実験を CLI から実行し、繰り返し率の大小関係を確認します。

    実行例:
        uv run pytest manual_tests/manual_test_acceptance.py -v -k test_ablation_full_run
    """
    output = test_output_dir / "ablation.csv"
    assert cli(["ablate", "--trials", "1000", "--out", str(output)]) == 0
    rows = read_rows(output)

    greedy = float(rows["greedy"]["repetition_rate"])
    assert abs(greedy - 0.773) <= 0.05
    for width in (3, 5, 10):
        eager = float(rows[f"beam B={width} early_stopping=True"]["repetition_rate"])
        lazy = float(rows[f"beam B={width} early_stopping=False"]["repetition_rate"])
        assert eager < lazy
        assert eager < greedy
    assert float(rows["beam B=3 early_stopping=True"]["repetition_rate"]) <= 0.07

    # ビーム幅5 (early_stopping=True) の繰り返し率と脱出時間
    beam = rows["beam B=5 early_stopping=True"]
    assert float(beam["repetition_rate"]) <= 0.01
    assert float(beam["mean_escape_time"]) <= 5.0


def test_penalty_sweep_full_run(test_output_dir):
    """1000試行の presence penalty の掃引で繰り返し率が単調に下がることを確認します。"""
    output = test_output_dir / "penalty_sweep.csv"
    assert cli(["sweep-penalty", "--trials", "1000", "--out", str(output)]) == 0
    with open(output, "r", encoding="utf-8") as f:
        rates = [float(row["repetition_rate"]) for row in csv.DictReader(f)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert min(rates) <= 0.01


def test_workflow_mode2_stall_fraction():
    """停滞モード2の500回の反復で、停滞を含むバッチが 0.75 ± 0.05 になることを確認します。"""
    config = load_workflow_config("mode2")
    reports = simulate_replications(
        500,
        config.n_transactions,
        config.spec(),
        config.stages,
        config.stall(),
        seed=0,
    )
    fraction = sum(report.stalled for report in reports) / len(reports)
    assert abs(fraction - 0.75) <= 0.05


def test_workflow_mean_without_stalls():
    """停滞なしの1000シードで取引あたりの平均が28分の±10%に入ることを確認します。"""
    config = load_workflow_config("workflow")
    spec = config.spec()
    minutes = [
        simulate_transaction(spec, config.stages, config.stall(), seed)
        for seed in range(1000)
    ]
    mean = sum(minutes) / len(minutes)
    assert 25.2 <= mean <= 30.8
