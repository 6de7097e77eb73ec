import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repetitionlab.config import load_workflow_config
from repetitionlab.workflow_sim import (
    StageTimeModel,
    StallModel,
    WorkflowConfig,
    WorkflowSpec,
    llm_call_stages,
    per_call_stall_probability,
    simulate_batch,
    simulate_replications,
    simulate_transaction,
    total_llm_calls,
)

MINIMA = StageTimeModel(
    drill=(2.0, 2.0),
    rules=(3.0, 3.0),
    plantuml_code=(5.0, 5.0),
    transaction_code=(5.0, 5.0),
)


def count_llm_touches(spec: WorkflowSpec) -> int:
    """ワークフローの手順を順に辿って LLM 呼び出しを数える"""
    touches = 0
    for depth in spec.depths:
        # 呼び出し関係を深さの分だけ掘り下げる
        for _ in range(depth):
            touches += 1
        # 業務ルールの抽出
        touches += 1
        # PlantUML コードの生成
        touches += 1
    # 取引全体のコード生成
    touches += 1
    return touches


@pytest.mark.parametrize(
    "depths, expected",
    [([], 1), ([1, 2], 8), ([0, 0, 0], 7)],
)
def test_total_llm_calls_examples(depths, expected):
    spec = WorkflowSpec(k=len(depths), depths=depths)
    assert total_llm_calls(spec) == expected


@settings(max_examples=1000)
@given(depths=st.lists(st.integers(0, 6), max_size=40))
def test_total_llm_calls_matches_step_walk(depths):
    """呼び出し回数の式が手順を辿って数えた回数と一致することをテスト"""
    spec = WorkflowSpec(k=len(depths), depths=depths)
    assert total_llm_calls(spec) == count_llm_touches(spec)
    assert len(llm_call_stages(spec)) == total_llm_calls(spec)


def test_workflow_spec_invalid():
    with pytest.raises(ValueError):
        WorkflowSpec(k=2, depths=[1])
    with pytest.raises(ValueError):
        WorkflowSpec(k=1, depths=[-1])


def test_simulate_transaction_minima():
    """範囲を最小値に潰すと所要時間が手計算の和になることをテスト"""
    spec = WorkflowSpec(k=2, depths=[1, 2])
    minutes = simulate_transaction(spec, MINIMA, StallModel(), seed=0)
    # 掘り下げ3回、ルール2回、PlantUML 2回、取引コード1回
    expected = (3 * 2.0 + 2 * 3.0 + 2 * 5.0 + 5.0) / 60.0
    assert minutes == pytest.approx(expected)


def test_simulate_transaction_always_stalled():
    """停滞確率1ならすべての呼び出しが停滞時間になることをテスト"""
    spec = WorkflowSpec(k=2, depths=[1, 2])
    stall = StallModel(probability=1.0, seconds=600.0)
    minutes = simulate_transaction(spec, StageTimeModel(), stall, seed=3)
    assert minutes == pytest.approx(8 * 600.0 / 60.0)


def test_simulate_transaction_is_reproducible():
    spec = load_workflow_config("workflow").spec()
    first = simulate_transaction(spec, StageTimeModel(), StallModel(), seed=42)
    second = simulate_transaction(spec, StageTimeModel(), StallModel(), seed=42)
    assert first == second


def test_calibrated_mean_is_about_28_minutes():
    """同梱の設定で1000シードの平均が28分の±10%に収まることをテスト"""
    config = load_workflow_config("workflow")
    spec = config.spec()
    assert total_llm_calls(spec) == 301
    minutes = [
        simulate_transaction(spec, config.stages, config.stall(), seed)
        for seed in range(1000)
    ]
    mean = sum(minutes) / len(minutes)
    assert 28.0 * 0.9 <= mean <= 28.0 * 1.1


def test_simulate_batch_without_stalls():
    """停滞がなければ合計が取引ごとの時間の和になることをテスト"""
    spec = WorkflowSpec(k=3, depths=[1, 2, 3])
    report = simulate_batch(20, spec, StageTimeModel(), StallModel(), seed=1)
    assert len(report.transaction_minutes) == 20
    assert report.total_minutes == pytest.approx(sum(report.transaction_minutes))
    assert report.stall_events == 0
    assert not report.stalled
    assert report.stalls_per_transaction == [0] * 20


def test_simulate_batch_invalid():
    spec = WorkflowSpec(k=1, depths=[1])
    with pytest.raises(ValueError):
        simulate_batch(0, spec, StageTimeModel(), StallModel(), seed=0)
    with pytest.raises(ValueError):
        simulate_replications(0, 1, spec, StageTimeModel(), StallModel(), seed=0)


@pytest.mark.parametrize("seed", range(10))
def test_batch_time_monotone_in_stall_probability(seed):
    """同じシードなら停滞確率が高いほどバッチ時間が短くならないことをテスト"""
    spec = load_workflow_config("workflow").spec()
    totals = [
        simulate_batch(
            5, spec, StageTimeModel(), StallModel(probability=p, seconds=1500.0), seed
        ).total_minutes
        for p in (0.0, 0.001, 0.01, 0.1)
    ]
    assert totals == sorted(totals)


@pytest.mark.parametrize("seed", range(10))
def test_batch_time_monotone_in_stall_duration(seed):
    """同じシードなら停滞時間が長いほどバッチ時間が短くならないことをテスト"""
    spec = load_workflow_config("workflow").spec()
    totals = [
        simulate_batch(
            5, spec, StageTimeModel(), StallModel(probability=0.01, seconds=s), seed
        ).total_minutes
        for s in (100.0, 1500.0, 6000.0)
    ]
    assert totals == sorted(totals)


def test_per_call_stall_probability():
    """バッチ単位の停滞発生率から呼び出しごとの確率を求められることをテスト"""
    calls = 20 * 301
    assert per_call_stall_probability(0.75, calls) == pytest.approx(2.3025e-4, rel=1e-3)
    assert per_call_stall_probability(0.8, calls) == pytest.approx(2.6731e-4, rel=1e-3)
    assert per_call_stall_probability(0.0, calls) == 0.0
    with pytest.raises(ValueError):
        per_call_stall_probability(1.0, calls)
    with pytest.raises(ValueError):
        per_call_stall_probability(0.5, 0)


def test_mode_configs_match_calibration():
    """同梱の停滞モードの設定が呼び出しごとの確率の計算と一致することをテスト"""
    for name, rate in (("mode2", 0.75), ("mode1", 0.8)):
        config = load_workflow_config(name)
        calls = config.n_transactions * total_llm_calls(config.spec())
        assert config.stall_probability == pytest.approx(
            per_call_stall_probability(rate, calls), rel=1e-3
        )


def test_mode2_stall_fraction():
    """停滞モード2で停滞を含むバッチの割合が 75% 付近になることをテスト"""
    config = load_workflow_config("mode2")
    reports = simulate_replications(
        100,
        config.n_transactions,
        config.spec(),
        config.stages,
        config.stall(),
        seed=0,
    )
    fraction = sum(report.stalled for report in reports) / len(reports)
    assert 0.6 <= fraction <= 0.9


def test_workflow_config_depth_cycle():
    """depths を省略すると depth_cycle を繰り返すことをテスト"""
    spec = WorkflowConfig(k=5, depth_cycle=[1, 2]).spec()
    assert spec.depths == [1, 2, 1, 2, 1]
    assert WorkflowConfig(k=2, depths=[4, 4]).spec().depths == [4, 4]


@pytest.mark.parametrize("name, low, high", [("mode1", 100.0, 160.0), ("mode2", 40.0, 70.0)])
def test_stalled_transaction_band(name, low, high):
    """停滞を1回含む取引の所要時間がモードごとの帯に収まることをテスト"""
    config = load_workflow_config(name)
    reports = simulate_replications(
        20,
        config.n_transactions,
        config.spec(),
        config.stages,
        config.stall(),
        seed=0,
    )
    stalled = [
        minutes
        for report in reports
        for minutes, count in zip(report.transaction_minutes, report.stalls_per_transaction)
        if count == 1
    ]
    assert stalled
    assert all(low <= minutes <= high for minutes in stalled)
    # 停滞のない取引は帯より短い
    clean = [
        minutes
        for report in reports
        for minutes, count in zip(report.transaction_minutes, report.stalls_per_transaction)
        if count == 0
    ]
    assert max(clean) < low


def test_stalled_transaction_longer_than_clean_counterpart():
    """同じシードなら停滞した取引は停滞なしの取引より長くなることをテスト"""
    config = load_workflow_config("mode2")
    spec = config.spec()
    stall = StallModel(probability=0.005, seconds=config.stall_seconds)
    longer = 0
    for seed in range(50):
        clean = simulate_transaction(spec, config.stages, StallModel(), seed)
        stalled = simulate_transaction(spec, config.stages, stall, seed)
        assert stalled >= clean
        if stalled > clean:
            longer += 1
            # 停滞した呼び出し1回につき、最長の呼び出しとの差以上に延びる
            assert stalled - clean >= (config.stall_seconds - 14.0) / 60.0
    assert longer > 0
