"""実験ハーネスとコマンドラインインターフェース

このモジュールは、設定ファイルに基づいて実験を実行し、結果をCSVなどに出力する
機能を提供します。
主な機能は以下の通りです：

- 貪欲デコードとビームサーチ（幅 × early_stopping）の比較実験
- presence penalty の掃引
- 理論式とシミュレーション結果を並べたレポート
- 最小ビーム幅とビーム幅の下界の計算
- DPO データセットの生成、ワークフローのシミュレーション、繰り返しの検出
- サブコマンド形式のコマンドラインインターフェース

実行例:
    uv run repetitionlab ablate --config default --trials 1000 --out results/ablation.csv
"""

import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import pandas as pd
import yaml
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import (
    BaseSettings,
    CliApp,
    CliSubCommand,
    SettingsConfigDict,
    SettingsError,
    get_subcommand,
)

from repetitionlab.config import (
    ExperimentSettings,
    LabConfig,
    ModelConfig,
    TheorySettings,
    load_detect_config,
    load_lab_config,
    load_seeds_config,
    load_workflow_config,
)
from repetitionlab.decoders import DecodeResult, beam_search_decode, decode, greedy_decode
from repetitionlab.dpo_dataset import generate_dataset, write_dataset
from repetitionlab.repetition_analysis import (
    detect_repetition,
    escape_time,
    is_repetitive,
)
from repetitionlab.schemas import DecoderConfig, DetectorParams, ExperimentRow, ExperimentTable
from repetitionlab.seeding import derive_rng, derive_seed
from repetitionlab.theory import (
    beam_width_lower_bound,
    check_non_repetitive_bound,
    min_beam_width,
    predict_overheads,
)
from repetitionlab.trap_kernel import TrialInstance, build_branch_kernel
from repetitionlab.workflow_sim import simulate_replications, total_llm_calls

logger = logging.getLogger(__name__)

# 比較のために併記する参照値
REFERENCE_GREEDY_RATE = 0.773
REFERENCE_KMIN = 3.2
REFERENCE_ESCAPE_STEPS = "3-4"
REFERENCE_MEMORY_FACTOR = 5.0


class HarnessSettings(BaseSettings):
    """コマンドライン実行の設定を管理するクラス

    環境変数（REPLAB_ で始まる名前）や .env ファイルからも読み込み、
    コマンドライン引数で上書きします。

    Attributes:
        config (str | None): 設定ファイルのパス、または同梱の設定名
        seed (int): 基準シード
        out (str | None): 出力ファイルのパス
        trials (int | None): 試行数（反復回数）
    """

    config: str | None = Field(default=None, description="設定ファイルのパスまたは同梱の設定名")
    seed: int = Field(default=0, description="基準シード（デフォルト0）")
    out: str | None = Field(default=None, description="出力ファイルのパス")
    trials: int | None = Field(default=None, ge=1, description="試行数")

    model_config = SettingsConfigDict(
        env_prefix="REPLAB_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


class ExperimentGrid(BaseModel):
    """比較実験のグリッド

    Attributes:
        configs (list[DecoderConfig]): デコーダ設定の一覧
        trials (int): 設定ごとの試行数
        horizon (int): 生成トークン数の上限
        detector (DetectorParams): 繰り返し検出のパラメータ
        base_seed (int): 基準シード
    """

    configs: list[DecoderConfig] = Field(..., min_length=1)
    trials: int = Field(..., ge=1)
    horizon: int = Field(..., ge=1)
    detector: DetectorParams = DetectorParams()
    base_seed: int = 0


class TheoryRow(BaseModel):
    """理論レポートの1行

    Attributes:
        metric (str): 指標名
        predicted (str): 理論式による値
        simulated (str): シミュレーションによる値
        reference (str): 参照値
        note (str): 補足
    """

    metric: str
    predicted: str = ""
    simulated: str = ""
    reference: str = ""
    note: str = ""


class TheoryReport(BaseModel):
    """理論レポート

    Attributes:
        lines (list[str]): 表示用のテキスト
        rows (list[TheoryRow]): CSV 出力用の行
    """

    lines: list[str]
    rows: list[TheoryRow]

    @property
    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def to_csv(self, output_file: str) -> None:
        df = pd.DataFrame([row.model_dump() for row in self.rows])
        df.to_csv(output_file, index=False, lineterminator="\n")


def default_grid(
    experiment: ExperimentSettings, base_seed: int = 0, trials: int | None = None
) -> ExperimentGrid:
    """貪欲デコードと (ビーム幅 × early_stopping) のグリッドを作る"""
    horizon = experiment.horizon
    configs = [DecoderConfig(max_tokens=horizon)]
    for width in experiment.beam_widths:
        for mode in experiment.early_stopping:
            configs.append(
                DecoderConfig(
                    use_beam_search=True,
                    best_of=width,
                    early_stopping=mode,
                    max_tokens=horizon,
                )
            )
    return ExperimentGrid(
        configs=configs,
        trials=trials or experiment.trials,
        horizon=horizon,
        detector=experiment.detector,
        base_seed=base_seed,
    )


def _reference_loop(
    instance: TrialInstance, horizon: int, detector: DetectorParams
) -> tuple[int, tuple[int, ...]] | None:
    # 構成上わかっていればそれを、なければ貪欲経路で検出したループを使う
    if instance.loop_unit is not None and instance.loop_onset is not None:
        return instance.loop_onset, instance.loop_unit
    greedy = greedy_decode(instance.model, instance.prompt, horizon)
    report = detect_repetition(
        greedy.best.tokens, detector.min_period, detector.max_period, 2
    )
    if not report.detected:
        return None
    return report.onset, report.unit


def _summarize(
    config: DecoderConfig,
    results: list[DecodeResult],
    escapes: list[int],
    detector: DetectorParams,
) -> ExperimentRow:
    trapped = sum(1 for result in results if is_repetitive(result, detector))
    return ExperimentRow(
        label=config.label,
        repetition_rate=trapped / len(results),
        mean_steps=sum(result.steps_taken for result in results) / len(results),
        mean_escape_time=sum(escapes) / len(escapes) if escapes else None,
        mean_wall_time=sum(result.evaluations for result in results) / len(results),
        trials=len(results),
    )


def run_grid(model_config: ModelConfig, grid: ExperimentGrid) -> list[ExperimentRow]:
    """グリッドの各設定を同じ試行列で実行する

    試行 i のモデルは (base_seed, i)、設定 j のデコーダのシードは
    (base_seed, i, j) から導出するため、設定間で同じモデルを比較できます。

    Returns:
        list[ExperimentRow]: 設定ごとの結果（設定の順）
    """
    results: list[list[DecodeResult]] = [[] for _ in grid.configs]
    escapes: list[list[int]] = [[] for _ in grid.configs]
    for trial in range(grid.trials):
        instance = model_config.instance(derive_rng(grid.base_seed, trial))
        loop = _reference_loop(instance, grid.horizon, grid.detector)
        for index, config in enumerate(grid.configs):
            trial_config = config.model_copy(
                update={
                    "max_tokens": grid.horizon,
                    "seed": derive_seed(grid.base_seed, trial, index),
                }
            )
            result = decode(instance.model, instance.prompt, trial_config)
            results[index].append(result)
            if loop is None or loop[0] > len(result.best.tokens):
                continue
            elapsed = escape_time(result, *loop)
            # ループに入って抜け出した試行だけを平均する
            if elapsed != "never" and elapsed > 0:
                escapes[index].append(elapsed)
        logger.debug("trial %d done", trial)
    return [
        _summarize(config, results[index], escapes[index], grid.detector)
        for index, config in enumerate(grid.configs)
    ]


def run_ablation(model_config: ModelConfig, grid: ExperimentGrid) -> list[ExperimentRow]:
    """デコーダ設定ごとの繰り返し率を比較する

    Args:
        model_config (ModelConfig): モデルの設定
        grid (ExperimentGrid): 実験グリッド

    Returns:
        list[ExperimentRow]: 設定ごとに1行
    """
    rows = run_grid(model_config, grid)
    for row in rows:
        print(
            f"{row.label}: 繰り返し率 {row.repetition_rate:.4f}"
            f" 平均ステップ数 {row.mean_steps:.1f}"
        )
    return rows


def run_penalty_sweep(
    model_config: ModelConfig,
    penalties: Sequence[float],
    trials: int,
    base_seed: int = 0,
    horizon: int = 256,
    detector: DetectorParams | None = None,
) -> list[ExperimentRow]:
    """presence penalty を変えながら貪欲デコードの繰り返し率を測る

    penalty 0 の行は同じシードの貪欲デコードの行と一致します。

    Raises:
        ValueError: penalties が空の場合、負の penalty を含む場合
    """
    if not penalties:
        raise ValueError("penalty の一覧が空です")
    for penalty in penalties:
        if penalty < 0:
            raise ValueError(f"presence penalty は 0 以上でなければなりません: {penalty}")
    grid = ExperimentGrid(
        configs=[
            DecoderConfig(presence_penalty=penalty, max_tokens=horizon)
            for penalty in penalties
        ],
        trials=trials,
        horizon=horizon,
        detector=detector or DetectorParams(),
        base_seed=base_seed,
    )
    rows = run_grid(model_config, grid)
    for penalty, row in zip(penalties, rows):
        print(f"presence_penalty={penalty:g}: 繰り返し率 {row.repetition_rate:.4f}")
    return rows


def run_escape_check(
    epsilon: float, p_n: float, trials: int, seed: int = 0, horizon: int = 16
) -> float:
    """ビーム幅の下界で非繰り返しの結果が得られる割合をシミュレーションする

    各試行で beam_width_lower_bound(epsilon, p_n) + 1 個の分岐をそれぞれ確率 p_n で
    罠にした2分岐カーネルを作り、early_stopping=True のビームサーチで解きます。

    Returns:
        float: 繰り返しにならなかった試行の割合
    """
    if trials < 1:
        raise ValueError(f"試行数は 1 以上でなければなりません: {trials}")
    width = beam_width_lower_bound(epsilon, p_n)
    config = DecoderConfig(
        use_beam_search=True, best_of=width, early_stopping=True, max_tokens=horizon
    )
    detector = DetectorParams()
    escaped = 0
    for trial in range(trials):
        rng = derive_rng(seed, "escape", trial)
        trapped = [bool(rng.random() < p_n) for _ in range(width + 1)]
        instance = build_branch_kernel(trapped)
        result = beam_search_decode(instance.model, instance.prompt, config)
        if not is_repetitive(result, detector):
            escaped += 1
    return escaped / trials


def _format(value: float | None, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.{digits}f}"


def kmin_report(p_r: float, p_escape: float) -> TheoryReport:
    """最小ビーム幅の計算過程と参照値を並べたレポート"""
    k_min = min_beam_width(p_r, p_escape)
    ratio = math.log(1.0 - p_escape) / math.log(p_r)
    lines = [
        "k_min = ceil(log(1 - P_escape) / log(p_r))",
        f"p_r = {p_r:g}, P_escape = {p_escape:g}",
        f"log({1.0 - p_escape:g}) / log({p_r:g}) = {ratio:.4f}",
        f"k_min = {k_min}",
        f"参照値: k_min ≈ {REFERENCE_KMIN}（式のとおりに計算した値と一致しません。"
        "p_r を1ステップあたりと1回の生成あたりのどちらと読むかで食い違うため、両方を併記します）",
    ]
    rows = [
        TheoryRow(
            metric="k_min",
            predicted=str(k_min),
            reference=f"{REFERENCE_KMIN:g}",
            note=f"p_r={p_r:g} P_escape={p_escape:g} ratio={ratio:.4f}",
        )
    ]
    return TheoryReport(lines=lines, rows=rows)


def bounds_report(inputs: TheorySettings) -> TheoryReport:
    """ビーム幅の下界、非繰り返し条件、オーバーヘッドのレポート"""
    width = beam_width_lower_bound(inputs.epsilon, inputs.p_n)
    survives = check_non_repetitive_bound(
        inputs, [inputs.p_n] * inputs.horizon, [inputs.p_r] * inputs.horizon
    )
    memory, (time_low, time_high) = predict_overheads(inputs.beam_width)
    lines = [
        "B >= ceil(log(1 / epsilon) / log(1 / p_n))",
        f"epsilon = {inputs.epsilon:g}, p_n = {inputs.p_n:g} -> B = {width}",
        "sum log p_n(j) > sum log p_r(j) - delta",
        f"p_n = {inputs.p_n:g}, p_r = {inputs.p_r:g}, delta = {inputs.delta:g},"
        f" L = {inputs.horizon} -> {survives}",
        f"ビーム幅 {inputs.beam_width}: メモリ {memory:g} 倍,"
        f" 時間 +{time_low:.0%}〜+{time_high:.0%}",
    ]
    rows = [
        TheoryRow(
            metric="beam_width_lower_bound",
            predicted=str(width),
            note=f"epsilon={inputs.epsilon:g} p_n={inputs.p_n:g}",
        ),
        TheoryRow(
            metric="non_repetitive_bound",
            predicted=str(survives),
            note=f"p_n={inputs.p_n:g} p_r={inputs.p_r:g} delta={inputs.delta:g} L={inputs.horizon}",
        ),
        TheoryRow(
            metric="memory_overhead",
            predicted=f"{memory:g}",
            note=f"beam_width={inputs.beam_width}",
        ),
        TheoryRow(
            metric="time_overhead",
            predicted=f"{time_low:.4f}-{time_high:.4f}",
            note=f"beam_width={inputs.beam_width}",
        ),
    ]
    return TheoryReport(lines=lines, rows=rows)


def run_theory_report(config: LabConfig, trials: int, seed: int = 0) -> TheoryReport:
    """理論式による予測と、同じ実行でのシミュレーション結果を並べる

    Args:
        config (LabConfig): 実験設定（モデル、実験、理論の入力）
        trials (int): シミュレーションの試行数
        seed (int): 基準シード

    Returns:
        TheoryReport: 表示用テキストと CSV 用の行
    """
    theory = config.theory
    experiment = config.experiment
    width = theory.beam_width
    grid = ExperimentGrid(
        configs=[
            DecoderConfig(max_tokens=experiment.horizon),
            DecoderConfig(
                use_beam_search=True,
                best_of=width,
                early_stopping=True,
                max_tokens=experiment.horizon,
            ),
        ],
        trials=trials,
        horizon=experiment.horizon,
        detector=experiment.detector,
        base_seed=seed,
    )
    greedy_row, beam_row = run_grid(config.model, grid)
    trap = config.model.trap
    predicted_greedy = trap.greedy_entry_probability if trap is not None else None
    escape_bound = beam_width_lower_bound(theory.epsilon, theory.p_n)
    escape_rate = run_escape_check(theory.epsilon, theory.p_n, trials, seed)
    memory, (time_low, time_high) = predict_overheads(width)
    evaluation_ratio = beam_row.mean_wall_time / greedy_row.mean_wall_time

    kmin = kmin_report(theory.p_r, theory.p_escape)
    bounds = bounds_report(theory)
    rows = [
        TheoryRow(
            metric="greedy_repetition_rate",
            predicted=_format(predicted_greedy),
            simulated=_format(greedy_row.repetition_rate),
            reference=f"{REFERENCE_GREEDY_RATE:.4f}",
            note=f"trials={trials} horizon={experiment.horizon}",
        ),
        TheoryRow(
            metric="beam_repetition_rate",
            simulated=_format(beam_row.repetition_rate),
            reference="0.0000",
            note=f"beam_width={width} early_stopping=True",
        ),
        TheoryRow(
            metric="beam_escape_time",
            predicted=f"<= {width}",
            simulated=_format(beam_row.mean_escape_time),
            reference=REFERENCE_ESCAPE_STEPS,
            note="ループ開始からのステップ数",
        ),
        TheoryRow(
            metric="escape_probability",
            predicted=_format(1.0 - theory.epsilon),
            simulated=_format(escape_rate),
            note=f"beam_width={escape_bound} p_n={theory.p_n:g} の2分岐カーネル",
        ),
        *kmin.rows,
        TheoryRow(
            metric="memory_overhead",
            predicted=f"{memory:g}",
            reference=f"{REFERENCE_MEMORY_FACTOR:g}",
            note=f"beam_width={width}",
        ),
        TheoryRow(
            metric="time_overhead",
            predicted=f"{time_low:.4f}-{time_high:.4f}",
            reference="0.15-0.20",
            note=f"beam_width={width}",
        ),
        TheoryRow(
            metric="evaluation_ratio",
            simulated=_format(evaluation_ratio),
            note="ビームサーチと貪欲デコードのモデル評価回数の比",
        ),
    ]
    lines = [
        "=== 理論予測とシミュレーション ===",
        f"モデル: gamma={config.model.gamma:g}, r_max={config.model.r_max},"
        f" horizon={experiment.horizon}, trials={trials}, seed={seed}",
        f"貪欲デコードの繰り返し率: 予測 {_format(predicted_greedy) or '-'}"
        f" / シミュレーション {greedy_row.repetition_rate:.4f}"
        f" / 参照値 {REFERENCE_GREEDY_RATE:.1%}",
        f"ビーム幅 {width} (early_stopping=True) の繰り返し率:"
        f" {beam_row.repetition_rate:.4f}",
        f"ビーム幅 {width} の平均脱出時間: {_format(beam_row.mean_escape_time) or '-'}"
        f" ステップ（予測 <= {width}、参照値 {REFERENCE_ESCAPE_STEPS}）",
        f"ビーム幅 {escape_bound} での脱出確率: {escape_rate:.4f}"
        f"（予測 >= {1.0 - theory.epsilon:.4f}）",
        *kmin.lines,
        *bounds.lines,
        f"モデル評価回数の比（ビーム / 貪欲）: {evaluation_ratio:.4f}",
    ]
    return TheoryReport(lines=lines, rows=rows)


class CliUsageError(Exception):
    """コマンドライン引数の誤り"""


def _output_path(settings: HarnessSettings, default: str) -> Path:
    path = Path(settings.out or default)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


class CommandOptions(BaseModel):
    """サブコマンドに共通のオプション

    指定した値は、環境変数やサブコマンドより前に書いた値よりも優先されます。
    """

    config: str | None = Field(default=None, description="設定ファイルのパスまたは同梱の設定名")
    seed: int | None = Field(default=None, description="基準シード")
    out: str | None = Field(default=None, description="出力ファイルのパス")
    trials: int | None = Field(default=None, ge=1, description="試行数")

    def resolve(self, base: HarnessSettings) -> HarnessSettings:
        """基本の設定にこのサブコマンドの指定を重ねた設定を返す"""
        common = set(CommandOptions.model_fields)
        overrides = self.model_dump(include=common, exclude_none=True)
        return HarnessSettings(**{**base.model_dump(include=common), **overrides})

    def run(self, settings: HarnessSettings) -> None:
        raise NotImplementedError


class AblateCommand(CommandOptions):
    """貪欲デコードとビームサーチの比較実験を実行し、CSV に保存します"""

    def run(self, settings: HarnessSettings) -> None:
        config = load_lab_config(settings.config or "default")
        grid = default_grid(config.experiment, settings.seed, settings.trials)
        rows = run_ablation(config.model, grid)
        output = _output_path(settings, "results/ablation.csv")
        ExperimentTable(rows=rows).to_csv(str(output))
        print(f"結果を保存しました: {output}")


class SweepPenaltyCommand(CommandOptions):
    """presence penalty を掃引し、CSV に保存します"""

    def run(self, settings: HarnessSettings) -> None:
        config = load_lab_config(settings.config or "default")
        experiment = config.experiment
        rows = run_penalty_sweep(
            config.model,
            experiment.penalties,
            settings.trials or experiment.trials,
            settings.seed,
            experiment.horizon,
            experiment.detector,
        )
        output = _output_path(settings, "results/penalty_sweep.csv")
        ExperimentTable(rows=rows).to_csv(str(output))
        print(f"結果を保存しました: {output}")


class TheoryCommand(CommandOptions):
    """理論値とシミュレーション結果を並べたレポートを作ります"""

    def run(self, settings: HarnessSettings) -> None:
        config = load_lab_config(settings.config or "default")
        report = run_theory_report(
            config, settings.trials or config.experiment.trials, settings.seed
        )
        print(report.text, end="")
        output = _output_path(settings, "results/theory.csv")
        report.to_csv(str(output))
        output.with_suffix(".txt").write_text(report.text, encoding="utf-8")
        print(f"結果を保存しました: {output}")


class TheoryOverrideOptions(CommandOptions):
    """理論式の入力を設定ファイルの値から上書きするオプション"""

    p_r: float | None = Field(default=None, description="繰り返しを続ける確率")
    p_escape: float | None = Field(default=None, description="目標とする脱出確率")
    epsilon: float | None = Field(default=None, description="許容する繰り返し確率")
    p_n: float | None = Field(default=None, description="繰り返しでない経路の確率")

    def theory_inputs(self, settings: HarnessSettings) -> TheorySettings:
        theory = load_lab_config(settings.config or "default").theory
        overrides = self.model_dump(
            include={"p_r", "p_escape", "epsilon", "p_n"}, exclude_none=True
        )
        return TheorySettings(**{**theory.model_dump(), **overrides})


class KminCommand(TheoryOverrideOptions):
    """脱出に必要な最小ビーム幅を計算します"""

    def run(self, settings: HarnessSettings) -> None:
        inputs = self.theory_inputs(settings)
        report = kmin_report(inputs.p_r, inputs.p_escape)
        print(report.text, end="")
        report.to_csv(str(_output_path(settings, "results/kmin.csv")))


class BoundsCommand(TheoryOverrideOptions):
    """ビーム幅の下界とオーバーヘッドの予測を計算します"""

    def run(self, settings: HarnessSettings) -> None:
        report = bounds_report(self.theory_inputs(settings))
        print(report.text, end="")
        report.to_csv(str(_output_path(settings, "results/bounds.csv")))


class DpoGenCommand(CommandOptions):
    """シードから DPO の選好ペアを作り、JSONL に保存します"""

    def run(self, settings: HarnessSettings) -> None:
        config = load_seeds_config(settings.config or "seeds")
        pairs = generate_dataset(config.seeds, config.degrees)
        output = _output_path(settings, "results/dpo_pairs.jsonl")
        write_dataset(pairs, output)
        print(f"{len(config.seeds)} 件のシードから {len(pairs)} 件のペアを保存しました: {output}")


class WorkflowCommand(CommandOptions):
    """業務ワークフローの所要時間をシミュレーションし、CSV に保存します"""

    def run(self, settings: HarnessSettings) -> None:
        config = load_workflow_config(settings.config or "workflow")
        spec = config.spec()
        reports = simulate_replications(
            settings.trials or 500,
            config.n_transactions,
            spec,
            config.stages,
            config.stall(),
            settings.seed,
        )
        df = pd.DataFrame(
            [
                {
                    "replication": index,
                    "total_minutes": f"{report.total_minutes:.4f}",
                    "mean_transaction_minutes": f"{report.total_minutes / len(report.transaction_minutes):.4f}",
                    "max_transaction_minutes": f"{max(report.transaction_minutes):.4f}",
                    "stall_events": report.stall_events,
                    "stalled": report.stalled,
                }
                for index, report in enumerate(reports)
            ]
        )
        output = _output_path(settings, "results/workflow.csv")
        df.to_csv(output, index=False, lineterminator="\n")
        stalled = sum(report.stalled for report in reports) / len(reports)
        print(f"取引あたりの LLM 呼び出し回数: {total_llm_calls(spec)}")
        print(f"停滞を含むバッチの割合: {stalled:.4f}")
        print(f"結果を保存しました: {output}")


class DetectCommand(CommandOptions):
    """トークン列から繰り返しを検出し、CSV に保存します"""

    def run(self, settings: HarnessSettings) -> None:
        config = load_detect_config(settings.config or "detect")
        params = config.detector
        records = []
        for tokens in config.sequences:
            report = detect_repetition(
                tokens, params.min_period, params.max_period, params.min_repeats
            )
            ended = config.eos is not None and bool(tokens) and tokens[-1] == config.eos
            records.append(
                {
                    "detected": report.detected,
                    "period": report.period,
                    "repeats": report.repeats,
                    "onset": report.onset,
                    "termination": "eos" if ended else "max_tokens",
                }
            )
        output = _output_path(settings, "results/detect.csv")
        pd.DataFrame(
            records, columns=["detected", "period", "repeats", "onset", "termination"]
        ).to_csv(output, index=False, lineterminator="\n")
        found = sum(record["detected"] for record in records)
        print(f"{len(records)} 件中 {found} 件で繰り返しを検出しました: {output}")


class HarnessCli(HarnessSettings):
    """自己強化マルコフモデルで繰り返しとその対策を再現する実験ツール

    サブコマンドより前に書いた --config などは環境変数と同じく既定値として扱い、
    サブコマンドに書いた値で上書きします。
    """

    ablate: CliSubCommand[AblateCommand]
    sweep_penalty: CliSubCommand[SweepPenaltyCommand]
    theory: CliSubCommand[TheoryCommand]
    kmin: CliSubCommand[KminCommand]
    bounds: CliSubCommand[BoundsCommand]
    dpo_gen: CliSubCommand[DpoGenCommand]
    workflow: CliSubCommand[WorkflowCommand]
    detect: CliSubCommand[DetectCommand]

    model_config = SettingsConfigDict(
        cli_prog_name="repetitionlab",
        cli_kebab_case=True,
        cli_exit_on_error=True,
    )

    def cli_cmd(self) -> None:
        command = get_subcommand(self, is_required=False)
        if command is None:
            raise CliUsageError("サブコマンドを指定してください")
        command.run(command.resolve(self))


def _usage() -> str:
    names = [
        name.replace("_", "-")
        for name in HarnessCli.model_fields
        if name not in HarnessSettings.model_fields
    ]
    return f"usage: repetitionlab [-h] {{{','.join(names)}}} ..."


def _report_error(e: BaseException) -> None:
    message = " ".join(str(e).split())
    print(f"error: {message}", file=sys.stderr)


def cli(argv: Sequence[str] | None = None) -> int:
    """コマンドラインインターフェース

    Args:
        argv (Sequence[str] | None): 引数（省略時は sys.argv[1:]）

    Returns:
        int: 終了コード。成功は0、引数や設定ファイルの内容の誤りは2、
        ファイルが無いなど実行時のエラーは1。
        エラーは標準エラー出力に ``error:`` を含む1行で報告します。
    """
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        CliApp.run(HarnessCli, cli_args=args)
    except SystemExit as e:
        # 引数の解析エラーと --help
        if e.code is None or isinstance(e.code, int):
            return e.code or 0
        print(f"error: {e.code}", file=sys.stderr)
        return 2
    except CliUsageError as e:
        print(_usage(), file=sys.stderr)
        _report_error(e)
        return 2
    except (ValidationError, SettingsError) as e:
        _report_error(e)
        return 2
    except (ValueError, OSError, yaml.YAMLError) as e:
        _report_error(e)
        return 1
    return 0


def main() -> None:
    """メイン関数

    コマンドライン引数から設定を読み込み、サブコマンドを実行します。
    環境変数や.envファイルから設定を読み込むこともできます。
    """
    sys.exit(cli())


if __name__ == "__main__":
    main()
