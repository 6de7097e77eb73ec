"""バッチ処理ワークフローの所要時間シミュレーション

このモジュールは、コード解釈ワークフローの LLM 呼び出し回数と所要時間を
シミュレーションする機能を提供します。
主な機能は以下の通りです：

- 取引あたりの LLM 呼び出し回数 1 + Σ(D_i + 2) の計算
- 段階ごとの一様分布による呼び出し時間のサンプリング
- 繰り返しによる停滞（max_tokens まで生成し続ける呼び出し）の注入
- 取引を順に処理するバッチと、その反復のシミュレーション
"""

import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from repetitionlab.seeding import derive_seed

Stage = Literal["drill", "rules", "plantuml_code", "transaction_code"]


class WorkflowSpec(BaseModel):
    """取引の構成

    Attributes:
        k (int): 取引に含まれるサービスメソッドの数
        depths (list[int]): メソッドごとの再帰の深さ D_1..D_k
    """

    k: int = Field(..., ge=0)
    depths: list[int]

    @model_validator(mode="after")
    def _check_depths(self) -> "WorkflowSpec":
        if len(self.depths) != self.k:
            raise ValueError(f"depths の長さ {len(self.depths)} が k={self.k} と一致しません")
        if any(depth < 0 for depth in self.depths):
            raise ValueError("depths は 0 以上でなければなりません")
        return self


class StageTimeModel(BaseModel):
    """段階ごとの呼び出し時間の範囲（秒）

    Attributes:
        drill (tuple[float, float]): 呼び出し関係の掘り下げ（深さ1つにつき1回）
        rules (tuple[float, float]): 業務ルールの抽出
        plantuml_code (tuple[float, float]): メソッドごとの PlantUML コード生成
        transaction_code (tuple[float, float]): 取引全体のコード生成
    """

    drill: tuple[float, float] = (2.0, 5.0)
    rules: tuple[float, float] = (3.0, 14.0)
    plantuml_code: tuple[float, float] = (5.0, 9.0)
    transaction_code: tuple[float, float] = (5.0, 9.0)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_ranges(self) -> "StageTimeModel":
        for name in ("drill", "rules", "plantuml_code", "transaction_code"):
            low, high = getattr(self, name)
            if low < 0 or low > high:
                raise ValueError(f"{name} の範囲が不正です: ({low}, {high})")
        return self

    def range_of(self, stage: Stage) -> tuple[float, float]:
        return getattr(self, stage)


class StallModel(BaseModel):
    """停滞のモデル

    Attributes:
        probability (float): 呼び出しごとの停滞確率
        seconds (float): 停滞した呼び出しの所要時間（秒）
    """

    probability: float = Field(default=0.0, ge=0.0, le=1.0)
    seconds: float = Field(default=0.0, ge=0.0)


class BatchReport(BaseModel):
    """バッチのシミュレーション結果

    Attributes:
        total_minutes (float): バッチ全体の所要時間（分）
        transaction_minutes (list[float]): 取引ごとの所要時間（分）
        stall_events (int): 停滞した呼び出しの総数
        stalls_per_transaction (list[int]): 取引ごとの停滞回数
        stalled (bool): 停滞が1回でも起きたかどうか
    """

    total_minutes: float
    transaction_minutes: list[float]
    stall_events: int
    stalls_per_transaction: list[int]
    stalled: bool


class WorkflowConfig(BaseModel):
    """ワークフロー設定ファイルの内容

    depths を省略した場合は depth_cycle を繰り返して k 個の深さを作ります。

    Attributes:
        k (int): サービスメソッドの数
        depths (list[int] | None): 再帰の深さ
        depth_cycle (list[int]): depths 省略時に繰り返す深さ
        stages (StageTimeModel): 段階ごとの時間の範囲
        stall_probability (float): 呼び出しごとの停滞確率
        stall_seconds (float): 停滞した呼び出しの所要時間（秒）
        n_transactions (int): 1バッチの取引数
    """

    k: int = Field(default=75, ge=0)
    depths: list[int] | None = None
    depth_cycle: list[int] = [1, 2, 3]
    stages: StageTimeModel = StageTimeModel()
    stall_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    stall_seconds: float = Field(default=0.0, ge=0.0)
    n_transactions: int = Field(default=20, ge=1)

    model_config = ConfigDict(extra="forbid")

    def spec(self) -> WorkflowSpec:
        if self.depths is not None:
            return WorkflowSpec(k=self.k, depths=self.depths)
        if not self.depth_cycle:
            raise ValueError("depths も depth_cycle も指定されていません")
        cycle = self.depth_cycle
        return WorkflowSpec(k=self.k, depths=[cycle[i % len(cycle)] for i in range(self.k)])

    def stall(self) -> StallModel:
        return StallModel(probability=self.stall_probability, seconds=self.stall_seconds)


def total_llm_calls(spec: WorkflowSpec) -> int:
    """取引あたりの LLM 呼び出し回数 1 + Σ(D_i + 1 + 1)"""
    return 1 + sum(depth + 1 + 1 for depth in spec.depths)


def llm_call_stages(spec: WorkflowSpec) -> list[Stage]:
    """呼び出しを処理順に並べた段階名の一覧

    メソッドごとに掘り下げを D_i 回、業務ルール抽出、PlantUML 生成を行い、
    最後に取引全体のコード生成を1回行います。
    """
    stages: list[Stage] = []
    for depth in spec.depths:
        stages.extend(["drill"] * depth)
        stages.extend(["rules", "plantuml_code"])
    stages.append("transaction_code")
    return stages


def _run_transaction(
    spec: WorkflowSpec, times: StageTimeModel, stall: StallModel, seed: int
) -> tuple[float, int]:
    rng = np.random.default_rng(seed)
    ranges = np.array([times.range_of(stage) for stage in llm_call_stages(spec)])
    # 停滞の有無によらず同じ順で乱数を引き、設定間で乱数を揃える
    durations = rng.uniform(ranges[:, 0], ranges[:, 1])
    stalled = rng.random(len(ranges)) < stall.probability
    seconds = float(np.where(stalled, stall.seconds, durations).sum())
    return seconds, int(stalled.sum())


def simulate_transaction(
    spec: WorkflowSpec, times: StageTimeModel, stall: StallModel, seed: int
) -> float:
    """1取引の所要時間（分）

    各呼び出しの時間を段階の範囲から一様に引き、停滞確率で停滞時間に置き換えます。
    同じシードなら同じ結果になります。
    """
    seconds, _ = _run_transaction(spec, times, stall, seed)
    return seconds / 60.0


def simulate_batch(
    n_transactions: int,
    spec: WorkflowSpec,
    times: StageTimeModel,
    stall: StallModel,
    seed: int,
) -> BatchReport:
    """取引を順に処理するバッチのシミュレーション

    取引 t のシードは (seed, t) から導出します。

    Raises:
        ValueError: n_transactions が1未満の場合
    """
    if n_transactions < 1:
        raise ValueError(f"取引数は 1 以上でなければなりません: {n_transactions}")
    minutes = []
    stalls = []
    for index in range(n_transactions):
        seconds, events = _run_transaction(spec, times, stall, derive_seed(seed, index))
        minutes.append(seconds / 60.0)
        stalls.append(events)
    return BatchReport(
        total_minutes=sum(minutes),
        transaction_minutes=minutes,
        stall_events=sum(stalls),
        stalls_per_transaction=stalls,
        stalled=any(stalls),
    )


def simulate_replications(
    replications: int,
    n_transactions: int,
    spec: WorkflowSpec,
    times: StageTimeModel,
    stall: StallModel,
    seed: int,
) -> list[BatchReport]:
    """バッチを replications 回繰り返す（反復 r のシードは (seed, "batch", r) から導出）"""
    if replications < 1:
        raise ValueError(f"反復回数は 1 以上でなければなりません: {replications}")
    return [
        simulate_batch(n_transactions, spec, times, stall, derive_seed(seed, "batch", r))
        for r in range(replications)
    ]


def per_call_stall_probability(run_rate: float, calls_per_batch: int) -> float:
    """バッチ単位の停滞発生率から呼び出しごとの停滞確率を求める

    1 - (1 - run_rate)^(1 / calls_per_batch) を返します。
    """
    if not 0.0 <= run_rate < 1.0:
        raise ValueError(f"run_rate は [0, 1) の範囲でなければなりません: {run_rate}")
    if calls_per_batch < 1:
        raise ValueError(f"calls_per_batch は 1 以上でなければなりません: {calls_per_batch}")
    return -math.expm1(math.log1p(-run_rate) / calls_per_batch)
