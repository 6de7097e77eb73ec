"""実験で共有するデータモデル

このモジュールは、デコーダ設定、繰り返し検出の結果、実験結果の行を表す
データモデルを提供します。
主な機能は以下の通りです：

- デコーダ設定（サービングエンジンと同じパラメータ名）とその制約の検証
- 繰り返し検出パラメータと検出結果のデータモデル
- 実験結果の行とCSVファイルとの相互変換機能
"""

import math
from typing import Literal

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

EarlyStopping = bool | Literal["never"]

EXPERIMENT_COLUMNS = [
    "label",
    "repetition_rate",
    "mean_steps",
    "mean_escape_time",
    "mean_wall_time",
    "trials",
]


class DecoderConfig(BaseModel):
    """デコーダの設定

    Attributes:
        use_beam_search (bool): ビームサーチを使うかどうか
        best_of (int): ビーム幅 B
        temperature (float): 温度（0なら貪欲）
        top_p (float): nucleus サンプリングの閾値 (0, 1]
        top_k (int): top-k の k。-1 で無効
        early_stopping (EarlyStopping): True / False / "never"
        presence_penalty (float): 出現済みトークンへのペナルティ
        max_tokens (int): 生成トークン数の上限
        seed (int): サンプリング用の乱数シード
    """

    use_beam_search: bool = False
    best_of: int = Field(default=1, ge=1)
    temperature: float = Field(default=0.0, ge=0.0)
    top_p: float = Field(default=1.0, gt=0.0, le=1.0)
    top_k: int = -1
    early_stopping: EarlyStopping = False
    presence_penalty: float = Field(default=0.0, ge=0.0)
    max_tokens: int = Field(default=256, ge=1)
    seed: int = 0

    model_config = ConfigDict(frozen=True)

    @field_validator("early_stopping", mode="before")
    @classmethod
    def _normalize_never(cls, value: object) -> object:
        if isinstance(value, str) and value.strip().lower() == "never":
            return "never"
        return value

    @field_validator("top_k")
    @classmethod
    def _check_top_k(cls, value: int) -> int:
        if value == 0 or value < -1:
            raise ValueError(f"top_k は -1（無効）か正の整数でなければなりません: {value}")
        return value

    @model_validator(mode="after")
    def _check_beam_parameters(self) -> "DecoderConfig":
        if self.use_beam_search and (
            self.temperature != 0.0 or self.top_p != 1.0 or self.top_k != -1
        ):
            raise ValueError(
                "ビームサーチでは temperature=0, top_p=1, top_k=-1 でなければなりません"
            )
        return self

    @property
    def label(self) -> str:
        """CSVの行ラベル"""
        if self.use_beam_search:
            return f"beam B={self.best_of} early_stopping={self.early_stopping}"
        if self.temperature == 0.0:
            if self.presence_penalty == 0.0:
                return "greedy"
            return f"greedy presence_penalty={self.presence_penalty:g}"
        return (
            f"sample temperature={self.temperature:g} top_k={self.top_k}"
            f" top_p={self.top_p:g} presence_penalty={self.presence_penalty:g}"
        )


class DetectorParams(BaseModel):
    """繰り返し検出のパラメータ

    Attributes:
        min_period (int): 探索する最小周期
        max_period (int): 探索する最大周期
        min_repeats (int): 検出に必要な単位の連続回数
    """

    min_period: int = Field(default=1, ge=1)
    max_period: int = Field(default=64, ge=1)
    min_repeats: int = Field(default=4, ge=1)

    model_config = ConfigDict(frozen=True)


class RepetitionReport(BaseModel):
    """繰り返し検出の結果

    Attributes:
        detected (bool): 末尾に繰り返しが見つかったかどうか
        period (int): 繰り返し単位の長さ（未検出なら0）
        unit (tuple[int, ...]): 繰り返し単位
        repeats (int): 単位の連続完全出現回数
        onset (int): 繰り返し区間の開始位置
        min_repeats (int): 検出に使った最小連続回数
        max_period (int): 検出に使った最大周期
    """

    detected: bool
    period: int = 0
    unit: tuple[int, ...] = ()
    repeats: int = 0
    onset: int = 0
    min_repeats: int = 4
    max_period: int = 64

    @model_validator(mode="after")
    def _check_consistency(self) -> "RepetitionReport":
        if len(self.unit) != self.period:
            raise ValueError("unit の長さが period と一致しません")
        if self.detected and (self.repeats < self.min_repeats or self.period < 1):
            raise ValueError("検出時は repeats >= min_repeats かつ period >= 1 です")
        return self


class ExperimentRow(BaseModel):
    """実験結果の1行

    Attributes:
        label (str): デコーダ設定のラベル
        repetition_rate (float): 繰り返し率
        mean_steps (float): 1試行あたりの平均デコードステップ数
        mean_escape_time (float | None): ループに入って抜け出した試行の平均脱出時間。該当なしは None
        mean_wall_time (float): 1試行あたりの平均モデル評価回数（計算時間の代わり）
        trials (int): 試行数
    """

    label: str
    repetition_rate: float = Field(..., ge=0.0, le=1.0)
    mean_steps: float
    mean_escape_time: float | None = None
    mean_wall_time: float
    trials: int = Field(..., ge=1)

    def as_record(self) -> dict[str, str]:
        """CSV出力用に小数点以下4桁へ整形した辞書"""
        escape = "" if self.mean_escape_time is None else f"{self.mean_escape_time:.4f}"
        return {
            "label": self.label,
            "repetition_rate": f"{self.repetition_rate:.4f}",
            "mean_steps": f"{self.mean_steps:.4f}",
            "mean_escape_time": escape,
            "mean_wall_time": f"{self.mean_wall_time:.4f}",
            "trials": str(self.trials),
        }


class ExperimentTable(BaseModel):
    """実験結果の表

    Attributes:
        rows (list[ExperimentRow]): 設定ごとの結果
    """

    rows: list[ExperimentRow]

    def to_csv(self, output_file: str) -> None:
        """結果をCSVファイルに保存する

        Args:
            output_file (str): 出力先のCSVファイルパス

        Note:
            CSVファイルは以下の列を含みます：
            - label: 設定のラベル
            - repetition_rate: 繰り返し率
            - mean_steps: 平均ステップ数
            - mean_escape_time: 平均脱出時間（該当なしは空欄）
            - mean_wall_time: 平均モデル評価回数
            - trials: 試行数
        """
        df = pd.DataFrame(
            [row.as_record() for row in self.rows], columns=EXPERIMENT_COLUMNS
        )
        df.to_csv(output_file, index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, input_file: str) -> "ExperimentTable":
        """CSVファイルから結果を読み込む"""
        df = pd.read_csv(input_file)
        rows = []
        for record in df.to_dict(orient="records"):
            escape = record["mean_escape_time"]
            rows.append(
                ExperimentRow(
                    label=str(record["label"]),
                    repetition_rate=float(record["repetition_rate"]),
                    mean_steps=float(record["mean_steps"]),
                    mean_escape_time=None if math.isnan(escape) else float(escape),
                    mean_wall_time=float(record["mean_wall_time"]),
                    trials=int(record["trials"]),
                )
            )
        return cls(rows=rows)
