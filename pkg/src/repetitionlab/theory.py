"""繰り返しからの脱出に関する理論式

このモジュールは、自己強化による繰り返し確率の増加と、ビームサーチで
繰り返しから抜け出すために必要なビーム幅を評価する関数を提供します。
主な機能は以下の通りです：

- 繰り返し確率の漸化式 p(t+1) = p(t)·α(r_t)（上限1）
- 非繰り返し候補が生き残る条件の判定
- ビーム幅の下界と最小ビーム幅
- ビーム幅に対するメモリと時間のオーバーヘッドの予測

対数はすべて自然対数です。比を取る式では底によらず同じ切り上げ値になります。
"""

import math
from typing import Sequence

from pydantic import BaseModel, Field, model_validator

# ビーム幅 5 のときの時間オーバーヘッドの観測帯
TIME_OVERHEAD_BAND_AT_FIVE = (0.15, 0.20)


def _open_unit(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} は (0, 1) の範囲でなければなりません: {value}")


class EscapeBoundInputs(BaseModel):
    """脱出条件の入力

    Attributes:
        p_r (float): 繰り返し継続の確率
        p_n (float): 非繰り返し継続の確率
        delta (float): 対数領域での初期の確率差
        epsilon (float): 許容する失敗確率
        p_escape (float): 求める脱出確率
        horizon (int): 評価するステップ数 L
    """

    p_r: float = 0.77
    p_n: float = 0.5
    delta: float = Field(default=0.0, ge=0.0)
    epsilon: float = 0.05
    p_escape: float = 0.95
    horizon: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _check_probabilities(self) -> "EscapeBoundInputs":
        for name in ("p_r", "p_n", "epsilon", "p_escape"):
            _open_unit(name, getattr(self, name))
        return self


def repetition_recurrence(p0: float, alpha_series: Sequence[float]) -> list[float]:
    """繰り返し確率の漸化式を反復する

    Args:
        p0 (float): 初期値 (0, 1]
        alpha_series (Sequence[float]): 各ステップの増幅係数（1以上）

    Returns:
        list[float]: [p0, p1, ...]（長さ len(alpha_series) + 1、1で頭打ち）
    """
    if not 0.0 < p0 <= 1.0:
        raise ValueError(f"p0 は (0, 1] の範囲でなければなりません: {p0}")
    series = [p0]
    for factor in alpha_series:
        if factor < 1.0:
            raise ValueError(f"増幅係数は 1 以上でなければなりません: {factor}")
        series.append(min(1.0, series[-1] * factor))
    return series


def effective_amplification(trace: Sequence[float]) -> list[float]:
    """モデルの継続確率の推移から、ステップごとの実効的な増幅係数を求める

    正規化し直すモデルでは継続確率が α(r) 倍より小さくしか増えないため、
    漸化式と比べるときはこの比を使います。
    """
    if any(value <= 0.0 for value in trace):
        raise ValueError("継続確率は正でなければなりません")
    return [after / before for before, after in zip(trace, trace[1:])]


def non_repetitive_bound_margin(
    inputs: EscapeBoundInputs,
    p_n_series: Sequence[float],
    p_r_series: Sequence[float],
) -> float:
    """Σ log p_n(j) - (Σ log p_r(j) - δ) を返す（正なら非繰り返し候補が生き残る）"""
    if len(p_n_series) != len(p_r_series):
        raise ValueError(
            f"系列の長さが一致しません: {len(p_n_series)} と {len(p_r_series)}"
        )
    for value in (*p_n_series, *p_r_series):
        if not 0.0 < value <= 1.0:
            raise ValueError(f"確率は (0, 1] の範囲でなければなりません: {value}")
    non_repetitive = sum(math.log(value) for value in p_n_series)
    repetitive = sum(math.log(value) for value in p_r_series)
    return non_repetitive - (repetitive - inputs.delta)


def check_non_repetitive_bound(
    inputs: EscapeBoundInputs,
    p_n_series: Sequence[float],
    p_r_series: Sequence[float],
) -> bool:
    """非繰り返し候補の累積対数スコアが初期の差を超えるかどうか

    Σ log p_n(j) > Σ log p_r(j) - δ を厳密な不等式として評価します。

    Raises:
        ValueError: 系列の長さが一致しない場合
    """
    return non_repetitive_bound_margin(inputs, p_n_series, p_r_series) > 0.0


def beam_width_lower_bound(epsilon: float, p_n: float) -> int:
    """失敗確率を epsilon 以下にするビーム幅の下界 ⌈log(1/ε) / log(1/p_n)⌉"""
    _open_unit("epsilon", epsilon)
    _open_unit("p_n", p_n)
    return math.ceil(math.log(1.0 / epsilon) / math.log(1.0 / p_n))


def min_beam_width(p_r: float, p_escape: float) -> int:
    """脱出確率 p_escape に必要な最小ビーム幅 ⌈log(1 - P) / log(p_r)⌉"""
    _open_unit("p_r", p_r)
    _open_unit("p_escape", p_escape)
    return math.ceil(math.log(1.0 - p_escape) / math.log(p_r))


def predict_overheads(beam_width: int) -> tuple[float, tuple[float, float]]:
    """ビーム幅に対するメモリ倍率と時間オーバーヘッドの帯

    メモリはビーム幅に比例し、時間はビーム幅5での 15〜20% を (beam_width / 5)
    に比例させます。

    Returns:
        tuple[float, tuple[float, float]]: (メモリ倍率, (時間増加率の下限, 上限))
    """
    if beam_width < 1:
        raise ValueError(f"ビーム幅は 1 以上でなければなりません: {beam_width}")
    scale = beam_width / 5.0
    low, high = TIME_OVERHEAD_BAND_AT_FIVE
    return float(beam_width), (low * scale, high * scale)
