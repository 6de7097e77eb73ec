"""ループ罠カーネル

このモジュールは、繰り返しに陥りやすい遷移行列を試行ごとに生成する機能を提供します。
主な機能は以下の通りです：

- 入口の偏りとループ継続の重みを試行ごとに引く罠カーネル族
- 各分岐が独立に罠になる2分岐カーネル（ビーム幅の下界の検証用）

罠カーネルの語彙は次の通りです（周期 p のとき V = p + 6）：

- 0: EOS、1: プロンプトトークン S
- 2 .. p+1: 繰り返し単位（先頭が弱い分岐点 W、残りは決定的に次へ進む）
- p+2: 出口 A、p+3 / p+4: 脇道 Z / Y、p+5: 正常経路 C
"""

from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from repetitionlab.markov_lm import AlphaForm, ReinforcedMarkovModel, new_model

EOS = 0
START = 1
LOOP_START = 2


class TrialInstance(BaseModel):
    """1試行分のモデルとプロンプト

    Attributes:
        model (ReinforcedMarkovModel): 試行で使うモデル
        prompt (tuple[int, ...]): プロンプト
        loop_unit (tuple[int, ...] | None): 構成上わかっている繰り返し単位
        loop_onset (int | None): 生成トークン列でループが始まる位置
    """

    model: ReinforcedMarkovModel
    prompt: tuple[int, ...]
    loop_unit: tuple[int, ...] | None = None
    loop_onset: int | None = None

    model_config = ConfigDict(frozen=True)


class TrapFamily(BaseModel):
    """ループ罠カーネル族

    S の行は W に entry_mass·β、C に entry_mass·(1-β)、Z に残りを割り当てます。
    W の行は単位の次のトークンに q、A に 1-q-loop_leak、Z に loop_leak を割り当てます。
    A と C の行は EOS に exit_eos、Z に exit_side、Y に残りを割り当てます。
    β と q は試行ごとに一様分布から引きます。

    Attributes:
        period (int): 繰り返し単位の長さ
        entry_bias_low (float): β の下限
        entry_bias_high (float): β の上限
        entry_mass (float): S の行で W と C に配る質量
        loop_weight_low (float): q の下限
        loop_weight_high (float): q の上限
        loop_leak (float): W から脇道 Z への確率
        exit_eos (float): A と C から EOS への確率
        exit_side (float): A と C から Z への確率
    """

    period: int = Field(default=48, ge=1)
    entry_bias_low: float = Field(default=0.368, gt=0.0, lt=1.0)
    entry_bias_high: float = Field(default=0.95, gt=0.0, lt=1.0)
    entry_mass: float = Field(default=0.96, gt=0.0, le=1.0)
    loop_weight_low: float = Field(default=0.5, gt=0.0, lt=1.0)
    loop_weight_high: float = Field(default=0.75, gt=0.0, lt=1.0)
    loop_leak: float = Field(default=0.02, ge=0.0, lt=1.0)
    exit_eos: float = Field(default=0.35, gt=0.0, lt=1.0)
    exit_side: float = Field(default=0.33, ge=0.0, lt=1.0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_ranges(self) -> "TrapFamily":
        if self.entry_bias_low > self.entry_bias_high:
            raise ValueError("entry_bias_low が entry_bias_high を超えています")
        if self.loop_weight_low > self.loop_weight_high:
            raise ValueError("loop_weight_low が loop_weight_high を超えています")
        if self.loop_weight_high + self.loop_leak >= 1.0:
            raise ValueError("loop_weight_high + loop_leak は 1 未満でなければなりません")
        rest = 1.0 - self.exit_eos - self.exit_side
        if rest < 0.0 or self.exit_eos <= max(self.exit_side, rest):
            raise ValueError("exit_eos は出口の行で最大の確率でなければなりません")
        return self

    @property
    def vocab_size(self) -> int:
        return self.period + 6

    @property
    def greedy_entry_probability(self) -> float:
        """貪欲デコードがループに入る確率 P(β > 1/2)"""
        low, high = self.entry_bias_low, self.entry_bias_high
        if high == low:
            return 1.0 if low > 0.5 else 0.0
        return min(1.0, max(0.0, (high - 0.5) / (high - low)))

    @property
    def loop_unit(self) -> tuple[int, ...]:
        return tuple(range(LOOP_START, LOOP_START + self.period))

    @property
    def exit_token(self) -> int:
        return self.period + 2

    @property
    def side_token(self) -> int:
        return self.period + 3

    @property
    def side_alt_token(self) -> int:
        return self.period + 4

    @property
    def clean_token(self) -> int:
        return self.period + 5

    def kernel(self, entry_bias: float, loop_weight: float) -> np.ndarray:
        """β と q を固定した遷移行列"""
        size = self.vocab_size
        unit = self.loop_unit
        matrix = np.zeros((size, size))
        matrix[EOS, EOS] = 1.0
        matrix[START, unit[0]] = self.entry_mass * entry_bias
        matrix[START, self.clean_token] = self.entry_mass * (1.0 - entry_bias)
        matrix[START, self.side_token] += 1.0 - self.entry_mass
        matrix[unit[0], unit[1 % self.period]] = loop_weight
        matrix[unit[0], self.exit_token] = 1.0 - loop_weight - self.loop_leak
        matrix[unit[0], self.side_token] += self.loop_leak
        for position in range(1, self.period):
            matrix[unit[position], unit[(position + 1) % self.period]] = 1.0
        for row in (self.exit_token, self.clean_token):
            matrix[row, EOS] = self.exit_eos
            matrix[row, self.side_token] = self.exit_side
            matrix[row, self.side_alt_token] = 1.0 - self.exit_eos - self.exit_side
        matrix[self.side_token, EOS] = 1.0
        matrix[self.side_alt_token, EOS] = 1.0
        return matrix

    def instance(
        self,
        entry_bias: float,
        loop_weight: float,
        gamma: float = 0.15,
        r_max: int = 10,
        alpha_form: AlphaForm = "linear",
    ) -> TrialInstance:
        """β と q を固定した1試行分のモデル

        Returns:
            TrialInstance: モデル、プロンプト [S]、繰り返し単位、ループ開始位置 0
        """
        start_row = np.zeros(self.vocab_size)
        start_row[START] = 1.0
        model = new_model(
            self.vocab_size,
            self.kernel(entry_bias, loop_weight),
            gamma,
            r_max,
            EOS,
            start_row=start_row,
            alpha_form=alpha_form,
        )
        return TrialInstance(
            model=model, prompt=(START,), loop_unit=self.loop_unit, loop_onset=0
        )

    def sample(
        self,
        rng: np.random.Generator,
        gamma: float,
        r_max: int,
        alpha_form: AlphaForm = "linear",
    ) -> TrialInstance:
        """β と q を引いて1試行分のモデルを作る

        Args:
            rng (np.random.Generator): 試行ごとの乱数生成器（β、q の順に引きます）
            gamma (float): 強化量
            r_max (int): 飽和上限
            alpha_form (AlphaForm): 増幅係数の形
        """
        entry_bias = float(rng.uniform(self.entry_bias_low, self.entry_bias_high))
        loop_weight = float(rng.uniform(self.loop_weight_low, self.loop_weight_high))
        return self.instance(entry_bias, loop_weight, gamma, r_max, alpha_form)


def build_branch_kernel(
    trapped: Sequence[bool], gamma: float = 0.15, r_max: int = 10
) -> TrialInstance:
    """各分岐が罠か出口かを指定した2分岐カーネル

    S から m 個の分岐トークンへ等確率で進み、罠の分岐はループトークン L
    （L から L へ確率1）へ、それ以外は EOS へ進みます。

    Args:
        trapped (Sequence[bool]): 分岐ごとに罠かどうか
        gamma (float): 強化量
        r_max (int): 飽和上限

    Returns:
        TrialInstance: モデル、プロンプト [S]、繰り返し単位 [L]
    """
    branches = len(trapped)
    if branches < 1:
        raise ValueError("分岐が1つ以上必要です")
    loop_token = 2
    size = branches + 3
    matrix = np.zeros((size, size))
    matrix[EOS, EOS] = 1.0
    matrix[START, 3:] = 1.0 / branches
    matrix[loop_token, loop_token] = 1.0
    for offset, is_trapped in enumerate(trapped):
        matrix[3 + offset, loop_token if is_trapped else EOS] = 1.0
    start_row = np.zeros(size)
    start_row[START] = 1.0
    model = new_model(size, matrix, gamma, r_max, EOS, start_row=start_row)
    return TrialInstance(
        model=model, prompt=(START,), loop_unit=(loop_token,), loop_onset=1
    )
