"""自己強化マルコフ言語モデル

このモジュールは、繰り返しが続くほど繰り返しの継続確率が高まる、自己強化型の
マルコフ言語モデルを提供します。
主な機能は以下の通りです：

- 基本遷移行列と強化パラメータ（γ, r_max, α の形）を持つモデルの構築と検証
- 生成状態（トークン列、繰り返し単位、繰り返し回数、継続確率の履歴）の管理
- 繰り返し回数に応じて継続トークンを増幅した次トークン分布の計算
- 再現可能な乱数遷移行列の生成
"""

from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from repetitionlab.repetition_analysis import find_trailing_loop

ROW_SUM_TOLERANCE = 1e-9
STATE_MAX_PERIOD = 64

AlphaForm = Literal["linear", "geometric"]


def _as_readonly(value: object) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    array.setflags(write=False)
    return array


def _check_probabilities(array: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(array)) or array.min() < 0.0 or array.max() > 1.0:
        raise ValueError(f"{what}の要素は [0, 1] の範囲でなければなりません")


class ReinforcedMarkovModel(BaseModel):
    """自己強化マルコフ言語モデル

    Attributes:
        vocab_size (int): 語彙サイズ V
        eos (int): 終端トークンのID
        base_transitions (np.ndarray): V×V の基本遷移行列（行が条件トークン、列が次トークン）
        gamma (float): 繰り返し1回あたりの強化量
        r_max (int): 繰り返し回数の飽和上限
        alpha_form (AlphaForm): 増幅係数の形（linear または geometric）
        start_row (np.ndarray | None): 空の状態で使う開始行。未指定なら EOS の行
    """

    vocab_size: int = Field(..., ge=2)
    eos: int = Field(..., ge=0)
    base_transitions: np.ndarray
    gamma: float = Field(..., ge=0.0)
    r_max: int = Field(..., ge=1)
    alpha_form: AlphaForm = "linear"
    start_row: np.ndarray | None = None

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("base_transitions", mode="before")
    @classmethod
    def _to_matrix(cls, value: object) -> np.ndarray:
        return _as_readonly(value)

    @field_validator("start_row", mode="before")
    @classmethod
    def _to_row(cls, value: object) -> np.ndarray | None:
        return None if value is None else _as_readonly(value)

    @model_validator(mode="after")
    def _check_kernel(self) -> "ReinforcedMarkovModel":
        size = self.vocab_size
        matrix = self.base_transitions
        if matrix.shape != (size, size):
            raise ValueError(
                f"遷移行列の形状 {matrix.shape} が語彙サイズ {size} と一致しません"
            )
        if self.eos >= size:
            raise ValueError(f"EOS {self.eos} が語彙の範囲 [0, {size}) 外です")
        _check_probabilities(matrix, "遷移行列")
        sums = matrix.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
        if bad.size:
            row = int(bad[0])
            raise ValueError(
                f"行 {row} の確率の合計が 1 ではありません: {float(sums[row]):.12g}"
            )
        if self.start_row is not None:
            if self.start_row.shape != (size,):
                raise ValueError(
                    f"開始行の長さ {self.start_row.shape} が語彙サイズ {size} と一致しません"
                )
            _check_probabilities(self.start_row, "開始行")
            total = float(self.start_row.sum())
            if abs(total - 1.0) > ROW_SUM_TOLERANCE:
                raise ValueError(f"開始行の確率の合計が 1 ではありません: {total:.12g}")
        return self

    @property
    def start_distribution(self) -> np.ndarray:
        """空の状態から最初のトークンを出す分布"""
        if self.start_row is not None:
            return self.start_row
        return self.base_transitions[self.eos]


class GenerationState(BaseModel):
    """生成状態

    Attributes:
        tokens (tuple[int, ...]): これまでのトークン列（プロンプトを含む）
        rep_unit (tuple[int, ...]): 現在有効な繰り返し単位。無ければ空
        rep_count (int): 繰り返し単位の連続完了回数 r_t
        run_length (int): 繰り返し単位が周期的に続いている末尾区間の長さ
        p_r_trace (tuple[float, ...]): 各生成ステップで繰り返し継続トークンに割り当てられた確率
    """

    tokens: tuple[int, ...] = ()
    rep_unit: tuple[int, ...] = ()
    rep_count: int = Field(default=0, ge=0)
    run_length: int = Field(default=0, ge=0)
    p_r_trace: tuple[float, ...] = ()

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_unit(self) -> "GenerationState":
        if (self.rep_count == 0) != (len(self.rep_unit) == 0):
            raise ValueError("rep_count が 0 であることと rep_unit が空であることは同値です")
        if len(self.rep_unit) > len(self.tokens):
            raise ValueError("rep_unit がトークン列より長くなっています")
        return self

    @property
    def continuing_token(self) -> int | None:
        """繰り返しを続けるトークン

        有効な単位があれば周期 p だけ前のトークン、無ければ直前のトークン
        （周期1の候補）を返します。空の状態では None です。
        """
        if self.rep_unit:
            return self.tokens[-len(self.rep_unit)]
        if self.tokens:
            return self.tokens[-1]
        return None


def new_model(
    vocab_size: int,
    base_transitions: Sequence[Sequence[float]] | np.ndarray,
    gamma: float,
    r_max: int,
    eos: int,
    *,
    start_row: Sequence[float] | np.ndarray | None = None,
    alpha_form: AlphaForm = "linear",
) -> ReinforcedMarkovModel:
    """検証済みのモデルを作る

    Args:
        vocab_size (int): 語彙サイズ V（2以上）
        base_transitions: V×V の行確率行列
        gamma (float): 強化量（0以上）
        r_max (int): 飽和上限（1以上）
        eos (int): 終端トークン
        start_row: 開始行（省略時は EOS の行）
        alpha_form (AlphaForm): 増幅係数の形

    Returns:
        ReinforcedMarkovModel: 構築したモデル

    Raises:
        ValueError: 形状の不一致、確率の合計が1でない行（行番号と合計を報告）、
            負の gamma、1未満の r_max
    """
    return ReinforcedMarkovModel(
        vocab_size=vocab_size,
        eos=eos,
        base_transitions=base_transitions,
        gamma=gamma,
        r_max=r_max,
        alpha_form=alpha_form,
        start_row=start_row,
    )


def random_model(
    vocab_size: int,
    seed: int,
    concentration: float,
    gamma: float,
    r_max: int,
    eos: int = 0,
    alpha_form: AlphaForm = "linear",
) -> ReinforcedMarkovModel:
    """ディリクレ分布から行を引いた再現可能なモデルを作る

    concentration が小さいほど各行は少数のトークンに偏ります。
    """
    if concentration <= 0:
        raise ValueError(f"concentration は正でなければなりません: {concentration}")
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.full(vocab_size, concentration), size=vocab_size)
    return new_model(vocab_size, rows, gamma, r_max, eos, alpha_form=alpha_form)


def alpha(model: ReinforcedMarkovModel, r: int) -> float:
    """繰り返し回数 r に対する増幅係数

    linear では 1 + γ·min(r, r_max)、geometric では (1 + γ)^min(r, r_max) です。
    """
    if r < 0:
        raise ValueError(f"繰り返し回数は 0 以上でなければなりません: {r}")
    capped = min(r, model.r_max)
    if model.alpha_form == "geometric":
        return (1.0 + model.gamma) ** capped
    return 1.0 + model.gamma * capped


def next_distribution(
    model: ReinforcedMarkovModel, state: GenerationState
) -> np.ndarray:
    """次トークンの確率分布

    直前トークンの基本行に対して、継続トークンの確率を alpha(r) 倍して
    正規化し直します。rep_count が 0 のときは基本行そのものを返します。

    Note:
        返り値は読み取り専用の配列です。
    """
    if state.tokens:
        row = model.base_transitions[state.tokens[-1]]
    else:
        row = model.start_distribution
    if state.rep_count == 0:
        return row
    boost = alpha(model, state.rep_count)
    if boost == 1.0:
        return row
    boosted = row.copy()
    boosted[state.continuing_token] *= boost
    boosted /= boosted.sum()
    return boosted


def _check_token(model: ReinforcedMarkovModel, token: int) -> int:
    token = int(token)
    if not 0 <= token < model.vocab_size:
        raise ValueError(f"トークン {token} が語彙の範囲 [0, {model.vocab_size}) 外です")
    return token


def _advance(
    state: GenerationState, token: int, trace: tuple[float, ...]
) -> GenerationState:
    tokens = state.tokens + (token,)
    unit = state.rep_unit
    if unit and token == state.tokens[-len(unit)]:
        run = state.run_length + 1
        return GenerationState(
            tokens=tokens,
            rep_unit=unit,
            rep_count=run // len(unit),
            run_length=run,
            p_r_trace=trace,
        )
    loop = find_trailing_loop(tokens, 1, STATE_MAX_PERIOD, 2)
    if loop is None:
        return GenerationState(tokens=tokens, p_r_trace=trace)
    period, repeats, onset = loop
    return GenerationState(
        tokens=tokens,
        rep_unit=tokens[onset : onset + period],
        rep_count=repeats,
        run_length=len(tokens) - onset,
        p_r_trace=trace,
    )


def initial_state(model: ReinforcedMarkovModel, prompt: Sequence[int]) -> GenerationState:
    """プロンプトを読み込んだ状態を作る（p_r_trace には記録しない）

    Raises:
        ValueError: 語彙の範囲外のトークンが含まれる場合
    """
    state = GenerationState()
    for token in prompt:
        state = _advance(state, _check_token(model, token), state.p_r_trace)
    return state


def step(
    state: GenerationState,
    token: int,
    model: ReinforcedMarkovModel,
    dist: np.ndarray | None = None,
) -> GenerationState:
    """トークンを1つ追加した新しい状態を返す

    Args:
        state (GenerationState): 現在の状態
        token (int): 追加するトークン
        model (ReinforcedMarkovModel): モデル
        dist (np.ndarray | None): state での next_distribution（計算済みなら渡す）

    Returns:
        GenerationState: 更新後の状態。繰り返し単位を延長するトークンなら
        回数を増やし、そうでなければ末尾の最小周期を検出し直します。
        p_r_trace には state における継続トークンの確率を追加します。

    Raises:
        ValueError: 語彙の範囲外のトークン
    """
    token = _check_token(model, token)
    continuing = state.continuing_token
    if continuing is None:
        mass = 0.0
    else:
        if dist is None:
            dist = next_distribution(model, state)
        mass = float(dist[continuing])
    return _advance(state, token, state.p_r_trace + (mass,))
