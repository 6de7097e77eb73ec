"""デコード戦略

このモジュールは、next_distribution を持つモデルに対するデコード戦略を提供します。
主な機能は以下の通りです：

- 貪欲デコード（同確率なら最小のトークンID）
- early_stopping の3つのモード（True / False / "never"）を持つビームサーチ
- 出現済みトークンへの presence penalty
- 温度、top-k、top-p によるサンプリング
"""

import logging
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from repetitionlab.markov_lm import (
    GenerationState,
    ReinforcedMarkovModel,
    initial_state,
    next_distribution,
    step,
)
from repetitionlab.schemas import DecoderConfig

logger = logging.getLogger(__name__)

Termination = Literal["eos", "max_tokens", "early_stop"]

__all__ = [
    "DecodeResult",
    "DecoderConfig",
    "Hypothesis",
    "apply_presence_penalty",
    "beam_search_decode",
    "decode",
    "greedy_decode",
    "sample_decode",
]


class Hypothesis(BaseModel):
    """候補系列

    Attributes:
        tokens (tuple[int, ...]): 生成したトークン列（プロンプトを含まない）
        score (float): 各ステップの（ペナルティ適用後の）対数確率の和
        finished (bool): EOS を出力したかどうか
        state (GenerationState | None): この候補の生成状態
    """

    tokens: tuple[int, ...]
    score: float
    finished: bool
    state: GenerationState | None = Field(default=None, repr=False)

    model_config = ConfigDict(frozen=True)


class DecodeResult(BaseModel):
    """デコード結果

    Attributes:
        best (Hypothesis): 選ばれた候補
        all_finished (list[Hypothesis]): 完了した候補（スコア順、best_of 個以下）
        steps_taken (int): 実行したデコードステップ数
        termination (Termination): 終了理由
        p_r_trace (tuple[float, ...]): 選ばれた経路の継続確率の推移
        prompt (tuple[int, ...]): プロンプト
        evaluations (int): next_distribution の評価回数
    """

    best: Hypothesis
    all_finished: list[Hypothesis]
    steps_taken: int = Field(..., ge=0)
    termination: Termination
    p_r_trace: tuple[float, ...]
    prompt: tuple[int, ...] = ()
    evaluations: int = Field(default=0, ge=0)

    model_config = ConfigDict(frozen=True)


def _rank_key(hypothesis: Hypothesis) -> tuple[float, int, tuple[int, ...]]:
    # スコアが同じなら短い方、次に辞書順で小さい方
    return (-hypothesis.score, len(hypothesis.tokens), hypothesis.tokens)


def _log(dist: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(dist)


def _logsumexp(values: np.ndarray) -> float:
    peak = float(np.max(values))
    if not np.isfinite(peak):
        return peak
    return peak + float(np.log(np.sum(np.exp(values - peak))))


def apply_presence_penalty(
    log_probs: np.ndarray, generated_token_set: set[int], penalty: float
) -> np.ndarray:
    """出現済みトークンの対数確率から penalty を引いて正規化し直す

    Args:
        log_probs (np.ndarray): 長さ V の対数確率
        generated_token_set (set[int]): 生成済みのトークン集合
        penalty (float): ペナルティ（出現回数によらず一律）

    Returns:
        np.ndarray: 調整後の対数確率。penalty が 0 なら入力をそのまま返します
    """
    if penalty == 0.0 or not generated_token_set:
        return log_probs
    adjusted = np.array(log_probs, dtype=np.float64)
    adjusted[list(generated_token_set)] -= penalty
    return adjusted - _logsumexp(adjusted)


def _check_prompt(model: ReinforcedMarkovModel, prompt: Sequence[int]) -> tuple[int, ...]:
    tokens = tuple(int(token) for token in prompt)
    for token in tokens:
        if not 0 <= token < model.vocab_size:
            raise ValueError(
                f"プロンプトのトークン {token} が語彙の範囲 [0, {model.vocab_size}) 外です"
            )
    return tokens


def greedy_decode(
    model: ReinforcedMarkovModel,
    prompt: Sequence[int],
    max_tokens: int,
    presence_penalty: float = 0.0,
) -> DecodeResult:
    """貪欲デコード

    各ステップで確率最大のトークン（同確率なら最小ID）を選び、EOS か
    max_tokens で停止します。

    Args:
        model (ReinforcedMarkovModel): モデル
        prompt (Sequence[int]): プロンプト
        max_tokens (int): 生成トークン数の上限
        presence_penalty (float): 出現済みトークンへのペナルティ

    Returns:
        DecodeResult: デコード結果

    Raises:
        ValueError: プロンプトのトークンが不正な場合、max_tokens が1未満の場合
    """
    prompt_tokens = _check_prompt(model, prompt)
    if max_tokens < 1:
        raise ValueError(f"max_tokens は 1 以上でなければなりません: {max_tokens}")
    state = initial_state(model, prompt_tokens)
    generated: list[int] = []
    seen: set[int] = set()
    score = 0.0
    termination: Termination = "max_tokens"
    for _ in range(max_tokens):
        dist = next_distribution(model, state)
        log_probs = apply_presence_penalty(_log(dist), seen, presence_penalty)
        token = int(np.argmax(log_probs))
        score += float(log_probs[token])
        state = step(state, token, model, dist)
        generated.append(token)
        seen.add(token)
        if token == model.eos:
            termination = "eos"
            break
    finished = termination == "eos"
    best = Hypothesis(
        tokens=tuple(generated), score=score, finished=finished, state=state
    )
    return DecodeResult(
        best=best,
        all_finished=[best] if finished else [],
        steps_taken=len(generated),
        termination=termination,
        p_r_trace=state.p_r_trace,
        prompt=prompt_tokens,
        evaluations=len(generated),
    )


def beam_search_decode(
    model: ReinforcedMarkovModel, prompt: Sequence[int], config: DecoderConfig
) -> DecodeResult:
    """ビームサーチ

    各ステップで生存中の候補をすべて確率正のトークンで展開し、
    (スコア降順, 親系列の辞書順, トークンID) で順位を付けます。EOS で終わる展開は
    順位が best_of 未満のときだけ完了集合に入り、それ以外の展開で生存候補を
    best_of 個まで埋めます。完了集合は上位 best_of 個を保持します。

    early_stopping のモード:

    - True: 完了集合が best_of 個になった時点で終了し、最良の完了候補を返す
    - False: 生存候補の現在スコア（以後のスコアの上界）が最良の完了候補を
      上回れなくなった時点で終了する
    - "never": すべての候補が完了するか max_tokens まで続ける

    max_tokens に達した場合はどのモードでも完了候補と生存候補のうち最良のものを返します。

    Raises:
        ValueError: use_beam_search が偽の場合、プロンプトが不正な場合
    """
    if not config.use_beam_search:
        raise ValueError("beam_search_decode には use_beam_search=True の設定が必要です")
    prompt_tokens = _check_prompt(model, prompt)
    width = config.best_of
    mode = config.early_stopping
    penalty = config.presence_penalty
    live = [
        Hypothesis(
            tokens=(),
            score=0.0,
            finished=False,
            state=initial_state(model, prompt_tokens),
        )
    ]
    finished: list[Hypothesis] = []
    evaluations = 0
    steps = 0
    termination: Termination = "max_tokens"

    while steps < config.max_tokens:
        steps += 1
        order = sorted(range(len(live)), key=lambda index: live[index].tokens)
        lex_rank = {index: rank for rank, index in enumerate(order)}
        candidates = []
        dists = []
        for index, parent in enumerate(live):
            dist = next_distribution(model, parent.state)
            evaluations += 1
            dists.append(dist)
            log_probs = _log(dist)
            if penalty:
                log_probs = apply_presence_penalty(log_probs, set(parent.tokens), penalty)
            for token in np.flatnonzero(dist > 0.0):
                score = parent.score + float(log_probs[token])
                candidates.append((-score, lex_rank[index], int(token), index))
        candidates.sort()

        next_live: list[Hypothesis] = []
        for rank, (neg_score, _, token, index) in enumerate(candidates):
            if rank >= width and len(next_live) >= width:
                break
            parent = live[index]
            if token == model.eos:
                if rank < width:
                    state = step(parent.state, token, model, dists[index])
                    finished.append(
                        Hypothesis(
                            tokens=parent.tokens + (token,),
                            score=-neg_score,
                            finished=True,
                            state=state,
                        )
                    )
                continue
            if len(next_live) < width:
                state = step(parent.state, token, model, dists[index])
                next_live.append(
                    Hypothesis(
                        tokens=parent.tokens + (token,),
                        score=-neg_score,
                        finished=False,
                        state=state,
                    )
                )
        finished = sorted(finished, key=_rank_key)[:width]
        live = next_live

        if mode is True and len(finished) >= width:
            termination = "early_stop"
            break
        if mode is False and finished and live and live[0].score <= finished[0].score:
            termination = "early_stop"
            break
        if not live:
            termination = "eos"
            break

    if termination == "max_tokens":
        best = min(finished + live, key=_rank_key)
    else:
        best = finished[0]
    logger.debug(
        "beam search finished: termination=%s steps=%d score=%.6f",
        termination,
        steps,
        best.score,
    )
    return DecodeResult(
        best=best,
        all_finished=finished,
        steps_taken=steps,
        termination=termination,
        p_r_trace=best.state.p_r_trace,
        prompt=prompt_tokens,
        evaluations=evaluations,
    )


def _truncate_top_k(probs: np.ndarray, top_k: int) -> np.ndarray:
    if top_k == -1 or top_k >= probs.size:
        return probs
    keep = np.argsort(-probs, kind="stable")[:top_k]
    truncated = np.zeros_like(probs)
    truncated[keep] = probs[keep]
    return truncated / truncated.sum()


def _truncate_top_p(probs: np.ndarray, top_p: float) -> np.ndarray:
    if top_p >= 1.0:
        return probs
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cutoff = int(np.searchsorted(cumulative, top_p)) + 1
    keep = order[:cutoff]
    truncated = np.zeros_like(probs)
    truncated[keep] = probs[keep]
    return truncated / truncated.sum()


def sample_decode(
    model: ReinforcedMarkovModel, prompt: Sequence[int], config: DecoderConfig
) -> DecodeResult:
    """サンプリングによるデコード

    presence penalty、温度、top-k、top-p の順に適用してから、シード付きの
    乱数生成器でトークンを引きます。temperature が 0 なら貪欲デコードと同じです。
    スコアにはペナルティ適用後・温度適用前の対数確率を積算します。

    Raises:
        ValueError: use_beam_search が真の場合、プロンプトが不正な場合
    """
    if config.use_beam_search:
        raise ValueError("sample_decode は use_beam_search=False の設定で使います")
    if config.temperature == 0.0:
        return greedy_decode(model, prompt, config.max_tokens, config.presence_penalty)
    prompt_tokens = _check_prompt(model, prompt)
    rng = np.random.default_rng(config.seed)
    state = initial_state(model, prompt_tokens)
    generated: list[int] = []
    seen: set[int] = set()
    score = 0.0
    termination: Termination = "max_tokens"
    for _ in range(config.max_tokens):
        dist = next_distribution(model, state)
        log_probs = apply_presence_penalty(_log(dist), seen, config.presence_penalty)
        scaled = log_probs / config.temperature
        probs = np.exp(scaled - np.max(scaled))
        probs /= probs.sum()
        probs = _truncate_top_p(_truncate_top_k(probs, config.top_k), config.top_p)
        token = int(rng.choice(probs.size, p=probs))
        score += float(log_probs[token])
        state = step(state, token, model, dist)
        generated.append(token)
        seen.add(token)
        if token == model.eos:
            termination = "eos"
            break
    finished = termination == "eos"
    best = Hypothesis(
        tokens=tuple(generated), score=score, finished=finished, state=state
    )
    return DecodeResult(
        best=best,
        all_finished=[best] if finished else [],
        steps_taken=len(generated),
        termination=termination,
        p_r_trace=state.p_r_trace,
        prompt=prompt_tokens,
        evaluations=len(generated),
    )


def decode(
    model: ReinforcedMarkovModel, prompt: Sequence[int], config: DecoderConfig
) -> DecodeResult:
    """設定に応じてビームサーチかサンプリング（貪欲を含む）を実行する"""
    if config.use_beam_search:
        return beam_search_decode(model, prompt, config)
    return sample_decode(model, prompt, config)
