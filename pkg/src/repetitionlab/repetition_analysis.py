"""繰り返しループの検出と指標の計算

このモジュールは、トークン列の末尾に現れる繰り返しループを検出し、
繰り返し率や脱出時間などの指標を計算する機能を提供します。
主な機能は以下の通りです：

- 末尾の最小周期の繰り返し区間の検出
- デコード結果の集合に対する繰り返し率の計算
- ループ開始位置からの脱出時間の計算
- 繰り返し単位を強制的に与え続けたときの継続確率の推移
"""

from typing import TYPE_CHECKING, Literal, Sequence

from repetitionlab.schemas import DetectorParams, RepetitionReport

if TYPE_CHECKING:
    from repetitionlab.decoders import DecodeResult
    from repetitionlab.markov_lm import ReinforcedMarkovModel

NEVER: Literal["never"] = "never"


def trailing_run_length(tokens: Sequence[int], period: int) -> int:
    """末尾から周期 period で続いている区間の長さ

    tokens[i] == tokens[i + period] が成り立ち続ける最長の末尾区間の長さを返します。
    トークン列が period より短い場合は列の長さです。
    """
    j = len(tokens) - period - 1
    if j < 0:
        return len(tokens)
    while j >= 0 and tokens[j] == tokens[j + period]:
        j -= 1
    return len(tokens) - 1 - j


def find_trailing_loop(
    tokens: Sequence[int], min_period: int, max_period: int, min_repeats: int
) -> tuple[int, int, int] | None:
    """末尾の繰り返しを探す

    Args:
        tokens (Sequence[int]): トークン列
        min_period (int): 最小周期
        max_period (int): 最大周期
        min_repeats (int): 必要な連続回数

    Returns:
        tuple[int, int, int] | None: (周期, 連続回数, 開始位置)。
        条件を満たす最小の周期を選び、開始位置は周期的な区間の先頭です。
        見つからなければ None
    """
    n = len(tokens)
    if n == 0:
        return None
    upper = min(max_period, n // max(min_repeats, 1))
    for period in range(min_period, upper + 1):
        if min_repeats > 1 and tokens[-1] != tokens[-1 - period]:
            continue
        run = trailing_run_length(tokens, period)
        repeats = run // period
        if repeats >= min_repeats:
            return period, repeats, n - run
    return None


def detect_repetition(
    tokens: Sequence[int],
    min_period: int = 1,
    max_period: int = 64,
    min_repeats: int = 4,
) -> RepetitionReport:
    """末尾の繰り返しを検出する

    Args:
        tokens (Sequence[int]): トークン列
        min_period (int): 最小周期
        max_period (int): 最大周期（列の長さ / min_repeats を超える分は探索しません）
        min_repeats (int): 必要な連続回数

    Returns:
        RepetitionReport: 検出結果。空の列は未検出です
    """
    if min_period < 1:
        raise ValueError(f"min_period は 1 以上でなければなりません: {min_period}")
    loop = find_trailing_loop(tokens, min_period, max_period, min_repeats)
    if loop is None:
        return RepetitionReport(
            detected=False, min_repeats=min_repeats, max_period=max_period
        )
    period, repeats, onset = loop
    return RepetitionReport(
        detected=True,
        period=period,
        unit=tuple(tokens[onset : onset + period]),
        repeats=repeats,
        onset=onset,
        min_repeats=min_repeats,
        max_period=max_period,
    )


def is_repetitive(result: "DecodeResult", params: DetectorParams) -> bool:
    """デコード結果が繰り返しに陥っているかどうか

    生成トークン列で繰り返しが検出された場合に加え、max_tokens で打ち切られた
    時点で末尾が2回以上の繰り返しの中にある場合も繰り返しとみなします。
    """
    tokens = result.best.tokens
    if find_trailing_loop(tokens, params.min_period, params.max_period, params.min_repeats):
        return True
    return (
        result.termination == "max_tokens"
        and find_trailing_loop(tokens, params.min_period, params.max_period, 2)
        is not None
    )


def repetition_rate(
    results: Sequence["DecodeResult"], params: DetectorParams | None = None
) -> float:
    """繰り返しに陥った結果の割合

    Raises:
        ValueError: results が空の場合
    """
    if not results:
        raise ValueError("結果が空です")
    params = params or DetectorParams()
    trapped = sum(1 for result in results if is_repetitive(result, params))
    return trapped / len(results)


def escape_time(
    result: "DecodeResult", loop_onset: int, unit: Sequence[int]
) -> int | Literal["never"]:
    """ループ開始位置から、選ばれた経路が繰り返し単位を外れるまでのステップ数

    Args:
        result (DecodeResult): デコード結果
        loop_onset (int): 生成トークン列におけるループの開始位置
        unit (Sequence[int]): 繰り返し単位

    Returns:
        int | Literal["never"]: 単位から外れたステップ数。ループに入らなかった
        経路は 0、ループ内のまま max_tokens に達した場合は "never"

    Raises:
        ValueError: 開始位置が生成トークン列の外にある場合、または単位が空の場合
    """
    generated = result.best.tokens
    if not 0 <= loop_onset <= len(generated):
        raise ValueError(
            f"ループ開始位置 {loop_onset} が生成トークン列の長さ {len(generated)} を超えています"
        )
    if not unit:
        raise ValueError("繰り返し単位が空です")
    period = len(unit)
    steps = 0
    for token in generated[loop_onset:]:
        if token != unit[steps % period]:
            return steps
        steps += 1
    if steps and result.termination == "max_tokens":
        return NEVER
    return steps


def self_reinforcement_curve(
    model: "ReinforcedMarkovModel", unit: Sequence[int], n: int
) -> list[float]:
    """繰り返し単位を与え続けたときの1周ごとの継続確率

    単位を1回読み込んだ状態から始め、各周で単位の各トークンに割り当てられた
    確率の積を記録します。

    Args:
        model (ReinforcedMarkovModel): モデル
        unit (Sequence[int]): 繰り返し単位
        n (int): 周回数

    Returns:
        list[float]: 長さ n の系列
    """
    from repetitionlab.markov_lm import initial_state, next_distribution, step

    if n < 1:
        raise ValueError(f"n は 1 以上でなければなりません: {n}")
    if not unit:
        raise ValueError("繰り返し単位が空です")
    state = initial_state(model, unit)
    series = []
    for _ in range(n):
        mass = 1.0
        for token in unit:
            dist = next_distribution(model, state)
            mass *= float(dist[token])
            state = step(state, token, model, dist)
        series.append(mass)
    return series
