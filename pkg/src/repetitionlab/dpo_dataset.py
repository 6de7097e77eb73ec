"""DPO 用の選好データセットの構築

このモジュールは、正しい出力（chosen）に繰り返し単位を 2 のべき乗回
挿入した不正解（rejected）を作り、選好ペアのデータセットを構築する機能を提供します。
主な機能は以下の通りです：

- シード（instruction / input / chosen / 繰り返し単位 / 挿入位置）のデータモデル
- 指定回数の繰り返しを挿入した rejected の生成
- 繰り返し回数ごとの選好ペアの生成と検証
- JSONL 形式でのデータセットの読み書き
"""

import json
from pathlib import Path
from typing import Literal, Sequence

from pydantic import BaseModel, Field, model_validator

DEFAULT_DEGREES = (2, 4, 8, 16)
RECORD_FIELDS = ("instruction", "input", "chosen", "rejected")


class PreferenceSeed(BaseModel):
    """選好ペアの元になるシード

    Attributes:
        instruction (str): 指示文
        input (str): 入力
        chosen (str): 正しい、繰り返しのない出力
        repetition_unit (str): rejected で繰り返す行や文
        insertion_point (int | Literal["end"]): chosen 内の挿入位置（文字数）、または末尾
        anchor (str | None): 指定すると、chosen 内で最初に現れる anchor の直後を挿入位置にする
        line_separator (str): 繰り返し単位の終端に使う区切り
    """

    instruction: str
    input: str = ""
    chosen: str = Field(..., min_length=1)
    repetition_unit: str = Field(..., min_length=1)
    insertion_point: int | Literal["end"] = "end"
    anchor: str | None = None
    line_separator: str = "\n"

    @model_validator(mode="after")
    def _resolve_insertion_point(self) -> "PreferenceSeed":
        if self.anchor is not None:
            position = self.chosen.find(self.anchor)
            if position < 0:
                raise ValueError(f"anchor が chosen に含まれていません: {self.anchor!r}")
            self.insertion_point = position + len(self.anchor)
        if self.insertion_point != "end" and not (
            0 <= self.insertion_point <= len(self.chosen)
        ):
            raise ValueError(
                f"insertion_point {self.insertion_point} が chosen の長さ {len(self.chosen)} を超えています"
            )
        return self

    @property
    def unit_text(self) -> str:
        """区切りで終わるようにした繰り返し単位"""
        unit = self.repetition_unit
        if self.line_separator and not unit.endswith(self.line_separator):
            unit += self.line_separator
        return unit


class PreferencePair(BaseModel):
    """選好ペア

    Attributes:
        instruction (str): 指示文
        input (str): 入力
        chosen (str): 正しい出力
        rejected (str): 繰り返しを含む出力
        degree (int | None): 挿入した繰り返し回数（ファイルから読んだ場合は None）
    """

    instruction: str
    input: str
    chosen: str
    rejected: str
    degree: int | None = None

    def to_record(self) -> dict[str, str]:
        """ファイルに書き出す4つのフィールド"""
        return {name: getattr(self, name) for name in RECORD_FIELDS}


class ValidationReport(BaseModel):
    """選好ペアの検証結果

    Attributes:
        violations (list[str]): 違反の一覧。空なら問題なし
    """

    violations: list[str] = []

    @property
    def ok(self) -> bool:
        return not self.violations


def build_rejected(seed: PreferenceSeed, n: int) -> str:
    """繰り返し単位を n 回続けて挿入した rejected を作る

    Args:
        seed (PreferenceSeed): シード
        n (int): 挿入する回数（1以上）

    Returns:
        str: chosen の挿入位置に単位を n 個連続で挿入した文字列

    Raises:
        ValueError: n が1未満の場合、挿入位置が範囲外の場合
    """
    if n < 1:
        raise ValueError(f"繰り返し回数は 1 以上でなければなりません: {n}")
    chosen = seed.chosen
    position = len(chosen) if seed.insertion_point == "end" else seed.insertion_point
    if not 0 <= position <= len(chosen):
        raise ValueError(f"insertion_point {position} が範囲外です")
    prefix = chosen[:position]
    if position == len(chosen):
        # 最後の行と単位が同じ行にならないよう区切りを補う
        prefix = _terminated(prefix, seed.line_separator)
    return prefix + seed.unit_text * n + chosen[position:]


def _terminated(text: str, separator: str) -> str:
    if separator and text and not text.endswith(separator):
        return text + separator
    return text


def validate_pair(pair: PreferencePair, seed: PreferenceSeed) -> ValidationReport:
    """選好ペアを独立に数え直して検証する

    chosen と rejected に含まれる繰り返し単位を左から重ならないように数え、
    増分が degree に一致するか、chosen がシードのままかを確認します。
    """
    violations = []
    if pair.chosen != seed.chosen:
        violations.append("chosen not preserved: chosen がシードと一致しません")
    unit = seed.unit_text
    # 区切りで終わらない最後の行も1行として数える
    baseline = _count_occurrences(_terminated(seed.chosen, seed.line_separator), unit)
    found = _count_occurrences(_terminated(pair.rejected, seed.line_separator), unit)
    if pair.degree is not None and found - baseline != pair.degree:
        violations.append(
            f"degree mismatch: 期待する増分 {pair.degree}、実際の増分 {found - baseline}"
        )
    return ValidationReport(violations=violations)


def _count_occurrences(text: str, unit: str) -> int:
    count = 0
    position = text.find(unit)
    while position >= 0:
        count += 1
        position = text.find(unit, position + len(unit))
    return count


def generate_pairs(
    seed: PreferenceSeed, degrees: Sequence[int] = DEFAULT_DEGREES
) -> list[PreferencePair]:
    """繰り返し回数ごとに選好ペアを作る

    Args:
        seed (PreferenceSeed): シード
        degrees (Sequence[int]): 繰り返し回数の一覧（既定は 2, 4, 8, 16）

    Returns:
        list[PreferencePair]: degrees の順に並んだペア

    Raises:
        ValueError: degrees が空の場合、または生成したペアが検証に通らない場合
    """
    if not degrees:
        raise ValueError("繰り返し回数の一覧が空です")
    pairs = []
    for degree in degrees:
        pair = PreferencePair(
            instruction=seed.instruction,
            input=seed.input,
            chosen=seed.chosen,
            rejected=build_rejected(seed, degree),
            degree=degree,
        )
        report = validate_pair(pair, seed)
        if not report.ok:
            raise ValueError("; ".join(report.violations))
        pairs.append(pair)
    return pairs


def generate_dataset(
    seeds: Sequence[PreferenceSeed], degrees: Sequence[int] = DEFAULT_DEGREES
) -> list[PreferencePair]:
    """すべてのシードについて、シードの順に選好ペアを作る"""
    return [pair for seed in seeds for pair in generate_pairs(seed, degrees)]


def write_dataset(pairs: Sequence[PreferencePair], path: str | Path) -> None:
    """選好ペアを1行1レコードの JSONL（UTF-8）で保存する

    各レコードは instruction, input, chosen, rejected の4フィールドだけを持ち、
    値の中の改行はエスケープされます。
    """
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", encoding="utf-8", newline="\n") as f:
        for pair in pairs:
            f.write(json.dumps(pair.to_record(), ensure_ascii=False) + "\n")


def read_dataset(path: str | Path) -> list[PreferencePair]:
    """JSONL のデータセットを読み込む

    Raises:
        ValueError: JSON として読めない行、オブジェクトでない行、フィールドの過不足
            （いずれも行番号を含めて報告します）
    """
    pairs = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{line_number}行目: JSON として読めません: {e.msg}") from e
            if not isinstance(record, dict):
                raise ValueError(f"{line_number}行目: レコードがオブジェクトではありません")
            for name in RECORD_FIELDS:
                if name not in record:
                    raise ValueError(f"{line_number}行目: フィールド '{name}' がありません")
                if not isinstance(record[name], str):
                    raise ValueError(f"{line_number}行目: フィールド '{name}' が文字列ではありません")
            extra = sorted(set(record) - set(RECORD_FIELDS))
            if extra:
                raise ValueError(f"{line_number}行目: 不明なフィールド {extra} があります")
            pairs.append(PreferencePair(**record))
    return pairs
