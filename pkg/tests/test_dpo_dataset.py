import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from repetitionlab.config import load_seeds_config
from repetitionlab.dpo_dataset import (
    PreferencePair,
    PreferenceSeed,
    build_rejected,
    generate_dataset,
    generate_pairs,
    read_dataset,
    validate_pair,
    write_dataset,
)


@pytest.fixture
def rule_seed() -> PreferenceSeed:
    """業務ルールの1行を繰り返すシード"""
    return PreferenceSeed(
        instruction="请从代码片段中摘要出该段代码的主要功能,并描述其主要业务逻辑。",
        input="<这是一段代码>....",
        chosen="规则如下:\n1. 设置标志为已更新。\n2. 设置有效标志为使用。",
        repetition_unit="设置标志为已更新。",
        anchor="1. 设置标志为已更新。\n",
    )


def test_build_rejected_at_end():
    """末尾に単位を2回挿入する例をテスト"""
    seed = PreferenceSeed(instruction="i", chosen="A\nB\n", repetition_unit="B")
    assert build_rejected(seed, 2) == "A\nB\nB\nB\n"


def test_build_rejected_at_end_without_trailing_separator():
    """chosen が区切りで終わらない場合も、単位が最後の行と同じ行にならないことをテスト"""
    seed = PreferenceSeed(instruction="i", chosen="A\nB", repetition_unit="B")
    rejected = build_rejected(seed, 2)
    assert rejected == "A\nB\nB\nB\n"
    assert rejected.splitlines() == ["A", "B", "B", "B"]
    # 検証
    pair = PreferencePair(
        instruction="i", input="", chosen=seed.chosen, rejected=rejected, degree=2
    )
    assert validate_pair(pair, seed).ok


def test_build_rejected_at_end_after_other_line():
    seed = PreferenceSeed(instruction="i", chosen="A\nC", repetition_unit="B")
    assert build_rejected(seed, 1) == "A\nC\nB\n"


def test_build_rejected_at_position():
    """位置を指定して挿入する例をテスト"""
    seed = PreferenceSeed(
        instruction="i",
        chosen="start\nstop\n",
        repetition_unit="endif",
        insertion_point=6,
    )
    assert build_rejected(seed, 3) == "start\nendif\nendif\nendif\nstop\n"


def test_build_rejected_with_anchor(rule_seed):
    """anchor の直後に挿入することをテスト"""
    rejected = build_rejected(rule_seed, 2)
    assert rejected == (
        "规则如下:\n1. 设置标志为已更新。\n"
        "设置标志为已更新。\n设置标志为已更新。\n"
        "2. 设置有效标志为使用。"
    )


def test_build_rejected_invalid(rule_seed):
    with pytest.raises(ValueError):
        build_rejected(rule_seed, 0)
    with pytest.raises(ValueError):
        PreferenceSeed(instruction="i", chosen="abc", repetition_unit="x", insertion_point=4)
    with pytest.raises(ValueError):
        PreferenceSeed(instruction="i", chosen="abc", repetition_unit="x", anchor="zzz")
    with pytest.raises(ValueError):
        PreferenceSeed(instruction="i", chosen="abc", repetition_unit="")


def test_generate_pairs_degrees(rule_seed):
    """2, 4, 8, 16 回の繰り返しを持つ4つのペアができることをテスト"""
    pairs = generate_pairs(rule_seed)
    # 検証
    assert [pair.degree for pair in pairs] == [2, 4, 8, 16]
    for pair in pairs:
        assert pair.chosen == rule_seed.chosen
        assert pair.instruction == rule_seed.instruction
        assert pair.input == rule_seed.input
        assert pair.rejected.count(rule_seed.unit_text) == 1 + pair.degree
        assert validate_pair(pair, rule_seed).ok


def test_generate_pairs_rejected_grows_with_degree(rule_seed):
    """繰り返し回数が多いほど rejected が長くなることをテスト"""
    lengths = [len(pair.rejected) for pair in generate_pairs(rule_seed)]
    assert lengths == sorted(lengths)
    assert len(set(lengths)) == len(lengths)


def test_generate_pairs_empty_degrees(rule_seed):
    with pytest.raises(ValueError):
        generate_pairs(rule_seed, [])


def test_validate_pair_reports_violations(rule_seed):
    """chosen の改変と回数の不一致を検出することをテスト"""
    pair = PreferencePair(
        instruction=rule_seed.instruction,
        input=rule_seed.input,
        chosen=rule_seed.chosen + "!",
        rejected=build_rejected(rule_seed, 3),
        degree=4,
    )
    report = validate_pair(pair, rule_seed)
    assert not report.ok
    assert report.violations[0].startswith("chosen not preserved")
    assert report.violations[1].startswith("degree mismatch")


def test_packaged_seeds_produce_twelve_pairs():
    """同梱の3つのシードから12個のペアができ、すべて検証に通ることをテスト"""
    config = load_seeds_config("seeds")
    pairs = generate_dataset(config.seeds, config.degrees)
    assert len(pairs) == 12
    for index, pair in enumerate(pairs):
        seed = config.seeds[index // 4]
        assert validate_pair(pair, seed).ok


def test_write_dataset_format(rule_seed, tmp_path: Path):
    """1行1レコード、4フィールド、UTF-8 で保存されることをテスト"""
    output = tmp_path / "out" / "pairs.jsonl"
    write_dataset(generate_pairs(rule_seed), output)
    lines = output.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    for line in lines:
        record = json.loads(line)
        assert list(record) == ["instruction", "input", "chosen", "rejected"]
    # 漢字はエスケープせずに書き出す
    assert "设置" in lines[0]


def test_read_dataset_round_trip(rule_seed, tmp_path: Path):
    pairs = generate_pairs(rule_seed)
    output = tmp_path / "pairs.jsonl"
    write_dataset(pairs, output)
    loaded = read_dataset(output)
    assert [pair.to_record() for pair in loaded] == [pair.to_record() for pair in pairs]


@settings(max_examples=100, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    texts=st.lists(
        st.tuples(st.text(), st.text(), st.text(), st.text()), min_size=1, max_size=5
    )
)
def test_read_dataset_preserves_arbitrary_text(texts, tmp_path: Path):
    """改行や制御文字を含む任意の文字列を読み書きしても変わらないことをテスト"""
    pairs = [
        PreferencePair(instruction=a, input=b, chosen=c, rejected=d)
        for a, b, c, d in texts
    ]
    output = tmp_path / "arbitrary.jsonl"
    write_dataset(pairs, output)
    assert [pair.to_record() for pair in read_dataset(output)] == [
        pair.to_record() for pair in pairs
    ]


@pytest.mark.parametrize(
    "content, message",
    [
        ('{"instruction": "a", "input": "b", "chosen": "c"}\n', "1行目"),
        ("not json\n", "1行目"),
        ('["a"]\n', "1行目"),
        ('{"instruction": "a", "input": "b", "chosen": "c", "rejected": 1}\n', "1行目"),
        (
            '{"instruction": "a", "input": "b", "chosen": "c", "rejected": "d", "x": "e"}\n',
            "1行目",
        ),
    ],
)
def test_read_dataset_invalid(content, message, tmp_path: Path):
    """不正な行を行番号つきで報告することをテスト"""
    path = tmp_path / "broken.jsonl"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ValueError, match=message):
        read_dataset(path)


def test_read_dataset_reports_line_number(tmp_path: Path):
    """2行目のフィールド欠落を2行目として報告することをテスト"""
    good = '{"instruction": "a", "input": "b", "chosen": "c", "rejected": "d"}'
    bad = '{"instruction": "a", "input": "b", "chosen": "c"}'
    path = tmp_path / "broken.jsonl"
    path.write_text(good + "\n" + bad + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match="2行目: フィールド 'rejected' がありません"):
        read_dataset(path)
