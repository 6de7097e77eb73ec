import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from repetitionlab.markov_lm import (
    GenerationState,
    alpha,
    initial_state,
    new_model,
    next_distribution,
    random_model,
    step,
)


def uniform_model(vocab_size: int = 3, gamma: float = 0.15, r_max: int = 10):
    """全行が一様分布のモデル"""
    rows = np.full((vocab_size, vocab_size), 1.0 / vocab_size)
    return new_model(vocab_size, rows, gamma, r_max, 0)


def self_loop_model(p: float, gamma: float = 0.15, r_max: int = 10):
    """トークン0が確率 p で自分自身に戻る2語彙のモデル"""
    rows = [[p, 1.0 - p], [0.5, 0.5]]
    return new_model(2, rows, gamma, r_max, 1)


def test_new_model_uniform():
    """一様な行、γ=0 のモデルが作れることをテスト"""
    model = new_model(2, [[0.5, 0.5], [0.5, 0.5]], 0.0, 1, 0)
    assert model.vocab_size == 2
    assert model.eos == 0
    # 開始行は EOS の行
    np.testing.assert_array_equal(model.start_distribution, [0.5, 0.5])


def test_new_model_reports_bad_row():
    """合計が1でない行の番号と合計をエラーに含めることをテスト"""
    rows = [[0.5, 0.25, 0.25], [0.5, 0.25, 0.24], [1.0, 0.0, 0.0]]
    with pytest.raises(ValueError) as excinfo:
        new_model(3, rows, 0.15, 10, 0)
    assert "行 1" in str(excinfo.value)
    assert "0.99" in str(excinfo.value)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"base_transitions": [[1.0, 0.0], [0.0, 1.0]], "vocab_size": 3},
        {"gamma": -0.1},
        {"r_max": 0},
        {"eos": 5},
        {"base_transitions": [[1.5, -0.5], [0.5, 0.5]]},
    ],
)
def test_new_model_invalid(kwargs):
    """形状の不一致、負の γ、1未満の r_max、範囲外の EOS、負の確率を拒否することをテスト"""
    params = {
        "vocab_size": 2,
        "base_transitions": [[0.5, 0.5], [0.5, 0.5]],
        "gamma": 0.15,
        "r_max": 10,
        "eos": 0,
    }
    params.update(kwargs)
    with pytest.raises(ValueError):
        new_model(**params)


def test_random_model_is_valid_and_reproducible():
    """乱数行列のモデルが正しい行確率を持ち、同じシードで一致することをテスト"""
    model = random_model(50, seed=7, concentration=0.1, gamma=0.15, r_max=10)
    np.testing.assert_allclose(model.base_transitions.sum(axis=1), 1.0)
    again = random_model(50, seed=7, concentration=0.1, gamma=0.15, r_max=10)
    np.testing.assert_array_equal(model.base_transitions, again.base_transitions)


def test_random_model_rejects_non_positive_concentration():
    with pytest.raises(ValueError):
        random_model(5, seed=0, concentration=0.0, gamma=0.15, r_max=10)


def test_alpha():
    """増幅係数の値と飽和をテスト"""
    model = uniform_model(gamma=0.15, r_max=10)
    assert alpha(model, 0) == 1.0
    assert alpha(model, 4) == pytest.approx(1.6)
    assert alpha(model, 10) == pytest.approx(2.5)
    assert alpha(model, 25) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        alpha(model, -1)


def test_alpha_geometric():
    """geometric 形の増幅係数をテスト"""
    model = new_model(
        2, [[0.5, 0.5], [0.5, 0.5]], 0.15, 3, 0, alpha_form="geometric"
    )
    assert alpha(model, 2) == pytest.approx(1.15**2)
    assert alpha(model, 8) == pytest.approx(1.15**3)


def test_next_distribution_without_repetition_is_base_row():
    """繰り返しが無いときは基本行をそのまま返すことをテスト"""
    model = self_loop_model(0.6)
    state = initial_state(model, [1])
    np.testing.assert_array_equal(next_distribution(model, state), [0.5, 0.5])


def test_next_distribution_gamma_zero():
    """γ=0 なら繰り返しがあっても基本行と一致することをテスト"""
    model = self_loop_model(0.6, gamma=0.0)
    state = initial_state(model, [0, 0, 0, 0])
    assert state.rep_count == 4
    np.testing.assert_array_equal(next_distribution(model, state), [0.6, 0.4])


def test_next_distribution_boosts_continuing_token():
    """継続トークンの確率が α(r) 倍されて正規化されることをテスト"""
    model = self_loop_model(0.6)
    state = GenerationState(tokens=(0,), rep_unit=(0,), rep_count=1, run_length=1)
    dist = next_distribution(model, state)
    # 検証
    assert dist[0] == pytest.approx(0.6 * 1.15 / (0.6 * 1.15 + 0.4))
    assert dist.sum() == pytest.approx(1.0)


def test_next_distribution_saturated_row_stays_at_one():
    """継続確率が1の行は増幅しても1を超えないことをテスト"""
    model = self_loop_model(1.0)
    state = initial_state(model, [0] * 8)
    dist = next_distribution(model, state)
    assert dist[0] == pytest.approx(1.0)
    assert dist[1] == 0.0


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    tokens=st.lists(st.integers(0, 5), min_size=0, max_size=40),
)
def test_next_distribution_is_normalized(seed, tokens):
    """任意の状態で次トークン分布が確率分布になることをテスト"""
    model = random_model(6, seed=seed, concentration=0.3, gamma=0.15, r_max=10)
    state = initial_state(model, tokens)
    dist = next_distribution(model, state)
    assert np.all(dist >= 0.0)
    assert abs(dist.sum() - 1.0) <= 1e-9


def test_step_extends_repetition_unit():
    """[a,b,a,b] の後に a を追加すると単位 (a,b)、回数2になることをテスト"""
    model = uniform_model()
    state = step(initial_state(model, [1, 2, 1, 2]), 1, model)
    assert state.rep_unit == (1, 2)
    assert state.rep_count == 2


def test_step_breaks_repetition():
    """[a,a,a] の後に b を追加すると繰り返しが途切れることをテスト"""
    model = uniform_model()
    state = step(initial_state(model, [1, 1, 1]), 2, model)
    assert state.rep_count == 0
    assert state.rep_unit == ()


def test_step_from_empty_state():
    """空の状態から1トークン追加すると回数0、継続確率0が記録されることをテスト"""
    model = uniform_model()
    state = step(GenerationState(), 1, model)
    assert state.tokens == (1,)
    assert state.rep_count == 0
    assert state.p_r_trace == (0.0,)


def test_step_rejects_out_of_range_token():
    model = uniform_model()
    with pytest.raises(ValueError):
        step(GenerationState(), 3, model)
    with pytest.raises(ValueError):
        initial_state(model, [0, -1])


def test_state_invariants():
    """rep_count が 0 であることと rep_unit が空であることが同値であることをテスト"""
    with pytest.raises(ValueError):
        GenerationState(tokens=(1, 1), rep_unit=(), rep_count=2)
    with pytest.raises(ValueError):
        GenerationState(tokens=(1, 1), rep_unit=(1,), rep_count=0)
    with pytest.raises(ValueError):
        GenerationState(tokens=(1, 1), rep_unit=(1,), rep_count=-1)
    with pytest.raises(ValueError):
        GenerationState(tokens=(1,), rep_unit=(1, 1), rep_count=1)


def test_state_is_immutable():
    """step が元の状態を変更せず、状態への代入も拒否されることをテスト"""
    model = self_loop_model(0.6)
    state = initial_state(model, [0])
    advanced = step(state, 0, model)
    assert state.tokens == (0,)
    assert advanced.tokens == (0, 0)
    with pytest.raises(ValidationError):
        state.rep_count = 3  # type: ignore[misc]


def test_trace_increases_until_saturation():
    """単位を強制し続けると継続確率が飽和まで狭義単調増加し、その後一定になることをテスト"""
    model = self_loop_model(0.5, gamma=0.15, r_max=10)
    state = initial_state(model, [0])
    for _ in range(15):
        state = step(state, 0, model)
    trace = np.array(state.p_r_trace)
    # 検証
    assert trace[0] == pytest.approx(0.5)
    assert np.all(np.diff(trace[:10]) > 0.0)
    np.testing.assert_allclose(trace[10:], trace[9])


def test_trace_dominance_for_higher_initial_probability():
    """初期の継続確率が高い単位ほど、各ステップの継続確率も高いことをテスト"""
    rows = [
        [0.4, 0.3, 0.3],
        [0.1, 0.3, 0.6],
        [0.1, 0.3, 0.6],
    ]
    model = new_model(3, rows, 0.15, 10, 0)
    low = initial_state(model, [1])
    high = initial_state(model, [2])
    for _ in range(20):
        low = step(low, 1, model)
        high = step(high, 2, model)
    assert all(q >= p for p, q in zip(low.p_r_trace, high.p_r_trace))
