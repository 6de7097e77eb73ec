"""自己強化マルコフモデルによる繰り返し問題とその対策の実験パッケージ"""

from repetitionlab.decoders import (
    DecodeResult,
    Hypothesis,
    apply_presence_penalty,
    beam_search_decode,
    decode,
    greedy_decode,
    sample_decode,
)
from repetitionlab.markov_lm import (
    GenerationState,
    ReinforcedMarkovModel,
    alpha,
    initial_state,
    new_model,
    next_distribution,
    random_model,
    step,
)
from repetitionlab.repetition_analysis import (
    detect_repetition,
    escape_time,
    repetition_rate,
    self_reinforcement_curve,
)
from repetitionlab.schemas import DecoderConfig, DetectorParams, RepetitionReport

__all__ = [
    "DecodeResult",
    "DecoderConfig",
    "DetectorParams",
    "GenerationState",
    "Hypothesis",
    "ReinforcedMarkovModel",
    "RepetitionReport",
    "alpha",
    "apply_presence_penalty",
    "beam_search_decode",
    "decode",
    "detect_repetition",
    "escape_time",
    "greedy_decode",
    "initial_state",
    "new_model",
    "next_distribution",
    "random_model",
    "repetition_rate",
    "sample_decode",
    "self_reinforcement_curve",
    "step",
]
