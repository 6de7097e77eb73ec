"""設定ファイルの読み込み

このモジュールは、YAML 形式の設定ファイルを読み込み、検証済みのデータモデルに
変換する機能を提供します。
主な機能は以下の通りです：

- ファイルパス、またはパッケージ同梱の設定名（default, random50, seeds, workflow,
  mode1, mode2, detect）による設定ファイルの解決
- モデル、実験、理論、ワークフロー、DPO シード、検出対象の設定のデータモデル
- 試行ごとのモデルとプロンプトの生成
"""

from pathlib import Path
from typing import Any

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from repetitionlab.dpo_dataset import DEFAULT_DEGREES, PreferenceSeed
from repetitionlab.markov_lm import AlphaForm, ReinforcedMarkovModel, new_model, random_model
from repetitionlab.schemas import DetectorParams
from repetitionlab.theory import EscapeBoundInputs
from repetitionlab.trap_kernel import TrapFamily, TrialInstance
from repetitionlab.workflow_sim import WorkflowConfig

CONFIG_DIR = Path(__file__).parent / "configs"


def resolve_config_path(name_or_path: str | Path) -> Path:
    """設定ファイルのパスを解決する

    既存のファイルならそのパスを、そうでなければ同梱の設定名として解決します。

    Raises:
        FileNotFoundError: どちらにも見つからない場合
    """
    path = Path(name_or_path)
    if path.is_file():
        return path
    packaged = CONFIG_DIR / f"{name_or_path}.yaml"
    if packaged.is_file():
        return packaged
    raise FileNotFoundError(f"設定ファイルが見つかりません: {name_or_path}")


def load_yaml(name_or_path: str | Path) -> dict[str, Any]:
    """設定ファイルを読み込んで辞書を返す"""
    with open(resolve_config_path(name_or_path), "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ValueError(f"設定ファイルの最上位がマッピングではありません: {name_or_path}")
    return data


class ModelConfig(BaseModel):
    """モデルの設定

    カーネルは transitions（明示的な行列）、seed と concentration（ディリクレ行）、
    trap（罠カーネル族）のいずれか1つで与えます。

    Attributes:
        vocab_size (int | None): 語彙サイズ（trap の場合は省略可）
        eos (int): 終端トークン
        gamma (float): 強化量
        r_max (int): 飽和上限
        alpha_form (AlphaForm): 増幅係数の形
        transitions (list[list[float]] | None): 遷移行列
        start_row (list[float] | None): 開始行
        seed (int | None): 乱数行列のシード
        concentration (float | None): ディリクレ分布の集中度
        trap (TrapFamily | None): 罠カーネル族
    """

    vocab_size: int | None = None
    eos: int = 0
    gamma: float = Field(default=0.15, ge=0.0)
    r_max: int = Field(default=10, ge=1)
    alpha_form: AlphaForm = "linear"
    transitions: list[list[float]] | None = None
    start_row: list[float] | None = None
    seed: int | None = None
    concentration: float | None = None
    trap: TrapFamily | None = None

    _fixed: ReinforcedMarkovModel | None = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_source(self) -> "ModelConfig":
        sources = [
            self.transitions is not None,
            self.seed is not None or self.concentration is not None,
            self.trap is not None,
        ]
        if sum(sources) != 1:
            raise ValueError(
                "transitions、seed + concentration、trap のいずれか1つを指定してください"
            )
        if self.trap is not None:
            if self.vocab_size not in (None, self.trap.vocab_size):
                raise ValueError(
                    f"vocab_size {self.vocab_size} が罠カーネルの語彙サイズ {self.trap.vocab_size} と一致しません"
                )
            if self.eos != 0:
                raise ValueError("罠カーネルの EOS は 0 です")
        elif self.vocab_size is None:
            raise ValueError("vocab_size を指定してください")
        if sources[1] and (self.seed is None or self.concentration is None):
            raise ValueError("seed と concentration は両方指定してください")
        return self

    def fixed_model(self) -> ReinforcedMarkovModel:
        """試行によらないモデル（transitions または seed の場合）"""
        if self.trap is not None:
            raise ValueError("罠カーネルのモデルは試行ごとに生成されます")
        if self._fixed is None:
            if self.transitions is not None:
                self._fixed = new_model(
                    self.vocab_size,
                    self.transitions,
                    self.gamma,
                    self.r_max,
                    self.eos,
                    start_row=self.start_row,
                    alpha_form=self.alpha_form,
                )
            else:
                self._fixed = random_model(
                    self.vocab_size,
                    self.seed,
                    self.concentration,
                    self.gamma,
                    self.r_max,
                    self.eos,
                    self.alpha_form,
                )
        return self._fixed

    def instance(self, rng: np.random.Generator) -> TrialInstance:
        """試行ごとのモデルとプロンプトを作る

        罠カーネルなら試行ごとにカーネルを引きます。それ以外は共通のモデルに、
        EOS 以外から一様に選んだ1トークンのプロンプトを組み合わせます。
        """
        if self.trap is not None:
            return self.trap.sample(rng, self.gamma, self.r_max, self.alpha_form)
        model = self.fixed_model()
        choices = [token for token in range(model.vocab_size) if token != model.eos]
        prompt = (int(choices[rng.integers(len(choices))]),)
        return TrialInstance(model=model, prompt=prompt)


class ExperimentSettings(BaseModel):
    """実験の設定

    Attributes:
        trials (int): 設定ごとの試行数
        horizon (int): 生成トークン数の上限
        beam_widths (list[int]): 比較するビーム幅
        early_stopping (list[bool | str]): 比較する early_stopping のモード
        penalties (list[float]): presence penalty の掃引値
        detector (DetectorParams): 繰り返し検出のパラメータ
    """

    trials: int = Field(default=1000, ge=1)
    horizon: int = Field(default=256, ge=1)
    beam_widths: list[int] = [3, 5, 10]
    early_stopping: list[bool | str] = [True, False]
    penalties: list[float] = [0.0, 0.5, 0.8, 1.0, 1.2, 1.5, 2.0]
    detector: DetectorParams = DetectorParams()


class TheorySettings(EscapeBoundInputs):
    """理論レポートの設定

    Attributes:
        beam_width (int): オーバーヘッドと脱出時間を評価するビーム幅
    """

    beam_width: int = Field(default=5, ge=1)


class LabConfig(BaseModel):
    """実験設定ファイルの内容

    Attributes:
        model (ModelConfig): モデルの設定
        experiment (ExperimentSettings): 実験の設定
        theory (TheorySettings): 理論レポートの設定
    """

    model: ModelConfig
    experiment: ExperimentSettings = ExperimentSettings()
    theory: TheorySettings = TheorySettings()

    model_config = ConfigDict(extra="forbid")


class SeedsConfig(BaseModel):
    """DPO シードファイルの内容

    Attributes:
        degrees (list[int]): 繰り返し回数
        seeds (list[PreferenceSeed]): シード
    """

    degrees: list[int] = list(DEFAULT_DEGREES)
    seeds: list[PreferenceSeed] = Field(..., min_length=1)

    model_config = ConfigDict(extra="forbid")


class DetectConfig(BaseModel):
    """繰り返し検出の対象ファイルの内容

    Attributes:
        eos (int | None): 終端トークン（末尾が EOS なら終了理由を eos とします）
        detector (DetectorParams): 検出パラメータ
        sequences (list[list[int]]): 検出対象のトークン列
    """

    eos: int | None = 0
    detector: DetectorParams = DetectorParams()
    sequences: list[list[int]]

    model_config = ConfigDict(extra="forbid")


def load_lab_config(name_or_path: str | Path) -> LabConfig:
    return LabConfig.model_validate(load_yaml(name_or_path))


def load_workflow_config(name_or_path: str | Path) -> WorkflowConfig:
    return WorkflowConfig.model_validate(load_yaml(name_or_path))


def load_seeds_config(name_or_path: str | Path) -> SeedsConfig:
    return SeedsConfig.model_validate(load_yaml(name_or_path))


def load_detect_config(name_or_path: str | Path) -> DetectConfig:
    return DetectConfig.model_validate(load_yaml(name_or_path))
