"""試行ごとの乱数シードを導出するモジュール

(基準シード, 試行番号, 設定番号) のような値の組から、SHA-256 ハッシュで
再現可能な64ビットのシードを作ります。同じ組からは常に同じシードが得られるため、
設定ごとに同一のモデル乱数を共有した対応のある比較ができます。
"""

import hashlib

import numpy as np


def derive_seed(*parts: int | str) -> int:
    """値の組から64ビットのシードを導出する

    Args:
        *parts (int | str): シードの元になる値。``"|"`` で連結してハッシュします

    Returns:
        int: 0 以上 2**64 未満の整数
    """
    key = "|".join(str(part) for part in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(*parts: int | str) -> np.random.Generator:
    """値の組から独立した乱数生成器を作る"""
    return np.random.default_rng(derive_seed(*parts))
