"""Named, counter-based random streams derived from one root seed."""
from __future__ import annotations

import datetime as dt
import zlib

import numpy as np


def tag_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def key_ints(key: tuple[dt.date, int] | None) -> list[int]:
    if key is None:
        return [0, 0]
    return [key[0].toordinal(), int(key[1])]


def stream(seed: int, name: str, key: tuple[dt.date, int] | None = None, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, name, key, index)``; identical
    inputs give identical streams irrespective of call order."""
    ss = np.random.SeedSequence([int(seed), tag_id(name), *key_ints(key), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def path_streams(seed: int, name: str, key, ids) -> list[np.random.Generator]:
    return [stream(seed, name, key, int(j)) for j in ids]
