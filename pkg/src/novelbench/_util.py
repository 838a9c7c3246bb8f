import hashlib
import json
import math

import numpy as np


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def stable_seed(*parts) -> int:
    """64-bit seed derived from a blake2b digest of ``parts``.

    Used instead of ``hash()`` so seeds survive interpreter restarts and
    differ only when the inputs do.
    """
    digest = hashlib.blake2b(canonical_json(list(parts)).encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def digest(obj, size: int = 8) -> str:
    return hashlib.blake2b(canonical_json(obj).encode(), digest_size=size).hexdigest()


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(stable_seed(*parts))
