"""Small shared helpers: seed derivation and JSON-safe conversion."""

from __future__ import annotations

import hashlib
from typing import Any

import numpy as np


def derive_seed(*parts: object) -> int:
    """Derive a 32-bit seed from a tuple of parts, stable across runs.

    Every stochastic step takes its seed from here so that resuming a run or
    driving it over the API replays the exact same draws.
    """
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays so json.dumps never sees them."""
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return obj
