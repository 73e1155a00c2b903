import hashlib
import json

import numpy as np


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def stable_hash(obj):
    """64-bit hex digest of the canonical (sorted-key) JSON form of ``obj``."""
    return hashlib.blake2b(canonical_json(obj).encode(), digest_size=8).hexdigest()
