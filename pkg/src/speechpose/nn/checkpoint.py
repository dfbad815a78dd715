"""Checkpoint format: a directory holding index.json and params.bin.

index.json maps each array name to {shape, dtype, offset}; params.bin
is the concatenation of the arrays as little-endian float64 at those
byte offsets, in sorted-name order so identical states serialize to
identical bytes. float64 keeps save/load lossless, so a reloaded model
reproduces its in-memory predictions bit for bit. Models may keep an
extra config.json alongside; this module only handles the array blob.
"""

import json
import os

import numpy as np

DTYPE = "<f8"


def save_arrays(path, items):
    """items: iterable of (name, ndarray). Creates path if needed."""
    os.makedirs(path, exist_ok=True)
    items = sorted(items, key=lambda kv: kv[0])
    names = [k for k, _ in items]
    if len(set(names)) != len(names):
        raise ValueError("duplicate array names in checkpoint")
    index = {}
    offset = 0
    chunks = []
    for name, arr in items:
        raw = np.ascontiguousarray(arr, dtype=DTYPE).tobytes()
        index[name] = {"shape": list(arr.shape), "dtype": DTYPE, "offset": offset}
        offset += len(raw)
        chunks.append(raw)
    with open(os.path.join(path, "params.bin"), "wb") as f:
        f.write(b"".join(chunks))
    with open(os.path.join(path, "index.json"), "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
        f.write("\n")


def load_arrays(path):
    """Returns {name: float64 ndarray}."""
    with open(os.path.join(path, "index.json")) as f:
        index = json.load(f)
    with open(os.path.join(path, "params.bin"), "rb") as f:
        blob = f.read()
    out = {}
    for name, meta in index.items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=meta["dtype"], count=count, offset=meta["offset"])
        out[name] = arr.reshape(shape).astype(np.float64)
    return out
