"""Toy benchmark datasets and on-disk caching.

Copy memory: sequences of length T + 20. The first 10 entries are random
digits from {1..8}, the next T - 1 entries are zeros, and the final 11
entries are 9s (the recall marker). Targets are zeros except the last 10
positions, which repeat the first 10 inputs.

Adding problem: two channels of length T. Channel one is uniform [0, 1];
channel two is zero except for two marker 1s at distinct positions. The
target is the sum of the two marked values, so always predicting 1.0
scores an MSE of about 0.1767.

Function-fitting targets: named 1-d signals on the [-1, 1] grid.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset", "make_copy_memory", "make_adding", "make_field_targets",
    "save_dataset", "load_dataset", "one_hot",
]

FIELD_TARGET_KINDS = ("gaussian", "step", "sawtooth", "sine_mixture", "noise")


@dataclass
class Dataset:
    kind: str
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict

    def __len__(self):
        return self.inputs.shape[0]


def make_copy_memory(T, n, seed):
    """n copy-memory sequences of length T + 20."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    rng = np.random.default_rng(seed)
    length = T + 20
    inputs = np.zeros((n, length), dtype=np.int64)
    inputs[:, :10] = rng.integers(1, 9, size=(n, 10))
    inputs[:, 10 + T - 1:] = 9
    targets = np.zeros((n, length), dtype=np.int64)
    targets[:, -10:] = inputs[:, :10]
    return Dataset(
        kind="copy_memory", inputs=inputs, targets=targets,
        meta={"T": T, "n": n, "seed": seed, "length": length},
    )


def make_adding(T, n, seed):
    """n adding-problem sequences of length T with 2 channels."""
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    rng = np.random.default_rng(seed)
    inputs = np.zeros((n, T, 2))
    inputs[:, :, 0] = rng.uniform(0.0, 1.0, size=(n, T))
    targets = np.zeros(n)
    for i in range(n):
        a, b = rng.choice(T, size=2, replace=False)
        inputs[i, a, 1] = 1.0
        inputs[i, b, 1] = 1.0
        targets[i] = inputs[i, a, 0] + inputs[i, b, 0]
    return Dataset(
        kind="adding", inputs=inputs, targets=targets,
        meta={"T": T, "n": n, "seed": seed},
    )


def make_field_targets(kind, N, seed=0):
    """Deterministic 1-d target of the requested family on [-1, 1]."""
    if N < 8:
        raise ValueError(f"N must be >= 8, got {N}")
    if kind not in FIELD_TARGET_KINDS:
        raise ValueError(f"unknown target kind: {kind!r}")
    x = np.linspace(-1.0, 1.0, N)
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        center = x[N // 2]
        return np.exp(-0.5 * ((x - center) / 0.25) ** 2)
    if kind == "step":
        return (x >= 0.0).astype(np.float64)
    if kind == "sawtooth":
        return 2.0 * ((1.5 * (x + 1.0)) % 1.0) - 1.0
    if kind == "sine_mixture":
        out = np.zeros(N)
        for f, a in ((1.5, 1.0), (4.0, 0.6), (7.5, 0.3)):
            out += a * np.sin(2.0 * np.pi * f * x + rng.uniform(0, 2 * np.pi))
        return out
    return rng.uniform(-1.0, 1.0, size=N)


def one_hot(indices, depth):
    """Integer array -> float one-hot with a trailing channel axis."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros(idx.shape + (depth,), dtype=np.float64)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


# ---------------------------------------------------------------------------
# disk cache: one flat binary blob plus a JSON header

_DTYPE_TAGS = {"float64": "f8", "int64": "i8"}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


def save_dataset(ds, path_prefix):
    """Write <prefix>.bin (flat arrays) and <prefix>.json (header)."""
    entries = []
    offset = 0
    blob = bytearray()
    for name, arr in (("inputs", ds.inputs), ("targets", ds.targets)):
        arr = np.ascontiguousarray(arr)
        tag = _DTYPE_TAGS[arr.dtype.name]
        raw = arr.tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": tag,
             "offset": offset, "nbytes": len(raw)}
        )
        blob.extend(raw)
        offset += len(raw)
    header = {"kind": ds.kind, "meta": ds.meta, "arrays": entries}
    with open(f"{path_prefix}.bin", "wb") as fh:
        fh.write(bytes(blob))
    tmp = f"{path_prefix}.json.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
    os.replace(tmp, f"{path_prefix}.json")


def load_dataset(path_prefix, expect_kind=None, expect_meta=None):
    """Load a cached dataset, verifying the header against expectations."""
    with open(f"{path_prefix}.json", encoding="utf-8") as fh:
        header = json.load(fh)
    if expect_kind is not None and header["kind"] != expect_kind:
        raise ValueError(
            f"cache holds kind {header['kind']!r}, expected {expect_kind!r}"
        )
    if expect_meta:
        for key, want in expect_meta.items():
            got = header["meta"].get(key)
            if got != want:
                raise ValueError(
                    f"cache meta mismatch for {key!r}: {got!r} != {want!r}"
                )
    with open(f"{path_prefix}.bin", "rb") as fh:
        blob = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(_TAG_DTYPES[entry["dtype"]])
        raw = blob[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(
            entry["shape"]
        ).copy()
    return Dataset(
        kind=header["kind"], inputs=arrays["inputs"],
        targets=arrays["targets"], meta=header["meta"],
    )
