"""Binary tensor container used for checkpoints and dataset files.

Layout: 4-byte magic, uint32 version, uint64 header length, a UTF-8 JSON
header describing metadata and every tensor (name, dtype, shape, byte
offset), then the raw little-endian tensor blob. Floats in the JSON
header round-trip exactly (repr-based encoding), and tensor bytes are
written verbatim, so save/load cycles are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .basis import BasisDictionary
from .datagen import Dataset
from .network import LayerParams, NetworkParams, NetworkSpec

__all__ = [
    "save_container",
    "load_container",
    "checkpoint_save",
    "checkpoint_load",
    "dataset_save",
    "dataset_load",
]

MAGIC = b"TVSB"
VERSION = 1


def save_container(path, meta: dict, tensors: dict[str, np.ndarray]):
    path = Path(path)
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        entries.append({
            "name": name,
            "dtype": le.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "tensors": entries}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise IOError(f"{path} is not a tensor container (bad magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise IOError(f"{path} has unsupported container version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        blob = fh.read()
    tensors = {}
    for entry in header["tensors"]:
        start = entry["offset"]
        raw = blob[start:start + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
    return header["meta"], tensors


def checkpoint_save(path, params: NetworkParams, extra_meta: dict | None = None):
    """Write a network (spec, dictionaries, every tensor) to one file."""
    meta = {
        "kind": "checkpoint",
        "spec": params.spec.to_record(),
        "dictionaries": [
            {
                "a": [d.to_record() for d in lp.dicts_a],
                "b": [d.to_record() for d in lp.dicts_b],
                "c": [d.to_record() for d in lp.dicts_c],
            }
            for lp in params.layers
        ],
    }
    if extra_meta:
        meta["extra"] = extra_meta
    tensors: dict[str, np.ndarray] = {}
    for name, tensor in params.trainable_tensors():
        tensors[name] = tensor
    if params.spec.normalize:
        for i, lp in enumerate(params.layers):
            tensors[f"layer{i}.running_mean"] = lp.running_mean
            tensors[f"layer{i}.running_var"] = lp.running_var
    save_container(path, meta, tensors)


def checkpoint_load(path) -> NetworkParams:
    meta, tensors = load_container(path)
    if meta.get("kind") != "checkpoint":
        raise IOError(f"{path} is not a checkpoint file")
    spec = NetworkSpec.from_record(meta["spec"])
    layers = []
    for i, (ls, dicts) in enumerate(zip(spec.layers, meta["dictionaries"])):
        layers.append(LayerParams(
            a_coeff=tensors[f"layer{i}.a_coeff"],
            b_coeff=tensors[f"layer{i}.b_coeff"],
            c_coeff=tensors[f"layer{i}.c_coeff"],
            c_bias=tensors[f"layer{i}.c_bias"],
            dicts_a=tuple(BasisDictionary.from_record(r) for r in dicts["a"]),
            dicts_b=tuple(BasisDictionary.from_record(r) for r in dicts["b"]),
            dicts_c=tuple(BasisDictionary.from_record(r) for r in dicts["c"]),
            norm_scale=tensors.get(f"layer{i}.norm_scale"),
            norm_shift=tensors.get(f"layer{i}.norm_shift"),
            running_mean=tensors.get(f"layer{i}.running_mean"),
            running_var=tensors.get(f"layer{i}.running_var"),
        ))
    mixings = []
    i = 0
    while f"mixing{i}" in tensors:
        mixings.append(tensors[f"mixing{i}"])
        i += 1
    return NetworkParams(spec, layers, mixings)


def dataset_save(path, dataset: Dataset):
    meta = {
        "kind": "dataset",
        "seed": dataset.seed,
        "splits": {name: list(rng) for name, rng in dataset.splits.items()},
        "provenance": dataset.provenance,
        "has_clean": dataset.clean is not None,
    }
    tensors = {"inputs": dataset.inputs, "targets": dataset.targets}
    if dataset.clean is not None:
        tensors["clean"] = dataset.clean
    save_container(path, meta, tensors)


def dataset_load(path) -> Dataset:
    meta, tensors = load_container(path)
    if meta.get("kind") != "dataset":
        raise IOError(f"{path} is not a dataset file")
    return Dataset(
        inputs=tensors["inputs"],
        targets=tensors["targets"],
        splits={name: tuple(rng) for name, rng in meta["splits"].items()},
        seed=int(meta["seed"]),
        provenance=meta["provenance"],
        clean=tensors.get("clean"),
    )
