"""Binary checkpoints of every network, optimizer state and RNG state.

Layout::

    b"MARLCKPT"  8-byte magic
    uint32 LE    format version
    uint64 LE    header length H
    H bytes      UTF-8 JSON header: metadata, rng states, and for every array
                 its name, dtype, shape and byte offset into the payload
    payload      raw little-endian array bytes, concatenated

The header is written with sorted keys and arrays in a fixed order, so two
identical training states produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from .algos import TrainerGroup

MAGIC = b"MARLCKPT"
FORMAT_VERSION = 1


def group_arrays(group: TrainerGroup) -> Dict[str, np.ndarray]:
    """Flat name -> array view of all parameters and Adam moments."""
    out: Dict[str, np.ndarray] = {}
    for tr in group.trainers:
        for name, net, opt in tr.networks():
            prefix = f"agent{tr.agent_index}/{name}"
            for k, p in enumerate(net.params()):
                out[f"{prefix}/p{k}"] = p
            if opt is not None:
                for k, (m, v) in enumerate(zip(opt.first_moment, opt.second_moment)):
                    out[f"{prefix}/adam_m{k}"] = m
                    out[f"{prefix}/adam_v{k}"] = v
    return out


def optimizer_steps(group: TrainerGroup) -> Dict[str, int]:
    return {
        f"agent{tr.agent_index}/{name}": opt.step_count
        for tr in group.trainers
        for name, _, opt in tr.networks()
        if opt is not None
    }


def save_checkpoint(path: Union[str, Path], group: TrainerGroup, rng_states: Dict[str, Any],
                    metadata: Dict[str, Any] | None = None) -> None:
    arrays = group_arrays(group)
    entries = []
    offset = 0
    chunks = []
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str.replace(">", "<").replace("=", "<"),
                        "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {
        "metadata": metadata or {},
        "rng_states": rng_states,
        "optimizer_steps": optimizer_steps(group),
        "counters": vars(group.counters),
        "arrays": entries,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for c in chunks:
            fh.write(c)


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Returns (header, arrays)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[20:20 + hlen])
    payload = memoryview(raw)[20 + hlen:]
    arrays = {}
    for e in header["arrays"]:
        buf = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header, arrays


def restore_group(group: TrainerGroup, header: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> None:
    """Copy checkpointed state into an identically shaped group."""
    targets = group_arrays(group)
    if set(targets) != set(arrays):
        raise ValueError("checkpoint does not match this trainer group")
    for name, dst in targets.items():
        src = arrays[name]
        if src.shape != dst.shape:
            raise ValueError(f"{name}: shape {src.shape} != {dst.shape}")
        dst[...] = src
    steps = header["optimizer_steps"]
    for tr in group.trainers:
        for name, _, opt in tr.networks():
            if opt is not None:
                opt.step_count = steps[f"agent{tr.agent_index}/{name}"]
    for k, v in header["counters"].items():
        setattr(group.counters, k, v)


def restore_rng(rng: np.random.Generator, state: Dict[str, Any]) -> None:
    rng.bit_generator.state = state
