"""Named parameter store and its binary checkpoint container.

Checkpoint layout (all integers and floats little-endian):

    bytes 0..7    magic  b"CSPCHKPT"
    bytes 8..11   format version, uint32 (currently 1)
    bytes 12..19  header length in bytes, uint64
    header        UTF-8 JSON: parameter names, shapes, trainable flags
                  and payload offsets, plus optional optimizer state
    payload       concatenated float64 arrays at the declared offsets
"""

from __future__ import annotations

import json
from collections import OrderedDict
from typing import Iterator, Optional

import numpy as np

from csipose.errors import FormatError, TruncatedFileError, VersionError
from csipose.nn.tensor import Tensor

CHECKPOINT_MAGIC = b"CSPCHKPT"
CHECKPOINT_VERSION = 1


class ParamStore:
    """Ordered map of named float64 parameter tensors.

    Every entry, trainable or not, carries a same-shape gradient buffer.
    Non-trainable entries hold persistent state such as batch-norm
    running statistics.
    """

    def __init__(self):
        self._entries: OrderedDict[str, tuple[Tensor, bool]] = OrderedDict()

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=trainable)
        t.grad = np.zeros_like(t.data)
        self._entries[name] = (t, trainable)
        return t

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name][0]

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor, bool]]:
        for name, (t, trainable) in self._entries.items():
            yield name, t, trainable

    def trainable_items(self) -> Iterator[tuple[str, Tensor]]:
        for name, (t, trainable) in self._entries.items():
            if trainable:
                yield name, t

    def zero_grad(self):
        for _, t, _ in self.items():
            t.grad[...] = 0.0

    def num_scalars(self, trainable_only: bool = False) -> int:
        return sum(
            t.data.size
            for _, t, tr in self.items()
            if tr or not trainable_only
        )


def save_checkpoint(path, store: ParamStore, adam_state=None):
    """Serialize a ParamStore (and optionally Adam state) to ``path``."""
    blobs: list[bytes] = []
    offset = 0

    def push(arr) -> int:
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        blobs.append(raw)
        start = offset
        offset += len(raw)
        return start

    header: dict = {"params": [], "adam": None}
    for name, t, trainable in store.items():
        header["params"].append(
            {
                "name": name,
                "shape": list(t.data.shape),
                "trainable": trainable,
                "offset": push(t.data),
            }
        )
    if adam_state is not None:
        moments = []
        for name in adam_state.m:
            moments.append(
                {
                    "name": name,
                    "shape": list(adam_state.m[name].shape),
                    "m_offset": push(adam_state.m[name]),
                    "v_offset": push(adam_state.v[name]),
                }
            )
        header["adam"] = {
            "step": adam_state.step,
            "lr": adam_state.lr,
            "beta1": adam_state.beta1,
            "beta2": adam_state.beta2,
            "eps": adam_state.eps,
            "moments": moments,
        }

    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.uint32(CHECKPOINT_VERSION).tobytes())
        fh.write(np.uint64(len(header_bytes)).tobytes())
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path):
    """Read a checkpoint; returns (params, adam_meta).

    ``params`` is an OrderedDict name -> (array, trainable). ``adam_meta``
    is None or a dict with step/lr/beta1/beta2/eps and m/v array dicts.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 20:
        raise TruncatedFileError(f"{path}: file shorter than fixed header", len(raw))
    if raw[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:8]!r}")
    version = int(np.frombuffer(raw, "<u4", 1, 8)[0])
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    header_len = int(np.frombuffer(raw, "<u8", 1, 12)[0])
    payload_start = 20 + header_len
    if len(raw) < payload_start:
        raise TruncatedFileError(f"{path}: header truncated", len(raw))
    try:
        header = json.loads(raw[20:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc

    def pull(shape, offset):
        count = int(np.prod(shape)) if shape else 1
        start = payload_start + offset
        end = start + count * 8
        if end > len(raw):
            raise TruncatedFileError(
                f"{path}: payload ends at byte {len(raw)}, need {end}", len(raw)
            )
        return np.frombuffer(raw, "<f8", count, start).reshape(shape).copy()

    params = OrderedDict()
    for entry in header["params"]:
        params[entry["name"]] = (
            pull(entry["shape"], entry["offset"]),
            bool(entry["trainable"]),
        )

    adam_meta: Optional[dict] = None
    if header.get("adam") is not None:
        a = header["adam"]
        adam_meta = {
            "step": int(a["step"]),
            "lr": float(a["lr"]),
            "beta1": float(a["beta1"]),
            "beta2": float(a["beta2"]),
            "eps": float(a["eps"]),
            "m": {},
            "v": {},
        }
        for entry in a["moments"]:
            adam_meta["m"][entry["name"]] = pull(entry["shape"], entry["m_offset"])
            adam_meta["v"][entry["name"]] = pull(entry["shape"], entry["v_offset"])
    return params, adam_meta
