"""
Checkpoint files.

Layout, all integers little-endian:
    b"MSFN"  u32 version
    u32 length + config JSON
    u64 iteration, u64 Adam step
    u32 length + generator state JSON
    u32 record count, then per record:
        u16 name length + UTF-8 name, u8 ndim, u32 per dim, float32 values
Records are "param/<name>", "adam.m/<name>" and "adam.v/<name>".
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Dict, Union

import numpy as np
import orjson
import structlog

from ..shared.errors import FormatError
from ..shared.schemas import TrainConfig

logger = structlog.get_logger()

MAGIC = b"MSFN"
VERSION = 1
PARAM_PREFIX = "param/"
M_PREFIX = "adam.m/"
V_PREFIX = "adam.v/"

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    config: TrainConfig
    iteration: int
    params: Dict[str, np.ndarray]
    adam_step: int = 0
    adam_m: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=dict)
    generator_state: Dict[str, Any] = field(default_factory=dict)


def _stringify_ints(value: Any) -> Any:
    # PCG64 state holds 128-bit integers, beyond what JSON numbers carry here.
    if isinstance(value, dict):
        return {k: _stringify_ints(v) for k, v in value.items()}
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        return str(value)
    return value


def _parse_ints(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _parse_ints(v) for k, v in value.items()}
    if isinstance(value, str) and value.isdigit():
        return int(value)
    return value


def _write_block(handle: BinaryIO, payload: bytes) -> None:
    handle.write(struct.pack("<I", len(payload)))
    handle.write(payload)


def _write_record(handle: BinaryIO, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    handle.write(struct.pack("<H", len(encoded)))
    handle.write(encoded)
    handle.write(struct.pack("<B", array.ndim))
    handle.write(struct.pack(f"<{array.ndim}I", *array.shape))
    handle.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def save_checkpoint(checkpoint: Checkpoint, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = [(PARAM_PREFIX + k, v) for k, v in checkpoint.params.items()]
    records += [(M_PREFIX + k, v) for k, v in checkpoint.adam_m.items()]
    records += [(V_PREFIX + k, v) for k, v in checkpoint.adam_v.items()]

    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", VERSION))
        _write_block(handle, orjson.dumps(checkpoint.config.model_dump(mode="json")))
        handle.write(struct.pack("<QQ", checkpoint.iteration, checkpoint.adam_step))
        _write_block(handle, orjson.dumps(_stringify_ints(checkpoint.generator_state)))
        handle.write(struct.pack("<I", len(records)))
        for name, array in records:
            _write_record(handle, name, array)
    tmp.replace(path)
    logger.info("Checkpoint saved", path=str(path), iteration=checkpoint.iteration, records=len(records))


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise FormatError(f"truncated at byte {self.offset}", path=self.path)
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    reader = _Reader(path.read_bytes(), str(path))

    if reader.take(4) != MAGIC:
        raise FormatError("not an MSFN checkpoint", path=str(path))
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", path=str(path))

    (length,) = reader.unpack("<I")
    try:
        config = TrainConfig.model_validate(orjson.loads(reader.take(length)))
    except (orjson.JSONDecodeError, ValueError) as e:
        raise FormatError(f"bad config block: {e}", path=str(path)) from e
    iteration, adam_step = reader.unpack("<QQ")
    (length,) = reader.unpack("<I")
    generator_state = _parse_ints(orjson.loads(reader.take(length)))

    params: Dict[str, np.ndarray] = {}
    adam_m: Dict[str, np.ndarray] = {}
    adam_v: Dict[str, np.ndarray] = {}
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (name_length,) = reader.unpack("<H")
        name = reader.take(name_length).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape, dtype=np.int64))
        array = np.frombuffer(reader.take(size * 4), dtype="<f4").reshape(shape).astype(np.float32)
        for prefix, target in ((PARAM_PREFIX, params), (M_PREFIX, adam_m), (V_PREFIX, adam_v)):
            if name.startswith(prefix):
                target[name[len(prefix) :]] = array
                break
        else:
            raise FormatError(f"unknown record {name!r}", path=str(path))

    if reader.offset != len(reader.data):
        raise FormatError(f"{len(reader.data) - reader.offset} trailing bytes", path=str(path))

    return Checkpoint(
        config=config,
        iteration=iteration,
        params=params,
        adam_step=adam_step,
        adam_m=adam_m,
        adam_v=adam_v,
        generator_state=generator_state,
    )
