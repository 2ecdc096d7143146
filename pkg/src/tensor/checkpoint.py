"""
Parameter Checkpoints

Container layout (all integers little-endian):

    offset 0   8 bytes   magic b"SPCKPT01"
    offset 8   8 bytes   uint64 length N of the JSON header
    offset 16  N bytes   UTF-8 JSON header, keys sorted:
                         {"meta": {...},
                          "records": [{"name", "shape", "offset", "count"}, ...]}
    offset 16+N          float64 little-endian payload; record values start
                         at payload byte offset `offset` and span `count` values

Records appear in the order given, so saving the same parameters twice
produces identical bytes and loading restores every value bit-exactly.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from src.core.exceptions import DataFormatError, MissingArtifactError
from src.tensor.autodiff import Tensor


logger = logging.getLogger(__name__)

MAGIC = b"SPCKPT01"


def encode_params(params: Mapping[str, Union[Tensor, np.ndarray]], meta: Optional[dict] = None) -> bytes:
    records = []
    payload = []
    offset = 0
    for name, value in params.items():
        array = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        raw = np.ascontiguousarray(array, dtype="<f8").tobytes()
        records.append({"name": name, "shape": list(array.shape), "offset": offset, "count": int(array.size)})
        payload.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "records": records}, sort_keys=True, separators=(",", ":"))
    header_bytes = header.encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(payload)


def decode_params(blob: bytes, source: str = "<bytes>") -> Tuple[Dict[str, np.ndarray], dict]:
    """
    Parse a checkpoint container

    Raises:
        DataFormatError: naming the source and the byte offset of the problem
    """
    if blob[:8] != MAGIC:
        raise DataFormatError(f"{source}: bad magic at offset 0")
    if len(blob) < 16:
        raise DataFormatError(f"{source}: truncated header length at offset 8")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    if len(blob) < 16 + header_len:
        raise DataFormatError(f"{source}: truncated JSON header at offset {len(blob)}")
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"{source}: malformed JSON header at offset 16: {e}") from e

    base = 16 + header_len
    params = {}
    for record in header["records"]:
        start = base + record["offset"]
        end = start + 8 * record["count"]
        if end > len(blob):
            raise DataFormatError(f"{source}: record {record['name']!r} truncated at offset {len(blob)}")
        values = np.frombuffer(blob[start:end], dtype="<f8").astype(np.float64)
        params[record["name"]] = values.reshape(record["shape"])
    return params, header.get("meta", {})


def save_checkpoint(
    path: Path,
    params: Mapping[str, Union[Tensor, np.ndarray]],
    architecture: Optional[Dict[str, Any]] = None,
    meta: Optional[dict] = None,
) -> Path:
    """
    Write parameters and, when given, the architecture JSON sidecar

    The sidecar lives beside the checkpoint as <name>.json.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(params, meta))
    if architecture is not None:
        sidecar_path(path).write_text(json.dumps(architecture, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug(f"Saved checkpoint {path} ({len(params)} records)")
    return path


def load_checkpoint(path: Path) -> Tuple[Dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Checkpoint not found: {path}")
    return decode_params(path.read_bytes(), source=str(path))


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def load_architecture(path: Path) -> Dict[str, Any]:
    sidecar = sidecar_path(path)
    if not sidecar.exists():
        raise MissingArtifactError(f"Architecture sidecar not found: {sidecar}")
    return json.loads(sidecar.read_text(encoding="utf-8"))
