import json
import logging
import os
import struct
from pathlib import Path
from typing import Any

import numpy as np

from src.exceptions import ContainerFormatError

logger = logging.getLogger(__name__)

_PREFIX = struct.Struct("<4sHI")


def pack_container(magic: bytes, version: int, header: dict[str, Any], arrays: dict[str, np.ndarray]) -> bytes:
    """Serialize a header and named arrays.

    Layout: 4-byte magic, u16 version, u32 header length, sorted-key JSON header, then the raw
    little-endian array bytes in name order. The header lists each array's dtype, shape and offset.
    """
    index, blobs, offset = [], [], 0
    for name in sorted(arrays):
        array = np.ascontiguousarray(arrays[name])
        array = array.astype(array.dtype.newbyteorder("<"), copy=False)
        raw = array.tobytes()
        index.append({"name": name, "dtype": array.dtype.str, "shape": list(array.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header_bytes = json.dumps({**header, "arrays": index}, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(magic, version, len(header_bytes)) + header_bytes + b"".join(blobs)


def unpack_container(blob: bytes, magic: bytes, max_version: int) -> tuple[int, dict[str, Any], dict[str, np.ndarray]]:
    """Inverse of `pack_container`.

    :returns: (version, header, arrays)
    """
    if len(blob) < _PREFIX.size:
        raise ContainerFormatError(f"Truncated {magic.decode()} container")
    found, version, header_len = _PREFIX.unpack_from(blob)
    if found != magic:
        raise ContainerFormatError(f"Bad magic {found!r}, expected {magic!r}")
    if version > max_version:
        raise ContainerFormatError(f"Unsupported {magic.decode()} version {version}")
    try:
        header = json.loads(blob[_PREFIX.size : _PREFIX.size + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(f"Invalid {magic.decode()} header: {e}") from e

    base = _PREFIX.size + header_len
    arrays = {}
    for entry in header.pop("arrays", []):
        start = base + entry["offset"]
        if start + entry["nbytes"] > len(blob):
            raise ContainerFormatError(f"Array '{entry['name']}' runs past the end of the container")
        flat = np.frombuffer(blob, dtype=np.dtype(entry["dtype"]), count=entry["nbytes"] // np.dtype(entry["dtype"]).itemsize, offset=start)
        arrays[entry["name"]] = flat.reshape(entry["shape"]).copy()
    return version, header, arrays


def atomic_write(path: Path, blob: bytes) -> None:
    """Write via a temporary sibling and rename, so readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
