"""Versioned single-file binary container for model state.

Layout: 4-byte magic, 4-byte little-endian format version, pickled
payload. The version is checked on load so files written by a future
format fail loudly instead of half-loading.
"""

from __future__ import annotations

import pickle
import struct

from .errors import ModelFormatError

MAGIC = b"CLNK"
FORMAT_VERSION = 1


def save_payload(path, payload) -> None:
    data = pickle.dumps(payload, protocol=4)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(data)


def load_payload(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise ModelFormatError(f"not a model file: {path}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version} (expected {FORMAT_VERSION})"
        )
    try:
        return pickle.loads(blob[8:])
    except Exception as exc:
        raise ModelFormatError(f"corrupt model file: {path}: {exc}") from exc
