"""Binary container for spectral-triple models, plus a JSON export.

Layout (all integers little-endian):

    magic  "KOOPMDL1"                      8 bytes
    version, N, M, h, d                    5 x u32
    dictionary hash                        32 bytes
    eigenvalues                            N complex128
    eigenfunction table (row per x0)       M*N complex128
    modes (row per output)                 h*N complex128
    decode matrix (row per output)         h*d float64
    metadata JSON                          u32 length + payload
    CRC32 of everything above              u32

Complex numbers are stored as adjacent (real, imaginary) doubles. Writes
are atomic (temp file + rename) and loads are all-or-nothing.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .errors import (
    ModelChecksumError,
    ModelFormatError,
    ModelTruncatedError,
    ModelVersionError,
)
from .spectral import ModelMetadata, SpectralTriple

MAGIC = b"KOOPMDL1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<5I")


def file_layout(n: int, m: int, h: int, d: int, metadata_bytes: int) -> dict:
    """Byte offsets and sizes for a model file with the given dimensions."""
    triple_entries = (1 + m + h) * n
    sizes = {
        "magic": len(MAGIC),
        "header": _HEADER.size,
        "dict_hash": 32,
        "triple": 16 * triple_entries,
        "decode": 8 * h * d,
        "metadata": 4 + metadata_bytes,
        "crc": 4,
    }
    sizes["total"] = sum(sizes.values())
    return sizes


def _encode(triple: SpectralTriple) -> bytes:
    meta = triple.metadata
    meta_doc = {
        "feature_names": list(meta.feature_names),
        "output_names": list(meta.output_names),
        "trajectory_ids": list(meta.trajectory_ids),
    }
    meta_bytes = json.dumps(meta_doc, sort_keys=True,
                            separators=(",", ":")).encode()
    parts = [
        MAGIC,
        _HEADER.pack(FORMAT_VERSION, triple.n_eigenvalues,
                     triple.n_initial_conditions, triple.n_outputs,
                     triple.lifted_dim),
        meta.dict_hash,
        np.ascontiguousarray(triple.eigenvalues, dtype="<c16").tobytes(),
        np.ascontiguousarray(triple.eigenfunction_values, dtype="<c16").tobytes(),
        np.ascontiguousarray(triple.modes, dtype="<c16").tobytes(),
        np.ascontiguousarray(triple.decode, dtype="<f8").tobytes(),
        struct.pack("<I", len(meta_bytes)),
        meta_bytes,
    ]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(triple: SpectralTriple, path) -> None:
    """Serialize a spectral triple; the write is atomic."""
    path = Path(path)
    payload = _encode(triple)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."),
                                    prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise ModelTruncatedError(
                f"model file ends inside {what}: needed {count} bytes at "
                f"offset {self.pos}, file has {len(self.data)}"
            )
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk


def load_model(path) -> SpectralTriple:
    """Load a model file; raises a distinct error for each failure mode."""
    data = Path(path).read_bytes()
    reader = _Reader(data)
    magic = reader.take(len(MAGIC), "magic bytes")
    if magic != MAGIC:
        raise ModelVersionError(
            f"not a model file: bad magic {magic!r}"
        )
    version, n, m, h, d = _HEADER.unpack(reader.take(_HEADER.size, "header"))
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format version {version} "
            f"(supported: {FORMAT_VERSION})"
        )
    dict_hash = reader.take(32, "dictionary hash")
    eigenvalues = np.frombuffer(reader.take(16 * n, "eigenvalues"),
                                dtype="<c16").astype(complex)
    phi = np.frombuffer(reader.take(16 * m * n, "eigenfunction table"),
                        dtype="<c16").astype(complex).reshape(m, n)
    modes = np.frombuffer(reader.take(16 * h * n, "modes"),
                          dtype="<c16").astype(complex).reshape(h, n)
    decode = np.frombuffer(reader.take(8 * h * d, "decode matrix"),
                           dtype="<f8").astype(float).reshape(h, d)
    (meta_len,) = struct.unpack("<I", reader.take(4, "metadata length"))
    meta_bytes = reader.take(meta_len, "metadata")
    (crc_stored,) = struct.unpack("<I", reader.take(4, "checksum"))
    if reader.pos != len(data):
        raise ModelFormatError(
            f"{len(data) - reader.pos} unexpected trailing bytes"
        )
    crc_actual = zlib.crc32(data[:len(data) - 4])
    if crc_stored != crc_actual:
        raise ModelChecksumError(
            f"checksum mismatch: stored {crc_stored:#010x}, computed "
            f"{crc_actual:#010x}"
        )
    try:
        meta_doc = json.loads(meta_bytes.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"metadata block is not valid JSON: {exc}") from exc
    metadata = ModelMetadata(
        dict_hash=dict_hash,
        feature_names=tuple(meta_doc.get("feature_names", [])),
        output_names=tuple(meta_doc.get("output_names", [])),
        trajectory_ids=tuple(meta_doc.get("trajectory_ids", [])),
    )
    return SpectralTriple(
        eigenvalues=eigenvalues,
        eigenfunction_values=phi,
        modes=modes,
        decode=decode,
        metadata=metadata,
    )


def _complex_pairs(array: np.ndarray):
    if array.ndim == 1:
        return [[z.real, z.imag] for z in array]
    return [[[z.real, z.imag] for z in row] for row in array]


def export_model_json(triple: SpectralTriple, path) -> None:
    """Human-inspectable mirror of the binary model; not read back."""
    doc = {
        "format": "koopman-model",
        "version": FORMAT_VERSION,
        "N": triple.n_eigenvalues,
        "M": triple.n_initial_conditions,
        "h": triple.n_outputs,
        "d": triple.lifted_dim,
        "dict_hash": triple.metadata.dict_hash.hex(),
        "eigenvalues": _complex_pairs(triple.eigenvalues),
        "eigenfunction_values": _complex_pairs(triple.eigenfunction_values),
        "modes": _complex_pairs(triple.modes),
        "decode": [[float(x) for x in row] for row in triple.decode],
        "feature_names": list(triple.metadata.feature_names),
        "output_names": list(triple.metadata.output_names),
        "trajectory_ids": list(triple.metadata.trajectory_ids),
    }
    text = json.dumps(doc, sort_keys=True, indent=2)
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."),
                                    prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text + "\n")
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
