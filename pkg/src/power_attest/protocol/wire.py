"""Wire formats for the protocol simulation.

Every structured payload is a sequence of length-prefixed fields: each field
is a little-endian u32 byte count followed by the raw bytes. The same framing
feeds the hash function when messages are signed, so signature inputs are
unambiguous. Trace batches travel as raw little-endian u16 sample words
(12-bit values, the same units the capture decoder emits before shifting).

Transcripts are JSON-lines files, one record per delivered message, with a
sidecar ``<path>.meta.json`` describing the run parameters.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError

_U32 = struct.Struct("<I")


def pack_fields(*fields: bytes) -> bytes:
    parts = []
    for field in fields:
        if not isinstance(field, (bytes, bytearray, memoryview)):
            raise TypeError(f"field must be bytes, got {type(field).__name__}")
        field = bytes(field)
        parts.append(_U32.pack(len(field)))
        parts.append(field)
    return b"".join(parts)


def unpack_fields(blob: bytes, count: int | None = None) -> list[bytes]:
    fields = []
    offset = 0
    total = len(blob)
    while offset < total:
        if offset + 4 > total:
            raise FormatError("truncated field length prefix")
        (length,) = _U32.unpack_from(blob, offset)
        offset += 4
        if offset + length > total:
            raise FormatError("field extends past end of payload")
        fields.append(blob[offset : offset + length])
        offset += length
    if count is not None and len(fields) != count:
        raise FormatError(f"expected {count} fields, found {len(fields)}")
    return fields


def encode_trace_batch(windows) -> bytes:
    """Serialize quantized trace windows (u16 sample arrays) as fields."""
    encoded = []
    for window in windows:
        arr = np.asarray(window)
        if arr.ndim != 1:
            raise FormatError("trace window must be one-dimensional")
        if arr.dtype != np.uint16:
            raise FormatError(f"trace window must be uint16, got {arr.dtype}")
        encoded.append(arr.astype("<u2").tobytes())
    return pack_fields(*encoded)


def decode_trace_batch(blob: bytes) -> list[np.ndarray]:
    windows = []
    for field in unpack_fields(blob):
        if len(field) == 0 or len(field) % 2:
            raise FormatError("trace window field has odd or zero byte count")
        windows.append(np.frombuffer(field, dtype="<u2").astype(np.uint16))
    return windows


def _u32(value: int) -> bytes:
    return _U32.pack(value)


def _parse_u32(field: bytes) -> int:
    if len(field) != 4:
        raise FormatError("expected a 4-byte integer field")
    return _U32.unpack(field)[0]


def _parse_text(field: bytes) -> str:
    try:
        return field.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"text field is not valid UTF-8: {exc}") from exc


@dataclass(frozen=True)
class LaunchRequest:
    """m1: verifier asks the prover to attest an application."""

    tag = "m1"
    nonce: bytes
    app_id: str

    def serialize(self) -> bytes:
        return pack_fields(self.nonce, self.app_id.encode("utf-8"))

    @classmethod
    def parse(cls, payload: bytes) -> "LaunchRequest":
        nonce, app = unpack_fields(payload, 2)
        return cls(nonce=nonce, app_id=_parse_text(app))


@dataclass(frozen=True)
class LaunchReport:
    """m2: prover returns the checksum result and the session TEE key."""

    tag = "m2"
    nonce: bytes
    ciphertext: bytes  # Enc_pkV(prover_id, checksum, tee_public)
    signature: bytes  # Sig_P over H(nonce || prover_id || checksum || tee_public)

    def serialize(self) -> bytes:
        return pack_fields(self.nonce, self.ciphertext, self.signature)

    @classmethod
    def parse(cls, payload: bytes) -> "LaunchReport":
        nonce, ciphertext, signature = unpack_fields(payload, 3)
        return cls(nonce=nonce, ciphertext=ciphertext, signature=signature)


@dataclass(frozen=True)
class ComputeRequest:
    """m3: verifier issues the execution token and trace count."""

    tag = "m3"
    nonce: bytes
    trace_count: int
    token: bytes
    app_id: str
    signature: bytes  # Sig_V over H(nonce || token || app_id || trace_count)

    def serialize(self) -> bytes:
        return pack_fields(
            self.nonce,
            _u32(self.trace_count),
            self.token,
            self.app_id.encode("utf-8"),
            self.signature,
        )

    @classmethod
    def parse(cls, payload: bytes) -> "ComputeRequest":
        nonce, count, token, app, signature = unpack_fields(payload, 5)
        return cls(
            nonce=nonce,
            trace_count=_parse_u32(count),
            token=token,
            app_id=_parse_text(app),
            signature=signature,
        )


@dataclass(frozen=True)
class TraceReport:
    """m4: TEE-sealed batch of captured traces, addressed to the verifier."""

    tag = "m4"
    nonce: bytes
    ciphertext: bytes  # Enc_pkV(trace batch)
    signature: bytes  # Sig_TEE over H(nonce || trace_1 || ... || trace_n)

    def serialize(self) -> bytes:
        return pack_fields(self.nonce, self.ciphertext, self.signature)

    @classmethod
    def parse(cls, payload: bytes) -> "TraceReport":
        nonce, ciphertext, signature = unpack_fields(payload, 3)
        return cls(nonce=nonce, ciphertext=ciphertext, signature=signature)


@dataclass(frozen=True)
class ComputeReport:
    """m5: prover forwards the TEE report with the execution output."""

    tag = "m5"
    nonce: bytes
    trace_report: bytes  # serialized m4, verbatim
    fingerprint: bytes  # H(token || app_id), not covered by the signature
    output: bytes
    signature: bytes  # Sig_P over H(nonce || trace_report || output)

    def serialize(self) -> bytes:
        return pack_fields(
            self.nonce, self.trace_report, self.fingerprint, self.output, self.signature
        )

    @classmethod
    def parse(cls, payload: bytes) -> "ComputeReport":
        nonce, report, fingerprint, output, signature = unpack_fields(payload, 5)
        return cls(
            nonce=nonce,
            trace_report=report,
            fingerprint=fingerprint,
            output=output,
            signature=signature,
        )


@dataclass(frozen=True)
class VerdictRequest:
    """m6: verifier hands the session evidence to the measurement tester."""

    tag = "m6"
    nonce: bytes
    ciphertext: bytes  # Enc_pkMT(token, output, app_id, trace batch)
    signature: bytes  # Sig_V over H(nonce || token || app_id || output || traces)

    def serialize(self) -> bytes:
        return pack_fields(self.nonce, self.ciphertext, self.signature)

    @classmethod
    def parse(cls, payload: bytes) -> "VerdictRequest":
        nonce, ciphertext, signature = unpack_fields(payload, 3)
        return cls(nonce=nonce, ciphertext=ciphertext, signature=signature)


@dataclass(frozen=True)
class VerdictReport:
    """m7: measurement tester returns the attestation bit."""

    tag = "m7"
    nonce: bytes
    ciphertext: bytes  # Enc_pkV(verdict byte)
    signature: bytes  # Sig_MT over H(nonce || verdict byte)

    def serialize(self) -> bytes:
        return pack_fields(self.nonce, self.ciphertext, self.signature)

    @classmethod
    def parse(cls, payload: bytes) -> "VerdictReport":
        nonce, ciphertext, signature = unpack_fields(payload, 3)
        return cls(nonce=nonce, ciphertext=ciphertext, signature=signature)


MESSAGE_TYPES = {
    cls.tag: cls
    for cls in (
        LaunchRequest,
        LaunchReport,
        ComputeRequest,
        TraceReport,
        ComputeReport,
        VerdictRequest,
        VerdictReport,
    )
}


def parse_message(tag: str, payload: bytes):
    try:
        cls = MESSAGE_TYPES[tag]
    except KeyError:
        raise FormatError(f"unknown message tag {tag!r}") from None
    return cls.parse(payload)


def write_transcript(path, records, params: dict) -> Path:
    """Write one JSON object per delivered message plus a metadata sidecar."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    meta = Path(str(path) + ".meta.json")
    meta.write_text(json.dumps(params, sort_keys=True, indent=2) + "\n")
    return path


def read_transcript(path) -> tuple[list[dict], dict]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    meta = Path(str(path) + ".meta.json")
    params = json.loads(meta.read_text()) if meta.exists() else {}
    return records, params
