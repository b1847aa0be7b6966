"""Cryptographic primitives for the protocol simulation.

Signatures are Ed25519; public-key encryption is an ECIES-style hybrid of
X25519, HKDF-SHA256, and AES-256-GCM; the hash is SHA-256. Randomness comes
from per-party deterministic byte generators so whole protocol runs replay
bit-for-bit under a fixed seed. That determinism is simulation-grade: a
real deployment would draw keys and nonces from OS entropy instead.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..errors import ProtocolError
from .wire import pack_fields

NONCE_BYTES = 16

PROTOCOL_PARAMETERS = {
    "signature": "Ed25519",
    "encryption": "X25519+HKDF-SHA256+AES-256-GCM",
    "hash": "SHA-256",
    "nonce_bytes": NONCE_BYTES,
    "framing": "u32le-length-prefix",
    "trace_encoding": "u16le-12bit",
    "clock": "virtual",
}

_ECIES_INFO = b"power-attest-ecies-v1"


class DecryptionError(ProtocolError):
    """Hybrid decryption failed (bad point, truncated blob, or AEAD tag)."""


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _canon(value) -> bytes:
    if isinstance(value, bytes):
        return value
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, int):
        return value.to_bytes(8, "little", signed=False)
    raise TypeError(f"cannot derive entropy from {type(value).__name__}")


class Drbg:
    """Deterministic byte generator keyed by arbitrary labels."""

    def __init__(self, *entropy) -> None:
        material = sha256(pack_fields(*(_canon(e) for e in entropy)))
        self._material = material
        key = np.frombuffer(material[:16], dtype=np.uint64)
        self._rng = np.random.Generator(np.random.Philox(key=key))

    def bytes(self, n: int) -> bytes:
        return self._rng.bytes(n)

    def nonce(self) -> bytes:
        return self.bytes(NONCE_BYTES)

    def child(self, *labels) -> "Drbg":
        return Drbg(self._material, *labels)


@dataclass(frozen=True)
class SigningKeyPair:
    private: Ed25519PrivateKey
    public_bytes: bytes

    @classmethod
    def generate(cls, drbg: Drbg) -> "SigningKeyPair":
        private = Ed25519PrivateKey.from_private_bytes(drbg.bytes(32))
        return cls(
            private=private, public_bytes=private.public_key().public_bytes_raw()
        )

    def sign(self, data: bytes) -> bytes:
        return self.private.sign(data)


def verify_signature(public_bytes: bytes, signature: bytes, data: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_bytes).verify(signature, data)
        return True
    except (InvalidSignature, ValueError):
        return False


@dataclass(frozen=True)
class EncryptionKeyPair:
    private: X25519PrivateKey
    public_bytes: bytes

    @classmethod
    def generate(cls, drbg: Drbg) -> "EncryptionKeyPair":
        private = X25519PrivateKey.from_private_bytes(drbg.bytes(32))
        return cls(
            private=private, public_bytes=private.public_key().public_bytes_raw()
        )


def _derive_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    return HKDF(
        algorithm=SHA256(), length=32, salt=None, info=_ECIES_INFO
    ).derive(shared + eph_pub + recipient_pub)


def ecies_encrypt(recipient_pub: bytes, plaintext: bytes, drbg: Drbg) -> bytes:
    """Encrypt to a public key: eph_pub(32) || nonce(12) || ciphertext."""
    eph_private = X25519PrivateKey.from_private_bytes(drbg.bytes(32))
    shared = eph_private.exchange(X25519PublicKey.from_public_bytes(recipient_pub))
    eph_pub = eph_private.public_key().public_bytes_raw()
    key = _derive_key(shared, eph_pub, recipient_pub)
    nonce = drbg.bytes(12)
    return eph_pub + nonce + AESGCM(key).encrypt(nonce, plaintext, None)


def ecies_decrypt(keypair: EncryptionKeyPair, blob: bytes) -> bytes:
    if len(blob) < 32 + 12 + 16:
        raise DecryptionError("ciphertext too short")
    eph_pub, nonce, ciphertext = blob[:32], blob[32:44], blob[44:]
    try:
        shared = keypair.private.exchange(
            X25519PublicKey.from_public_bytes(eph_pub)
        )
    except ValueError as exc:
        raise DecryptionError(f"bad ephemeral point: {exc}") from exc
    key = _derive_key(shared, eph_pub, keypair.public_bytes)
    try:
        return AESGCM(key).decrypt(nonce, ciphertext, None)
    except InvalidTag as exc:
        raise DecryptionError("authentication tag mismatch") from exc
