"""Verifier/prover/tester protocol simulation with virtual time."""

from .actors import (
    ABORT_BAD_SIGNATURE,
    ABORT_CHECKSUM_MISMATCH,
    ABORT_DECRYPTION_FAILED,
    ABORT_FINGERPRINT_MISMATCH,
    ABORT_IDENTITY_MISMATCH,
    ABORT_MALFORMED,
    ABORT_REASONS,
    ABORT_STALE_NONCE,
    ABORT_TIMING_EXCEEDED,
    ABORT_UNKNOWN_APPLICATION,
    PHASE_ORDER,
    ChecksumModel,
    MixtureSource,
    PoolSource,
    ProverBehavior,
    Session,
    SessionRecord,
    World,
)
from .attacks import (
    ATTACK_NAMES,
    AttackResult,
    CampaignResult,
    attack_application_substitution,
    attack_false_result,
    attack_measurement_substitution,
    run_attack,
    run_honest_campaign,
)
from .crypto import (
    Drbg,
    EncryptionKeyPair,
    PROTOCOL_PARAMETERS,
    SigningKeyPair,
    ecies_decrypt,
    ecies_encrypt,
    sha256,
    verify_signature,
)
from .wire import (
    ComputeReport,
    ComputeRequest,
    LaunchReport,
    LaunchRequest,
    TraceReport,
    VerdictReport,
    VerdictRequest,
    decode_trace_batch,
    encode_trace_batch,
    pack_fields,
    parse_message,
    read_transcript,
    unpack_fields,
    write_transcript,
)

__all__ = [
    "ABORT_BAD_SIGNATURE",
    "ABORT_CHECKSUM_MISMATCH",
    "ABORT_DECRYPTION_FAILED",
    "ABORT_FINGERPRINT_MISMATCH",
    "ABORT_IDENTITY_MISMATCH",
    "ABORT_MALFORMED",
    "ABORT_REASONS",
    "ABORT_STALE_NONCE",
    "ABORT_TIMING_EXCEEDED",
    "ABORT_UNKNOWN_APPLICATION",
    "ATTACK_NAMES",
    "AttackResult",
    "CampaignResult",
    "ChecksumModel",
    "ComputeReport",
    "ComputeRequest",
    "Drbg",
    "EncryptionKeyPair",
    "LaunchReport",
    "LaunchRequest",
    "MixtureSource",
    "PHASE_ORDER",
    "PROTOCOL_PARAMETERS",
    "PoolSource",
    "ProverBehavior",
    "Session",
    "SessionRecord",
    "SigningKeyPair",
    "TraceReport",
    "VerdictReport",
    "VerdictRequest",
    "World",
    "attack_application_substitution",
    "attack_false_result",
    "attack_measurement_substitution",
    "decode_trace_batch",
    "ecies_decrypt",
    "ecies_encrypt",
    "encode_trace_batch",
    "pack_fields",
    "parse_message",
    "read_transcript",
    "run_attack",
    "run_honest_campaign",
    "sha256",
    "unpack_fields",
    "verify_signature",
    "write_transcript",
]
