"""Protocol parties and the session driver.

Three parties exchange messages over an adversary-observable channel: the
verifier V, the prover P (hosting a TEE that seals trace reports), and the
measurement tester MT that holds the power templates. A session walks the
fixed sequence m1..m7:

  V -> P   m1  launch request (nonce, app id)
  P -> V   m2  checksum result and TEE public key, signed by P
  V -> P   m3  execution token and trace count, signed by V
  TEE -> P m4  sealed trace batch, signed by the TEE (local hop)
  P -> V   m5  m4 verbatim plus execution output, signed by P
  V -> MT  m6  token, output, and traces for the tester, signed by V
  MT -> V  m7  attestation verdict bit, signed by MT

Every received nonce is checked against a lifetime seen-set, signatures are
verified before content is trusted, and the launch round-trip is timed on a
virtual clock. Any failed check aborts the session with a named reason.
Actors share no state except long-lived per-party stores; all coordination
happens through delivered messages, so sessions can also run with one thread
per party and produce the identical transcript.
"""

from __future__ import annotations

import queue as queue_module
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import FormatError, ProtocolError
from ..matcher import attest_multi
from ..synth import default_profiles, generate_window, profile_bucket, trace_seed
from ..template import (
    DEFAULT_FILTER_ORDER,
    DEFAULT_FILTER_WINDOW,
    DEFAULT_PERCENTILE,
    build_template,
    calibrate_threshold,
)
from ..trace import ADC_LEVELS, SAMPLE_RATE_HZ, Trace, quantize_samples
from .crypto import (
    DecryptionError,
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
    unpack_fields,
    write_transcript,
)

ABORT_BAD_SIGNATURE = "BadSignature"
ABORT_STALE_NONCE = "StaleNonce"
ABORT_TIMING_EXCEEDED = "TimingExceeded"
ABORT_CHECKSUM_MISMATCH = "ChecksumMismatch"
ABORT_FINGERPRINT_MISMATCH = "FingerprintMismatch"
ABORT_UNKNOWN_APPLICATION = "UnknownApplication"
ABORT_DECRYPTION_FAILED = "DecryptionFailed"
ABORT_MALFORMED = "MalformedMessage"
ABORT_IDENTITY_MISMATCH = "IdentityMismatch"

ABORT_REASONS = (
    ABORT_BAD_SIGNATURE,
    ABORT_STALE_NONCE,
    ABORT_TIMING_EXCEEDED,
    ABORT_CHECKSUM_MISMATCH,
    ABORT_FINGERPRINT_MISMATCH,
    ABORT_UNKNOWN_APPLICATION,
    ABORT_DECRYPTION_FAILED,
    ABORT_MALFORMED,
    ABORT_IDENTITY_MISMATCH,
)

PHASE_SETUP = "setup"
PHASE_LAUNCH_PENDING = "launch-pending"
PHASE_LAUNCHED = "launched"
PHASE_COMPUTE_PENDING = "compute-pending"
PHASE_AWAITING_VERDICT = "awaiting-verdict"
PHASE_DONE = "done"
PHASE_ABORTED = "aborted"

PHASE_ORDER = (
    PHASE_SETUP,
    PHASE_LAUNCH_PENDING,
    PHASE_LAUNCHED,
    PHASE_COMPUTE_PENDING,
    PHASE_AWAITING_VERDICT,
    PHASE_DONE,
)

_OUTPUT_DOMAIN = b"app-output"


class _Abort(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class ChecksumModel:
    """Iterated-hash memory checksum with a simulated execution time.

    A manipulated checksum routine pays a fixed relative time penalty, which
    is what the verifier's round-trip deadline is meant to catch.
    """

    iterations: int = 64
    seconds_per_iteration: float = 5e-4
    manipulation_penalty: float = 0.25

    def result(self, nonce: bytes, image: bytes) -> bytes:
        digest = sha256(pack_fields(nonce, image))
        for _ in range(self.iterations - 1):
            digest = sha256(digest)
        return digest

    def base_duration(self) -> float:
        return self.iterations * self.seconds_per_iteration

    def duration(self, *, inflated: bool) -> float:
        penalty = self.manipulation_penalty if inflated else 0.0
        return self.base_duration() * (1.0 + penalty)


class PoolSource:
    """Draws quantized windows from a fixed pool, without replacement."""

    def __init__(self, windows: np.ndarray, rng: np.random.Generator) -> None:
        self.windows = windows
        self._rng = rng

    def draw(self, count: int) -> np.ndarray:
        total = self.windows.shape[0]
        if count > total:
            raise ProtocolError(f"pool holds {total} windows, need {count}")
        indices = self._rng.choice(total, size=count, replace=False)
        return self.windows[indices]


class MixtureSource:
    """Per-trace Bernoulli mix of two window pools (drawn with replacement)."""

    def __init__(
        self,
        primary: np.ndarray,
        decoy: np.ndarray,
        q: float,
        rng: np.random.Generator,
    ) -> None:
        if not 0.0 <= q <= 1.0:
            raise ProtocolError(f"mixture weight must lie in [0, 1], got {q}")
        self.primary = primary
        self.decoy = decoy
        self.q = q
        self._rng = rng

    def draw(self, count: int) -> np.ndarray:
        take_primary = self._rng.random(count) < self.q
        rows = np.empty((count, self.primary.shape[1]), dtype=np.uint16)
        for i, primary in enumerate(take_primary):
            pool = self.primary if primary else self.decoy
            rows[i] = pool[self._rng.integers(pool.shape[0])]
        return rows


@dataclass
class ProverBehavior:
    """Deviations from the honest prover, for attack simulations.

    trace_source reroutes the TEE capture (the TEE still signs whatever ran);
    the m4_* knobs bypass the TEE entirely, which the verifier should catch.
    """

    image_tamper: bool = False
    timing_inflation: bool = False
    trace_source: object | None = None
    m4_replay: bytes | None = None
    m4_fresh_nonce: bool = False
    m4_forge: bool = False

    def wants_tee_capture(self) -> bool:
        return self.m4_replay is None and not self.m4_forge


@dataclass(frozen=True)
class PartyKeys:
    role: str
    signing: SigningKeyPair
    encryption: EncryptionKeyPair


@dataclass(frozen=True)
class _Send:
    sender: str
    receiver: str
    tag: str
    payload: bytes
    delay: float = 0.0
    local: bool = False


@dataclass
class SessionRecord:
    session_id: int
    app_id: str
    completed: bool
    verdict: int | None
    abort_reason: str | None
    abort_tag: str | None
    records: list[dict] = field(repr=False, default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.completed and self.verdict == 1


class _TeeUnit:
    """Trace capture and sealing on the prover's machine."""

    def __init__(self, session: "Session") -> None:
        self._session = session
        self.drbg = session.drbg_for("TEE")
        self.keys = SigningKeyPair.generate(self.drbg.child("sign"))

    def produce(self, source, count: int) -> tuple[bytes, float]:
        world = self._session.world
        windows = source.draw(count)
        nonce = self.drbg.nonce()
        ciphertext = ecies_encrypt(
            world.keys["V"].encryption.public_bytes,
            encode_trace_batch(windows),
            self.drbg,
        )
        digest = sha256(pack_fields(nonce, *(w.astype("<u2").tobytes() for w in windows)))
        report = TraceReport(
            nonce=nonce, ciphertext=ciphertext, signature=self.keys.sign(digest)
        )
        capture_seconds = count * windows.shape[1] / SAMPLE_RATE_HZ
        return report.serialize(), capture_seconds


class VerifierActor:
    name = "V"

    def __init__(self, session: "Session") -> None:
        self.session = session
        self.world = session.world
        self.drbg = session.drbg_for("V")
        self.phase = PHASE_SETUP
        self.phase_history = [PHASE_SETUP]
        self.launch_nonce = None
        self.launch_sent_at = None
        self.expected_checksum = None
        self.tee_public = None
        self.token = None
        self.output = None
        self.traces = None
        self.verdict = None

    def _set_phase(self, phase: str) -> None:
        if PHASE_ORDER.index(phase) <= PHASE_ORDER.index(self.phase):
            raise ProtocolError(
                f"verifier cannot move from {self.phase!r} back to {phase!r}"
            )
        self.phase = phase
        self.phase_history.append(phase)

    def start(self) -> list[_Send]:
        world = self.world
        app_id = self.session.app_id
        if app_id not in world.images:
            raise ProtocolError(f"verifier has no reference image for {app_id!r}")
        self.launch_nonce = self.drbg.nonce()
        self.expected_checksum = world.checksum.result(
            self.launch_nonce, world.images[app_id]
        )
        self.launch_sent_at = world.clock
        self._set_phase(PHASE_LAUNCH_PENDING)
        message = LaunchRequest(nonce=self.launch_nonce, app_id=app_id)
        return [_Send("V", "P", "m1", message.serialize())]

    def handle(self, tag: str, payload: bytes) -> list[_Send]:
        if tag == "m2":
            return self._on_launch_report(payload)
        if tag == "m5":
            return self._on_compute_report(payload)
        if tag == "m7":
            return self._on_verdict_report(payload)
        raise _Abort(ABORT_MALFORMED)

    def _check_fresh(self, nonce: bytes) -> None:
        seen = self.world.seen_nonces["V"]
        if nonce in seen:
            raise _Abort(ABORT_STALE_NONCE)
        seen.add(nonce)

    def _on_launch_report(self, payload: bytes) -> list[_Send]:
        world = self.world
        try:
            message = LaunchReport.parse(payload)
        except FormatError:
            raise _Abort(ABORT_MALFORMED) from None
        self._check_fresh(message.nonce)
        try:
            plain = ecies_decrypt(world.keys["V"].encryption, message.ciphertext)
        except DecryptionError:
            raise _Abort(ABORT_DECRYPTION_FAILED) from None
        try:
            prover_id, checksum, tee_public = unpack_fields(plain, 3)
        except FormatError:
            raise _Abort(ABORT_MALFORMED) from None
        digest = sha256(pack_fields(message.nonce, prover_id, checksum, tee_public))
        if not verify_signature(
            world.keys["P"].signing.public_bytes, message.signature, digest
        ):
            raise _Abort(ABORT_BAD_SIGNATURE)
        if prover_id != world.prover_id.encode("utf-8"):
            raise _Abort(ABORT_IDENTITY_MISMATCH)
        elapsed = world.clock - self.launch_sent_at
        allowed = 2.0 * world.latency + world.checksum.base_duration() * (
            1.0 + world.timing_slack
        )
        if elapsed > allowed:
            raise _Abort(ABORT_TIMING_EXCEEDED)
        if checksum != self.expected_checksum:
            raise _Abort(ABORT_CHECKSUM_MISMATCH)
        self.tee_public = tee_public
        self._set_phase(PHASE_LAUNCHED)
        return self._issue_compute_request()

    def _issue_compute_request(self) -> list[_Send]:
        world = self.world
        nonce = self.drbg.nonce()
        self.token = self.drbg.bytes(16)
        count = self.session.trace_count
        app_bytes = self.session.app_id.encode("utf-8")
        digest = sha256(
            pack_fields(nonce, self.token, app_bytes, count.to_bytes(4, "little"))
        )
        message = ComputeRequest(
            nonce=nonce,
            trace_count=count,
            token=self.token,
            app_id=self.session.app_id,
            signature=world.keys["V"].signing.sign(digest),
        )
        self._set_phase(PHASE_COMPUTE_PENDING)
        return [_Send("V", "P", "m3", message.serialize())]

    def _on_compute_report(self, payload: bytes) -> list[_Send]:
        world = self.world
        try:
            message = ComputeReport.parse(payload)
        except FormatError:
            raise _Abort(ABORT_MALFORMED) from None
        self._check_fresh(message.nonce)
        outer_digest = sha256(
            pack_fields(message.nonce, message.trace_report, message.output)
        )
        if not verify_signature(
            world.keys["P"].signing.public_bytes, message.signature, outer_digest
        ):
            raise _Abort(ABORT_BAD_SIGNATURE)
        expected_fp = sha256(
            pack_fields(self.token, self.session.app_id.encode("utf-8"))
        )
        if message.fingerprint != expected_fp:
            raise _Abort(ABORT_FINGERPRINT_MISMATCH)
        try:
            report = TraceReport.parse(message.trace_report)
        except FormatError:
            raise _Abort(ABORT_MALFORMED) from None
        self._check_fresh(report.nonce)
        try:
            batch_blob = ecies_decrypt(world.keys["V"].encryption, report.ciphertext)
            windows = decode_trace_batch(batch_blob)
        except (DecryptionError, FormatError):
            raise _Abort(ABORT_DECRYPTION_FAILED) from None
        inner_digest = sha256(
            pack_fields(report.nonce, *(w.astype("<u2").tobytes() for w in windows))
        )
        if not verify_signature(self.tee_public, report.signature, inner_digest):
            raise _Abort(ABORT_BAD_SIGNATURE)
        size = world.buckets[self.session.app_id].size
        if len(windows) != self.session.trace_count or any(
            w.shape[0] != size for w in windows
        ):
            raise _Abort(ABORT_MALFORMED)
        self.output = message.output
        self.traces = windows
        return self._issue_verdict_request()

    def _issue_verdict_request(self) -> list[_Send]:
        world = self.world
        nonce = self.drbg.nonce()
        app_bytes = self.session.app_id.encode("utf-8")
        batch = encode_trace_batch(self.traces)
        plain = pack_fields(self.token, self.output, app_bytes, batch)
        ciphertext = ecies_encrypt(
            world.keys["MT"].encryption.public_bytes, plain, self.drbg
        )
        digest = sha256(
            pack_fields(
                nonce,
                self.token,
                app_bytes,
                self.output,
                *(w.astype("<u2").tobytes() for w in self.traces),
            )
        )
        message = VerdictRequest(
            nonce=nonce,
            ciphertext=ciphertext,
            signature=world.keys["V"].signing.sign(digest),
        )
        self._set_phase(PHASE_AWAITING_VERDICT)
        return [_Send("V", "MT", "m6", message.serialize())]

    def _on_verdict_report(self, payload: bytes) -> list[_Send]:
        world = self.world
        try:
            message = VerdictReport.parse(payload)
        except FormatError:
            raise _Abort(ABORT_MALFORMED) from None
        self._check_fresh(message.nonce)
        try:
            plain = ecies_decrypt(world.keys["V"].encryption, message.ciphertext)
        except DecryptionError:
            raise _Abort(ABORT_DECRYPTION_FAILED) from None
        digest = sha256(pack_fields(message.nonce, plain))
        if not verify_signature(
            world.keys["MT"].signing.public_bytes, message.signature, digest
        ):
            raise _Abort(ABORT_BAD_SIGNATURE)
        if len(plain) != 1 or plain[0] not in (0, 1):
            raise _Abort(ABORT_MALFORMED)
        self.verdict = plain[0]
        self._set_phase(PHASE_DONE)
        return []


class ProverActor:
    name = "P"

    def __init__(self, session: "Session", behavior: ProverBehavior) -> None:
        self.session = session
        self.world = session.world
        self.behavior = behavior
        self.drbg = session.drbg_for("P")
        self.tee = None
        self.token = None
        self.output = None

    def handle(self, tag: str, payload: bytes) -> list[_Send]:
        if tag == "m1":
            return self._on_launch_request(payload)
        if tag == "m3":
            return self._on_compute_request(payload)
        if tag == "m4":
            return [self._compute_report_send(payload)]
        raise _Abort(ABORT_MALFORMED)

    def _check_fresh(self, nonce: bytes) -> None:
        seen = self.world.seen_nonces["P"]
        if nonce in seen:
            raise _Abort(ABORT_STALE_NONCE)
        seen.add(nonce)

    def _on_launch_request(self, payload: bytes) -> list[_Send]:
        world = self.world
        try:
            message = LaunchRequest.parse(payload)
        except FormatError:
            raise _Abort(ABORT_MALFORMED) from None
        self._check_fresh(message.nonce)
        if message.app_id not in world.images:
            raise _Abort(ABORT_UNKNOWN_APPLICATION)
        image = world.images[message.app_id]
        if self.behavior.image_tamper:
            image = bytes([image[0] ^ 0xFF]) + image[1:]
        checksum = world.checksum.result(message.nonce, image)
        duration = world.checksum.duration(inflated=self.behavior.timing_inflation)
        self.tee = _TeeUnit(self.session)
        nonce = self.drbg.nonce()
        prover_id = world.prover_id.encode("utf-8")
        plain = pack_fields(prover_id, checksum, self.tee.keys.public_bytes)
        ciphertext = ecies_encrypt(
            world.keys["V"].encryption.public_bytes, plain, self.drbg
        )
        digest = sha256(
            pack_fields(nonce, prover_id, checksum, self.tee.keys.public_bytes)
        )
        message_out = LaunchReport(
            nonce=nonce,
            ciphertext=ciphertext,
            signature=world.keys["P"].signing.sign(digest),
        )
        return [_Send("P", "V", "m2", message_out.serialize(), delay=duration)]

    def _on_compute_request(self, payload: bytes) -> list[_Send]:
        world = self.world
        try:
            message = ComputeRequest.parse(payload)
        except FormatError:
            raise _Abort(ABORT_MALFORMED) from None
        self._check_fresh(message.nonce)
        digest = sha256(
            pack_fields(
                message.nonce,
                message.token,
                message.app_id.encode("utf-8"),
                message.trace_count.to_bytes(4, "little"),
            )
        )
        if not verify_signature(
            world.keys["V"].signing.public_bytes, message.signature, digest
        ):
            raise _Abort(ABORT_BAD_SIGNATURE)
        tokens = self.world.seen_tokens["P"]
        if message.token in tokens:
            raise _Abort(ABORT_STALE_NONCE)
        tokens.add(message.token)
        if message.app_id not in world.images:
            raise _Abort(ABORT_UNKNOWN_APPLICATION)
        if self.tee is None:
            raise _Abort(ABORT_MALFORMED)
        self.token = message.token
        self.output = sha256(
            pack_fields(_OUTPUT_DOMAIN, message.app_id.encode("utf-8"), message.token)
        )
        behavior = self.behavior
        if behavior.wants_tee_capture():
            source = behavior.trace_source or world.honest_source(message.app_id)
            report_bytes, capture_seconds = self.tee.produce(
                source, message.trace_count
            )
            return [
                _Send("TEE", "P", "m4", report_bytes, delay=capture_seconds, local=True)
            ]
        return [self._compute_report_send(self._fabricate_trace_report(message))]

    def _fabricate_trace_report(self, message: ComputeRequest) -> bytes:
        """Build an m4 without the TEE's signing key (replay or forgery)."""
        world = self.world
        if self.behavior.m4_replay is not None:
            report = TraceReport.parse(self.behavior.m4_replay)
            if self.behavior.m4_fresh_nonce:
                report = TraceReport(
                    nonce=self.drbg.nonce(),
                    ciphertext=report.ciphertext,
                    signature=report.signature,
                )
            return report.serialize()
        source = self.behavior.trace_source or world.honest_source(message.app_id)
        windows = source.draw(message.trace_count)
        nonce = self.drbg.nonce()
        ciphertext = ecies_encrypt(
            world.keys["V"].encryption.public_bytes,
            encode_trace_batch(windows),
            self.drbg,
        )
        digest = sha256(
            pack_fields(nonce, *(w.astype("<u2").tobytes() for w in windows))
        )
        signature = world.keys["P"].signing.sign(digest)
        report = TraceReport(nonce=nonce, ciphertext=ciphertext, signature=signature)
        return report.serialize()

    def _compute_report_send(self, report_bytes: bytes) -> _Send:
        world = self.world
        nonce = self.drbg.nonce()
        fingerprint = sha256(
            pack_fields(self.token, self.session.app_id.encode("utf-8"))
        )
        digest = sha256(pack_fields(nonce, report_bytes, self.output))
        message = ComputeReport(
            nonce=nonce,
            trace_report=report_bytes,
            fingerprint=fingerprint,
            output=self.output,
            signature=world.keys["P"].signing.sign(digest),
        )
        return _Send("P", "V", "m5", message.serialize())


class TesterActor:
    name = "MT"

    def __init__(self, session: "Session") -> None:
        self.session = session
        self.world = session.world
        self.drbg = session.drbg_for("MT")

    def handle(self, tag: str, payload: bytes) -> list[_Send]:
        if tag != "m6":
            raise _Abort(ABORT_MALFORMED)
        return self._on_verdict_request(payload)

    def _check_fresh(self, nonce: bytes) -> None:
        seen = self.world.seen_nonces["MT"]
        if nonce in seen:
            raise _Abort(ABORT_STALE_NONCE)
        seen.add(nonce)

    def _on_verdict_request(self, payload: bytes) -> list[_Send]:
        world = self.world
        try:
            message = VerdictRequest.parse(payload)
        except FormatError:
            raise _Abort(ABORT_MALFORMED) from None
        self._check_fresh(message.nonce)
        try:
            plain = ecies_decrypt(world.keys["MT"].encryption, message.ciphertext)
            token, output, app_bytes, batch_blob = unpack_fields(plain, 4)
            windows = decode_trace_batch(batch_blob)
        except (DecryptionError, FormatError):
            raise _Abort(ABORT_DECRYPTION_FAILED) from None
        digest = sha256(
            pack_fields(
                message.nonce,
                token,
                app_bytes,
                output,
                *(w.astype("<u2").tobytes() for w in windows),
            )
        )
        if not verify_signature(
            world.keys["V"].signing.public_bytes, message.signature, digest
        ):
            raise _Abort(ABORT_BAD_SIGNATURE)
        tokens = world.seen_tokens["MT"]
        if token in tokens:
            raise _Abort(ABORT_STALE_NONCE)
        tokens.add(token)
        try:
            app_id = app_bytes.decode("utf-8")
        except UnicodeDecodeError:
            raise _Abort(ABORT_MALFORMED) from None
        template = world.tester_templates.get(app_id)
        if template is None:
            raise _Abort(ABORT_UNKNOWN_APPLICATION)
        if any(w.shape[0] != template.bucket.size for w in windows):
            raise _Abort(ABORT_MALFORMED)
        traces = (
            Trace(
                samples=np.asarray(w, dtype=np.float64) / ADC_LEVELS,
                sample_rate_hz=float(SAMPLE_RATE_HZ),
            )
            for w in windows
        )
        decision = attest_multi(traces, template, self.session.pass_threshold)
        verdict = bytes([1 if decision.passed else 0])
        nonce = self.drbg.nonce()
        ciphertext = ecies_encrypt(
            world.keys["V"].encryption.public_bytes, verdict, self.drbg
        )
        reply = VerdictReport(
            nonce=nonce,
            ciphertext=ciphertext,
            signature=world.keys["MT"].signing.sign(
                sha256(pack_fields(nonce, verdict))
            ),
        )
        return [_Send("MT", "V", "m7", reply.serialize())]


class Session:
    """One attestation exchange, driven to completion or first abort."""

    def __init__(
        self,
        world: "World",
        app_id: str,
        *,
        session_id: int,
        trace_count: int,
        pass_threshold: int,
        behavior: ProverBehavior | None = None,
        interposer: Callable[[str, bytes, str, str], bytes | None] | None = None,
        keep_payloads: bool = False,
    ) -> None:
        self.world = world
        self.app_id = app_id
        self.session_id = session_id
        self.trace_count = trace_count
        self.pass_threshold = pass_threshold
        self.behavior = behavior or ProverBehavior()
        self.interposer = interposer
        self.keep_payloads = keep_payloads
        self.delivered_payloads: dict[str, bytes] = {}
        self.records: list[dict] = []
        self.abort_reason: str | None = None
        self.abort_tag: str | None = None
        self.verifier = VerifierActor(self)
        self.prover = ProverActor(self, self.behavior)
        self.tester = TesterActor(self)
        self._actors = {"V": self.verifier, "P": self.prover, "MT": self.tester}
        self._pending: deque[_Send] | None = None

    def drbg_for(self, role: str) -> Drbg:
        return self.world.drbg.child("session", self.session_id, role)

    def _deliver(self, send: _Send) -> list[_Send]:
        world = self.world
        world.clock += send.delay + (0.0 if send.local else world.latency)
        payload = send.payload
        if self.interposer is not None and not send.local:
            replacement = self.interposer(send.tag, payload, send.sender, send.receiver)
            if replacement is not None:
                payload = replacement
        if self.keep_payloads:
            self.delivered_payloads[send.tag] = payload
        try:
            nonce_hex = unpack_fields(payload)[0].hex()
        except (FormatError, IndexError):
            nonce_hex = ""
        receiver = self._actors[send.receiver]
        try:
            follow = receiver.handle(send.tag, payload)
            self._log(send, nonce_hex, accepted=True, reason=None)
            return follow
        except _Abort as abort:
            self._log(send, nonce_hex, accepted=False, reason=abort.reason)
            self.abort_reason = abort.reason
            self.abort_tag = send.tag
            return []

    def _log(self, send: _Send, nonce_hex: str, accepted: bool, reason) -> None:
        self.records.append(
            {
                "session_id": self.session_id,
                "virtual_time": self.world.clock,
                "sender": send.sender,
                "receiver": send.receiver,
                "message_tag": send.tag,
                "nonce_hex": nonce_hex,
                "accepted": accepted,
                "abort_reason": reason,
            }
        )

    def _ensure_started(self) -> None:
        if self._pending is None:
            self._pending = deque(self.verifier.start())

    def _drive(self, stop_after: str | None = None) -> None:
        self._ensure_started()
        while self._pending and self.abort_reason is None:
            send = self._pending.popleft()
            self._pending.extend(self._deliver(send))
            if stop_after is not None and send.tag == stop_after:
                return

    def trusted_launch(self) -> bool:
        """Run m1..m2; true when the verifier accepted the launch report."""
        self._drive(stop_after="m2")
        return self.abort_reason is None and self.verifier.tee_public is not None

    def computations_round(self) -> bool:
        """Run m3..m5; true when the verifier holds the trace batch."""
        self._drive(stop_after="m5")
        return self.abort_reason is None and self.verifier.traces is not None

    def mt_verdict(self) -> int | None:
        """Run m6..m7; the attestation bit, or None when the session aborted."""
        self._drive(stop_after="m7")
        return self.verifier.verdict

    def run(self, mode: str = "sequential") -> SessionRecord:
        if mode == "sequential":
            self._drive()
        elif mode == "threaded":
            self._run_threaded()
        else:
            raise ValueError(f"unknown driver mode {mode!r}")
        if self.abort_reason is None and self.verifier.phase != PHASE_DONE:
            raise ProtocolError("session drained without finishing or aborting")
        return SessionRecord(
            session_id=self.session_id,
            app_id=self.app_id,
            completed=self.verifier.phase == PHASE_DONE,
            verdict=self.verifier.verdict,
            abort_reason=self.abort_reason,
            abort_tag=self.abort_tag,
            records=self.records,
        )

    def _run_threaded(self) -> None:
        """One thread per party; delivery order is fixed by the protocol."""
        inboxes = {name: queue_module.Queue() for name in self._actors}
        lock = threading.RLock()
        finished = threading.Event()
        stop = object()

        def dispatch(send: _Send) -> None:
            if send.local:
                process(send)
            else:
                inboxes[send.receiver].put(send)

        def process(send: _Send) -> None:
            follow = self._deliver(send)
            for item in follow:
                dispatch(item)
            if self.abort_reason is not None or self.verifier.phase == PHASE_DONE:
                if not follow:
                    finished.set()
                    for box in inboxes.values():
                        box.put(stop)

        def worker(name: str) -> None:
            box = inboxes[name]
            while True:
                item = box.get()
                if item is stop:
                    return
                with lock:
                    process(item)

        threads = [
            threading.Thread(target=worker, args=(name,), daemon=True)
            for name in self._actors
        ]
        for thread in threads:
            thread.start()
        with lock:
            self._ensure_started()
            while self._pending:
                dispatch(self._pending.popleft())
        finished.wait(timeout=60.0)
        for thread in threads:
            thread.join(timeout=60.0)
        if not finished.is_set():
            raise ProtocolError("threaded session did not finish")


class World:
    """Long-lived protocol state: keys, images, templates, and trace pools.

    The measurement tester's templates are built once from dedicated capture
    segments, its thresholds calibrated on a disjoint segment, and honest
    sessions draw from a third segment, so session traces are never the ones
    the templates were fit on.
    """

    def __init__(
        self,
        profiles=None,
        apps: tuple[str, ...] = ("alpha", "bravo"),
        *,
        seed: int = 0,
        trace_count: int = 52,
        pass_threshold: int = 21,
        latency: float = 1e-3,
        timing_slack: float = 0.10,
        checksum: ChecksumModel | None = None,
        template_count: int = 64,
        calibration_count: int = 200,
        pool_size: int = 512,
        percentile: float = DEFAULT_PERCENTILE,
        filter_window: int = DEFAULT_FILTER_WINDOW,
        filter_order: int = DEFAULT_FILTER_ORDER,
        prover_id: str = "prover-1",
        keep_transcript: bool = True,
    ) -> None:
        if profiles is None:
            profiles = default_profiles()
        by_id = {p.program_id: p for p in profiles}
        missing = [a for a in apps if a not in by_id]
        if missing:
            raise ProtocolError(f"no synthesis profile for apps {missing}")
        self.apps = tuple(apps)
        self.profiles = {a: by_id[a] for a in apps}
        self.seed = seed
        self.trace_count = trace_count
        self.pass_threshold = pass_threshold
        self.latency = latency
        self.timing_slack = timing_slack
        self.checksum = checksum or ChecksumModel()
        self.template_count = template_count
        self.calibration_count = calibration_count
        self.pool_size = pool_size
        self.percentile = percentile
        self.filter_window = filter_window
        self.filter_order = filter_order
        self.prover_id = prover_id
        self.keep_transcript = keep_transcript

        self.drbg = Drbg("world", seed)
        self.keys = {
            role: PartyKeys(
                role=role,
                signing=SigningKeyPair.generate(self.drbg.child("key", role, "sign")),
                encryption=EncryptionKeyPair.generate(
                    self.drbg.child("key", role, "enc")
                ),
            )
            for role in ("V", "P", "MT")
        }
        self.images = {
            app: self.drbg.child("image", app).bytes(1024) for app in self.apps
        }

        pool_master = int.from_bytes(self.drbg.child("pool").bytes(8), "little")
        self.buckets = {}
        self.tester_templates = {}
        self.pools = {}
        for app_index, app in enumerate(self.apps):
            profile = self.profiles[app]
            bucket = profile_bucket(profile)
            self.buckets[app] = bucket

            def window_at(i: int) -> np.ndarray:
                seed_i = trace_seed(pool_master, app_index, i)
                return quantize_samples(generate_window(profile, None, seed_i))

            build = (
                self._window_trace(window_at(i), app)
                for i in range(self.template_count)
            )
            template = build_template(build, bucket, filter_window, filter_order)
            calibration = (
                self._window_trace(window_at(self.template_count + i), app)
                for i in range(self.calibration_count)
            )
            template = calibrate_threshold(template, calibration, percentile)
            self.tester_templates[app] = template

            offset = self.template_count + self.calibration_count
            pool = np.empty((self.pool_size, bucket.size), dtype=np.uint16)
            for i in range(self.pool_size):
                pool[i] = window_at(offset + i)
            self.pools[app] = pool

        self.seen_nonces = {"V": set(), "P": set(), "MT": set()}
        self.seen_tokens = {"P": set(), "MT": set()}
        self.clock = 0.0
        self.session_count = 0
        self.transcript: list[dict] = []
        self._sources = {
            app: PoolSource(
                self.pools[app],
                np.random.Generator(
                    np.random.Philox(
                        key=np.frombuffer(
                            self.drbg.child("draw", app).bytes(16), dtype=np.uint64
                        )
                    )
                ),
            )
            for app in self.apps
        }

    @staticmethod
    def _window_trace(window: np.ndarray, program_id: str | None = None) -> Trace:
        return Trace(
            samples=np.asarray(window, dtype=np.float64) / ADC_LEVELS,
            sample_rate_hz=float(SAMPLE_RATE_HZ),
            program_id=program_id,
        )

    def honest_source(self, app_id: str) -> PoolSource:
        return self._sources[app_id]

    def rng_for(self, *labels) -> np.random.Generator:
        key = np.frombuffer(self.drbg.child(*labels).bytes(16), dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def run_session(
        self,
        app_id: str,
        *,
        behavior: ProverBehavior | None = None,
        interposer=None,
        trace_count: int | None = None,
        pass_threshold: int | None = None,
        mode: str = "sequential",
        keep_payloads: bool = False,
    ) -> SessionRecord:
        session = self.new_session(
            app_id,
            behavior=behavior,
            interposer=interposer,
            trace_count=trace_count,
            pass_threshold=pass_threshold,
            keep_payloads=keep_payloads,
        )
        record = session.run(mode)
        if self.keep_transcript:
            self.transcript.extend(record.records)
        return record

    def new_session(
        self,
        app_id: str,
        *,
        behavior: ProverBehavior | None = None,
        interposer=None,
        trace_count: int | None = None,
        pass_threshold: int | None = None,
        keep_payloads: bool = False,
    ) -> Session:
        if app_id not in self.profiles:
            raise ProtocolError(f"unknown application {app_id!r}")
        session = Session(
            self,
            app_id,
            session_id=self.session_count,
            trace_count=self.trace_count if trace_count is None else trace_count,
            pass_threshold=(
                self.pass_threshold if pass_threshold is None else pass_threshold
            ),
            behavior=behavior,
            interposer=interposer,
            keep_payloads=keep_payloads,
        )
        self.session_count += 1
        return session

    def params_dict(self) -> dict:
        params = dict(PROTOCOL_PARAMETERS)
        params.update(
            {
                "apps": list(self.apps),
                "seed": self.seed,
                "trace_count": self.trace_count,
                "pass_threshold": self.pass_threshold,
                "latency_seconds": self.latency,
                "timing_slack": self.timing_slack,
                "checksum_iterations": self.checksum.iterations,
                "template_count": self.template_count,
                "calibration_count": self.calibration_count,
                "pool_size": self.pool_size,
                "percentile": self.percentile,
            }
        )
        return params

    def write_transcript(self, path) -> None:
        write_transcript(path, self.transcript, self.params_dict())
