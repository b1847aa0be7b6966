"""Protocol simulation: crypto primitives, wire formats, honest sessions,
prover deviations, and the single-byte tamper invariant."""

import hashlib

import numpy as np
import pytest

from power_attest.errors import FormatError, ProtocolError
from power_attest.protocol import (
    ChecksumModel,
    ComputeReport,
    ComputeRequest,
    Drbg,
    EncryptionKeyPair,
    LaunchReport,
    LaunchRequest,
    MixtureSource,
    PROTOCOL_PARAMETERS,
    PoolSource,
    ProverBehavior,
    SigningKeyPair,
    TraceReport,
    VerdictReport,
    VerdictRequest,
    World,
    decode_trace_batch,
    ecies_decrypt,
    ecies_encrypt,
    encode_trace_batch,
    pack_fields,
    parse_message,
    read_transcript,
    sha256,
    unpack_fields,
    verify_signature,
    write_transcript,
)
from power_attest.protocol.actors import (
    ABORT_BAD_SIGNATURE,
    ABORT_CHECKSUM_MISMATCH,
    ABORT_FINGERPRINT_MISMATCH,
    ABORT_MALFORMED,
    ABORT_STALE_NONCE,
    ABORT_TIMING_EXCEEDED,
    PHASE_DONE,
    PHASE_LAUNCHED,
)
from power_attest.protocol.crypto import DecryptionError


def make_world(seed=904):
    return World(
        apps=("alpha", "bravo"),
        seed=seed,
        trace_count=8,
        pass_threshold=1,
        template_count=16,
        calibration_count=16,
        pool_size=80,
    )


@pytest.fixture(scope="module")
def world():
    return make_world()


class TestDrbg:
    def test_deterministic(self):
        assert Drbg("x", 7).bytes(32) == Drbg("x", 7).bytes(32)

    def test_entropy_labels_matter(self):
        assert Drbg("x", 7).bytes(16) != Drbg("x", 8).bytes(16)
        assert Drbg("x").bytes(16) != Drbg("y").bytes(16)

    def test_label_types(self):
        Drbg(b"raw", "text", 12).bytes(4)
        with pytest.raises(TypeError):
            Drbg(3.14)

    def test_child_derivation(self):
        root = Drbg("root")
        assert root.child("a").bytes(8) == Drbg("root").child("a").bytes(8)
        assert root.child("a").bytes(8) != root.child("b").bytes(8)

    def test_nonce_is_16_bytes(self):
        assert len(Drbg("n").nonce()) == PROTOCOL_PARAMETERS["nonce_bytes"] == 16

    def test_stream_advances(self):
        d = Drbg("s")
        assert d.bytes(8) != d.bytes(8)


class TestSignatures:
    def test_sign_verify_round_trip(self):
        keys = SigningKeyPair.generate(Drbg("sig"))
        data = b"attestation evidence"
        assert verify_signature(keys.public_bytes, keys.sign(data), data)

    def test_tampered_data_fails(self):
        keys = SigningKeyPair.generate(Drbg("sig"))
        sig = keys.sign(b"original")
        assert not verify_signature(keys.public_bytes, sig, b"Original")

    def test_tampered_signature_fails(self):
        keys = SigningKeyPair.generate(Drbg("sig"))
        sig = bytearray(keys.sign(b"data"))
        sig[0] ^= 0x01
        assert not verify_signature(keys.public_bytes, bytes(sig), b"data")

    def test_foreign_key_fails(self):
        keys = SigningKeyPair.generate(Drbg("sig"))
        other = SigningKeyPair.generate(Drbg("gis"))
        assert not verify_signature(other.public_bytes, keys.sign(b"data"), b"data")

    def test_garbage_public_key_fails(self):
        assert not verify_signature(b"short", b"sig", b"data")


class TestHybridEncryption:
    def test_round_trip(self):
        keys = EncryptionKeyPair.generate(Drbg("enc"))
        plaintext = b"\x00" * 3 + b"sealed trace batch"
        blob = ecies_encrypt(keys.public_bytes, plaintext, Drbg("eph"))
        assert ecies_decrypt(keys, blob) == plaintext

    def test_blob_layout(self):
        keys = EncryptionKeyPair.generate(Drbg("enc"))
        blob = ecies_encrypt(keys.public_bytes, b"xyz", Drbg("eph"))
        assert len(blob) == 32 + 12 + 3 + 16

    def test_tampered_ciphertext_fails(self):
        keys = EncryptionKeyPair.generate(Drbg("enc"))
        blob = bytearray(ecies_encrypt(keys.public_bytes, b"payload", Drbg("e")))
        blob[-1] ^= 0x80
        with pytest.raises(DecryptionError):
            ecies_decrypt(keys, bytes(blob))

    def test_truncated_blob_fails(self):
        keys = EncryptionKeyPair.generate(Drbg("enc"))
        with pytest.raises(DecryptionError):
            ecies_decrypt(keys, b"\x00" * 40)

    def test_wrong_recipient_fails(self):
        alice = EncryptionKeyPair.generate(Drbg("a"))
        bob = EncryptionKeyPair.generate(Drbg("b"))
        blob = ecies_encrypt(alice.public_bytes, b"secret", Drbg("e"))
        with pytest.raises(DecryptionError):
            ecies_decrypt(bob, blob)

    def test_sha256_matches_stdlib(self):
        assert sha256(b"abc") == hashlib.sha256(b"abc").digest()


class TestFieldFraming:
    def test_round_trip(self, rng):
        for _ in range(50):
            fields = [
                rng.bytes(int(rng.integers(0, 40)))
                for _ in range(int(rng.integers(0, 6)))
            ]
            assert unpack_fields(pack_fields(*fields)) == fields

    def test_empty_fields_survive(self):
        assert unpack_fields(pack_fields(b"", b"x", b"")) == [b"", b"x", b""]

    def test_count_enforced(self):
        blob = pack_fields(b"a", b"b")
        assert unpack_fields(blob, 2) == [b"a", b"b"]
        with pytest.raises(FormatError):
            unpack_fields(blob, 3)

    def test_truncated_prefix(self):
        with pytest.raises(FormatError):
            unpack_fields(b"\x05\x00")

    def test_field_past_end(self):
        with pytest.raises(FormatError):
            unpack_fields(b"\x0a\x00\x00\x00abc")

    def test_non_bytes_field(self):
        with pytest.raises(TypeError):
            pack_fields("text")


class TestTraceBatch:
    def test_round_trip(self, rng):
        windows = [
            rng.integers(0, 4096, size=n).astype(np.uint16)
            for n in (8, 1, 200)
        ]
        decoded = decode_trace_batch(encode_trace_batch(windows))
        assert len(decoded) == 3
        for a, b in zip(windows, decoded):
            assert np.array_equal(a, b)

    def test_wrong_dtype_rejected(self):
        with pytest.raises(FormatError):
            encode_trace_batch([np.zeros(4, dtype=np.float64)])

    def test_two_dimensional_rejected(self):
        with pytest.raises(FormatError):
            encode_trace_batch([np.zeros((2, 2), dtype=np.uint16)])

    def test_empty_window_rejected_on_decode(self):
        with pytest.raises(FormatError):
            decode_trace_batch(pack_fields(b""))

    def test_odd_byte_window_rejected(self):
        with pytest.raises(FormatError):
            decode_trace_batch(pack_fields(b"\x01\x02\x03"))


def sample_messages():
    return [
        LaunchRequest(nonce=b"n" * 16, app_id="alpha"),
        LaunchReport(nonce=b"m" * 16, ciphertext=b"cipher", signature=b"sig"),
        ComputeRequest(
            nonce=b"o" * 16,
            trace_count=52,
            token=b"t" * 16,
            app_id="bravo",
            signature=b"sig2",
        ),
        TraceReport(nonce=b"p" * 16, ciphertext=b"sealed", signature=b"sig3"),
        ComputeReport(
            nonce=b"q" * 16,
            trace_report=b"inner",
            fingerprint=b"fp",
            output=b"out",
            signature=b"sig4",
        ),
        VerdictRequest(nonce=b"r" * 16, ciphertext=b"evidence", signature=b"s5"),
        VerdictReport(nonce=b"s" * 16, ciphertext=b"bit", signature=b"s6"),
    ]


class TestMessages:
    @pytest.mark.parametrize("message", sample_messages(), ids=lambda m: m.tag)
    def test_serialize_parse_round_trip(self, message):
        assert type(message).parse(message.serialize()) == message

    @pytest.mark.parametrize("message", sample_messages(), ids=lambda m: m.tag)
    def test_parse_message_dispatches(self, message):
        assert parse_message(message.tag, message.serialize()) == message

    def test_unknown_tag(self):
        with pytest.raises(FormatError):
            parse_message("m9", b"")

    def test_wrong_field_count(self):
        with pytest.raises(FormatError):
            LaunchRequest.parse(pack_fields(b"a", b"b", b"c"))

    def test_trace_count_must_be_u32(self):
        payload = pack_fields(b"n", b"\x01\x02", b"tok", b"app", b"sig")
        with pytest.raises(FormatError):
            ComputeRequest.parse(payload)

    def test_tags_are_distinct(self):
        tags = [m.tag for m in sample_messages()]
        assert tags == ["m1", "m2", "m3", "m4", "m5", "m6", "m7"]


class TestTranscriptFiles:
    def test_round_trip_with_sidecar(self, tmp_path):
        records = [
            {"session_id": 0, "message_tag": "m1", "accepted": True},
            {"session_id": 0, "message_tag": "m2", "accepted": False,
             "abort_reason": "BadSignature"},
        ]
        params = {"seed": 3, "apps": ["alpha"], "latency_seconds": 1e-3}
        path = write_transcript(tmp_path / "run.jsonl", records, params)
        got_records, got_params = read_transcript(path)
        assert got_records == records
        assert got_params == params

    def test_missing_sidecar_gives_empty_params(self, tmp_path):
        path = tmp_path / "bare.jsonl"
        path.write_text('{"message_tag": "m1"}\n')
        records, params = read_transcript(path)
        assert records == [{"message_tag": "m1"}]
        assert params == {}


class TestChecksumModel:
    def test_result_deterministic_and_nonce_bound(self):
        model = ChecksumModel()
        assert model.result(b"n1", b"image") == model.result(b"n1", b"image")
        assert model.result(b"n1", b"image") != model.result(b"n2", b"image")
        assert model.result(b"n1", b"image") != model.result(b"n1", b"imagf")

    def test_durations(self):
        model = ChecksumModel()
        assert model.base_duration() == pytest.approx(64 * 5e-4)
        assert model.duration(inflated=False) == model.base_duration()
        assert model.duration(inflated=True) == pytest.approx(
            model.base_duration() * 1.25
        )


class TestTraceSources:
    def test_pool_draws_without_replacement(self, rng):
        pool = np.arange(40, dtype=np.uint16).reshape(10, 4)
        source = PoolSource(pool, rng)
        drawn = source.draw(10)
        assert sorted(map(tuple, drawn)) == sorted(map(tuple, pool))

    def test_pool_exhaustion(self, rng):
        source = PoolSource(np.zeros((3, 4), dtype=np.uint16), rng)
        with pytest.raises(ProtocolError):
            source.draw(4)

    def test_mixture_extremes(self, rng):
        primary = np.ones((4, 4), dtype=np.uint16)
        decoy = np.zeros((4, 4), dtype=np.uint16)
        all_primary = MixtureSource(primary, decoy, 1.0, rng).draw(20)
        assert (all_primary == 1).all()
        all_decoy = MixtureSource(primary, decoy, 0.0, rng).draw(20)
        assert (all_decoy == 0).all()

    def test_mixture_weight_validated(self, rng):
        pool = np.zeros((2, 2), dtype=np.uint16)
        with pytest.raises(ProtocolError):
            MixtureSource(pool, pool, 1.5, rng)


class TestHonestSession:
    def test_full_run_accepts(self, world):
        record = world.run_session("alpha")
        assert record.completed
        assert record.verdict == 1
        assert record.accepted
        assert record.abort_reason is None

    def test_message_sequence(self, world):
        record = world.run_session("bravo")
        tags = [r["message_tag"] for r in record.records]
        assert tags == ["m1", "m2", "m3", "m4", "m5", "m6", "m7"]
        assert all(r["accepted"] for r in record.records)

    def test_virtual_time_advances(self, world):
        record = world.run_session("alpha")
        times = [r["virtual_time"] for r in record.records]
        assert times == sorted(times)
        assert times[0] < times[-1]

    def test_staged_api(self, world):
        session = world.new_session("alpha")
        assert session.trusted_launch()
        assert session.computations_round()
        assert session.mt_verdict() in (0, 1)
        assert session.verifier.phase == PHASE_DONE

    def test_session_ids_increment(self, world):
        a = world.run_session("alpha")
        b = world.run_session("alpha")
        assert b.session_id == a.session_id + 1

    def test_unknown_app_rejected(self, world):
        with pytest.raises(ProtocolError):
            world.run_session("zulu")

    def test_deterministic_across_worlds(self):
        r1 = make_world().run_session("alpha")
        r2 = make_world().run_session("alpha")
        assert r1.records == r2.records
        assert r1.verdict == r2.verdict

    def test_seed_changes_transcript(self):
        r1 = make_world(1).run_session("alpha")
        r2 = make_world(2).run_session("alpha")
        nonces1 = [r["nonce_hex"] for r in r1.records]
        nonces2 = [r["nonce_hex"] for r in r2.records]
        assert nonces1 != nonces2

    def test_threaded_driver_matches_sequential(self):
        sequential = make_world().run_session("alpha")
        threaded = make_world().run_session("alpha", mode="threaded")
        assert threaded.records == sequential.records
        assert threaded.verdict == sequential.verdict

    def test_unknown_driver_mode(self, world):
        with pytest.raises(ValueError):
            world.run_session("alpha", mode="parallel")

    def test_world_transcript_accumulates(self):
        w = make_world()
        w.run_session("alpha")
        w.run_session("bravo")
        assert len(w.transcript) == 14
        sessions = {r["session_id"] for r in w.transcript}
        assert sessions == {0, 1}

    def test_transcript_file_round_trip(self, tmp_path):
        w = make_world()
        w.run_session("alpha")
        w.write_transcript(tmp_path / "t.jsonl")
        records, params = read_transcript(tmp_path / "t.jsonl")
        assert records == w.transcript
        assert params == w.params_dict()
        assert params["signature"] == "Ed25519"


class TestProverDeviations:
    def test_image_tamper_caught_by_checksum(self, world):
        record = world.run_session(
            "alpha", behavior=ProverBehavior(image_tamper=True)
        )
        assert not record.completed
        assert record.abort_reason == ABORT_CHECKSUM_MISMATCH
        assert record.abort_tag == "m2"

    def test_timing_inflation_caught_by_deadline(self, world):
        record = world.run_session(
            "alpha", behavior=ProverBehavior(timing_inflation=True)
        )
        assert record.abort_reason == ABORT_TIMING_EXCEEDED
        assert record.abort_tag == "m2"

    def test_foreign_windows_complete_but_fail_verdict(self, world):
        behavior = ProverBehavior(trace_source=world.honest_source("bravo"))
        record = world.run_session("alpha", behavior=behavior)
        assert record.completed
        assert record.verdict == 0
        assert not record.accepted

    def test_wrong_window_size_rejected(self, world):
        pool = np.zeros((10, 64), dtype=np.uint16)
        behavior = ProverBehavior(
            trace_source=PoolSource(pool, world.rng_for("bad-pool"))
        )
        record = world.run_session("alpha", behavior=behavior)
        assert record.abort_reason == ABORT_MALFORMED
        assert record.abort_tag == "m5"

    def test_forged_trace_report(self, world):
        record = world.run_session("alpha", behavior=ProverBehavior(m4_forge=True))
        assert record.abort_reason == ABORT_BAD_SIGNATURE
        assert record.abort_tag == "m5"

    def test_replayed_trace_report(self, world):
        donor = world.new_session("alpha", keep_payloads=True)
        donor.run()
        stale = donor.delivered_payloads["m4"]
        record = world.run_session(
            "alpha", behavior=ProverBehavior(m4_replay=stale)
        )
        assert record.abort_reason == ABORT_STALE_NONCE
        assert record.abort_tag == "m5"

    def test_replay_with_fresh_nonce_breaks_signature(self, world):
        donor = world.new_session("alpha", keep_payloads=True)
        donor.run()
        stale = donor.delivered_payloads["m4"]
        record = world.run_session(
            "alpha",
            behavior=ProverBehavior(m4_replay=stale, m4_fresh_nonce=True),
        )
        assert record.abort_reason == ABORT_BAD_SIGNATURE
        assert record.abort_tag == "m5"


class TestInterposer:
    def test_cross_session_message_replay_is_stale(self, world):
        donor = world.new_session("alpha", keep_payloads=True)
        donor.run()
        stale_m2 = donor.delivered_payloads["m2"]

        def replay(tag, payload, sender, receiver):
            return stale_m2 if tag == "m2" else None

        record = world.run_session("alpha", interposer=replay)
        assert record.abort_reason == ABORT_STALE_NONCE
        assert record.abort_tag == "m2"

    @pytest.mark.parametrize("tag", ["m1", "m2", "m3", "m5", "m6", "m7"])
    def test_any_single_byte_flip_aborts(self, world, tag):
        # Flip one byte at five spots across the payload; every position
        # must abort the session, whatever check happens to catch it.
        for fraction in (0.0, 0.25, 0.5, 0.75, 1.0):

            def flip(t, payload, sender, receiver):
                if t != tag:
                    return None
                pos = min(int(fraction * len(payload)), len(payload) - 1)
                mutated = bytearray(payload)
                mutated[pos] ^= 0xFF
                return bytes(mutated)

            record = world.run_session("alpha", interposer=flip)
            assert not record.completed, (tag, fraction)
            assert record.abort_reason is not None, (tag, fraction)

    def test_passthrough_interposer_is_invisible(self):
        observed = []

        def watch(tag, payload, sender, receiver):
            observed.append(tag)
            return None

        plain = make_world().run_session("alpha")
        watched = make_world().run_session("alpha", interposer=watch)
        assert watched.records == plain.records
        # The TEE-to-prover hop is on the prover's own board, so the
        # channel adversary never sees m4.
        assert observed == ["m1", "m2", "m3", "m5", "m6", "m7"]


class TestPhaseDiscipline:
    def test_phase_moves_forward_only(self, world):
        session = world.new_session("alpha")
        session.run()
        with pytest.raises(ProtocolError):
            session.verifier._set_phase(PHASE_LAUNCHED)

    def test_phase_history_is_monotonic(self, world):
        session = world.new_session("alpha")
        session.run()
        history = session.verifier.phase_history
        assert history[0] == "setup"
        assert history[-1] == PHASE_DONE
        assert len(history) == len(set(history))
