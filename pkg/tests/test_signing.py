import hashlib
from dataclasses import replace
from datetime import timedelta

import numpy as np
import pytest

from mavkit.api_common import BadKeyFile
from mavkit.mav_clock import SIGNING_EPOCH, MAV_SimClock, datetime_from_timestamp, timestamp_now
from mavkit.mav_frame import FrameV1, FrameV2, MAV_Parser
from mavkit.mav_signing import (
    KEYFILE_ENV,
    MAV_SigningContext,
    SecretKey,
    StreamKey,
    UnsignedPolicy,
    VerdictReason,
    keygen,
    load_key,
    sign_frame,
    store_key,
    verify_frame,
)


@pytest.fixture
def pair(clock, key):
    """Sender and receiver sharing a key and a clock"""
    return MAV_SigningContext(key, clock), MAV_SigningContext(key, clock)


def _tamper_payload(frame, catalog):
    payload = bytearray(frame.payload)
    payload[0] ^= 0x01
    return replace(frame, payload=bytes(payload)).with_crc(catalog.crc_seed(frame.msgid))


class TestTimestamp:
    @pytest.mark.parametrize("seconds, expected", [(0, 0), (1, 100000), (60, 6000000)])
    def test_units_since_epoch(self, seconds, expected):
        clock = MAV_SimClock(SIGNING_EPOCH + timedelta(seconds=seconds))
        assert timestamp_now(clock) == expected

    def test_inverse(self):
        assert datetime_from_timestamp(100000) == SIGNING_EPOCH + timedelta(seconds=1)

    def test_simulated_clock_moves_timestamp(self, clock):
        before = timestamp_now(clock)
        clock.advance(0.5)
        assert timestamp_now(clock) - before == 50000


class TestSignVerify:
    def test_accept(self, pair, catalog, heartbeat):
        sender, receiver = pair
        signed = sender.sign(catalog.frame(heartbeat, 0, 1, 1))
        assert signed.signed and signed.incompat_flags & 0x01
        verdict = receiver.verify(signed)
        assert verdict
        assert verdict.reason is VerdictReason.SIGNED_OK
        assert str(verdict) == "Accept"
        assert receiver.last_timestamp[StreamKey(1, 1, 0)] == signed.signature.timestamp

    def test_signature_is_sha256_prefix(self, key, clock, catalog, heartbeat):
        signed = sign_frame(MAV_SigningContext(key, clock), catalog.frame(heartbeat, 0, 1, 1), link_id=3)
        sig = signed.signature
        digest = hashlib.sha256(
            key.raw + signed.unsigned_bytes() + bytes([3]) + sig.timestamp.to_bytes(6, "little")
        ).digest()
        assert sig.sig48 == digest[:6]
        assert sig.link_id == 3

    def test_wrong_key(self, clock, catalog, heartbeat):
        sender = MAV_SigningContext(keygen(b"a"), clock)
        receiver = MAV_SigningContext(keygen(b"b"), clock)
        verdict = receiver.verify(sender.sign(catalog.frame(heartbeat, 0, 1, 1)))
        assert not verdict
        assert verdict.reason is VerdictReason.BAD_SIGNATURE

    def test_timestamps_strictly_increase_on_stalled_clock(self, pair, catalog, heartbeat):
        sender, _ = pair
        stamps = [sender.sign(catalog.frame(heartbeat, i, 1, 1)).signature.timestamp for i in range(5)]
        assert all(b > a for a, b in zip(stamps, stamps[1:]))

    def test_only_v2(self, pair):
        with pytest.raises(TypeError):
            pair[0].sign(FrameV1(0, 1, 1, 0))

    def test_tampered_payload(self, pair, catalog, heartbeat):
        sender, receiver = pair
        signed = sender.sign(catalog.frame(heartbeat, 0, 1, 1))
        verdict = receiver.verify(_tamper_payload(signed, catalog))
        assert verdict.reason is VerdictReason.BAD_SIGNATURE

    def test_any_bit_flip_rejected(self, pair, catalog, heartbeat):
        sender, receiver = pair
        signed = sender.sign(catalog.frame(heartbeat, 0, 1, 1))
        wire = signed.unsigned_bytes()
        seed = catalog.crc_seed(0)
        # From COMPAT on; LEN and INCOMPAT change the framing itself
        for index in range(3, len(wire) - 2):
            flipped = bytearray(wire)
            flipped[index] ^= 0x04
            raw = bytes(flipped) + signed.signature.to_bytes()
            tampered = MAV_Parser({signed.msgid: seed}).feed(raw)
            frames = [f for f, _ in tampered]
            if not frames:
                continue
            rebuilt = frames[0].with_crc(seed)
            assert not receiver.verify(rebuilt)


class TestAntiReplay:
    def test_exact_replay(self, pair, catalog, heartbeat):
        sender, receiver = pair
        signed = sender.sign(catalog.frame(heartbeat, 0, 1, 1))
        assert receiver.verify(signed)
        verdict = receiver.verify(signed)
        assert verdict.reason is VerdictReason.REPLAY_OR_STALE
        assert str(verdict) == "Reject(ReplayOrStale)"

    def test_redelivery_accepts_each_frame_once(self, pair, catalog):
        sender, receiver = pair
        frames = [
            sender.sign(catalog.frame(catalog.message("SYSTEM_TIME", time_boot_ms=i), i % 256, 1, 1))
            for i in range(100)
        ]
        accepted = sum(bool(receiver.verify(f)) for f in frames)
        order = np.random.default_rng(2).permutation(len(frames))
        accepted += sum(bool(receiver.verify(frames[i])) for i in order)
        assert accepted == 100

    def test_streams_are_independent(self, key, clock, catalog, heartbeat):
        receiver = MAV_SigningContext(key, clock)
        a = MAV_SigningContext(key, clock).sign(catalog.frame(heartbeat, 0, 1, 1), link_id=0)
        b = MAV_SigningContext(key, clock).sign(catalog.frame(heartbeat, 0, 1, 1), link_id=1)
        assert receiver.verify(a) and receiver.verify(b)
        assert not receiver.verify(a)
        assert set(receiver.last_timestamp) == {StreamKey(1, 1, 0), StreamKey(1, 1, 1)}


class TestClockSkew:
    def _frame_at(self, key, offset_s, catalog, heartbeat):
        clock = MAV_SimClock()
        clock.advance(120)
        sender_clock = MAV_SimClock(clock.now() + timedelta(seconds=offset_s))
        frame = MAV_SigningContext(key, sender_clock).sign(catalog.frame(heartbeat, 0, 1, 1))
        return MAV_SigningContext(key, clock), frame

    @pytest.mark.parametrize("offset", [-61, 61, -120])
    def test_outside_window(self, key, catalog, heartbeat, offset):
        receiver, frame = self._frame_at(key, offset, catalog, heartbeat)
        assert receiver.verify(frame).reason is VerdictReason.CLOCK_SKEW

    @pytest.mark.parametrize("offset", [-59, 59])
    def test_inside_window(self, key, catalog, heartbeat, offset):
        receiver, frame = self._frame_at(key, offset, catalog, heartbeat)
        assert receiver.verify(frame)

    def test_signature_checked_before_skew(self, catalog, heartbeat):
        clock = MAV_SimClock()
        old = MAV_SigningContext(keygen(b"x"), MAV_SimClock(clock.now() - timedelta(minutes=5)))
        verdict = MAV_SigningContext(keygen(b"y"), clock).verify(old.sign(catalog.frame(heartbeat, 0, 1, 1)))
        assert verdict.reason is VerdictReason.BAD_SIGNATURE


class TestUnsigned:
    def test_rejected_by_default(self, pair, catalog, heartbeat):
        verdict = pair[1].verify(catalog.frame(heartbeat, 0, 1, 1))
        assert not verdict
        assert verdict.reason is VerdictReason.UNSIGNED
        assert not verdict.signed

    def test_accept_policy(self, key, clock, catalog, heartbeat):
        ctx = MAV_SigningContext(key, clock, unsigned_policy=UnsignedPolicy.ACCEPT)
        verdict = verify_frame(ctx, catalog.frame(heartbeat, 0, 1, 1))
        assert verdict and verdict.reason is VerdictReason.UNSIGNED_ACCEPTED

    def test_reject_callback(self, key, clock, catalog, heartbeat):
        seen = []
        ctx = MAV_SigningContext(key, clock, on_reject=seen.append)
        ctx.verify(FrameV2(0, 1, 1, 0, catalog.frame(heartbeat, 0, 1, 1).payload))
        assert len(seen) == 1 and ctx.rejected == 1


class TestKeys:
    def test_store_load(self, tmp_path, key):
        path = tmp_path / "key.hex"
        store_key(key, path)
        text = path.read_text()
        assert len(text) == 65 and text.endswith("\n")
        assert all(c in "0123456789abcdef" for c in text[:-1])
        assert load_key(path) == key

    @pytest.mark.parametrize("text", ["a" * 63 + "\n", "a" * 64, "a" * 65 + "\n", "g" * 64 + "\n"])
    def test_bad_key_file(self, tmp_path, text):
        path = tmp_path / "key.hex"
        path.write_text(text)
        with pytest.raises(BadKeyFile):
            load_key(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(BadKeyFile):
            load_key(tmp_path / "absent.hex")

    def test_environment(self, tmp_path, key, monkeypatch):
        path = tmp_path / "env.hex"
        store_key(key, path)
        monkeypatch.setenv(KEYFILE_ENV, str(path))
        assert load_key() == key
        monkeypatch.delenv(KEYFILE_ENV)
        with pytest.raises(BadKeyFile):
            load_key()

    def test_generated_keys_are_distinct(self):
        keys = {keygen().raw for _ in range(100)}
        assert len(keys) == 100

    def test_entropy_sources(self):
        assert keygen(b"seed") == keygen("seed")
        assert keygen(np.random.default_rng(4)) == keygen(np.random.default_rng(4))
        with pytest.raises(ValueError):
            SecretKey(b"short")

    def test_repr_hides_key(self, key):
        assert key.hex not in repr(key)
