import socket

import numpy as np
import pytest

from mavkit.api_common import CaptureCorrupt, LinkError, ScenarioInvalid
from mavkit.mav_clock import MAV_SimClock
from mavkit.mav_frame import CaptureRecord, Direction, MAV_Parser
from mavkit.mav_link import (
    ORIGIN_ATTACKER,
    ORIGIN_GCS,
    CaptureWriter,
    LinkStats,
    MAV_SimLink,
    MAV_TCPLink,
    SimLinkConfig,
    capture_iter,
    capture_read,
    capture_write,
    open_tcp,
    open_udp,
    sim_link,
    stats_update,
)


def _frames(catalog, n):
    return [
        catalog.frame(catalog.message("SYSTEM_TIME", time_boot_ms=i), i % 256, 1, 1).to_bytes() for i in range(n)
    ]


def _send_all(link, clock, frames, step=0.02):
    for data in frames:
        link.gcs_end.send(data)
    clock.advance(step)
    received = []
    while (datagram := link.vehicle_end.recv_datagram()) is not None:
        received.append(datagram)
    return received


class TestLinkStats:
    def _feed(self, seqs):
        stats = LinkStats()
        for seq in seqs:
            stats_update(stats, seq)
        return stats

    def test_no_loss(self):
        stats = self._feed([0, 1, 2, 3])
        assert stats.lost == 0 and stats.drop_ratio == 0

    def test_one_gap(self):
        stats = self._feed([0, 1, 3, 4])
        assert stats.lost == 1 and stats.received == 4
        assert stats.drop_ratio == pytest.approx(0.2)

    def test_wraparound(self):
        stats = self._feed([254, 255, 0, 1])
        assert stats.lost == 0

    def test_large_gap_is_reorder(self):
        stats = self._feed([10, 9])
        assert stats.lost == 0 and stats.received == 2

    def test_every_single_gap_below_threshold(self):
        for gap in range(128):
            stats = self._feed([200, (200 + gap + 1) % 256])
            assert stats.lost == gap

    def test_window(self):
        stats = self._feed([0, 2])
        assert stats.take_window() == (2, 1)
        stats_update(stats, 3)
        assert stats.take_window() == (1, 0)

    def test_drop_rate_units(self):
        assert self._feed([0, 1, 3, 4]).drop_rate_comm == 2000


class TestSimLink:
    def test_lossless(self, clock, catalog):
        link = MAV_SimLink(SimLinkConfig(), clock)
        frames = _frames(catalog, 50)
        received = _send_all(link, clock, frames)
        assert [d.data for d in received] == frames
        assert all(d.origin == ORIGIN_GCS for d in received)

    def test_drop_ratio(self, clock, catalog):
        link = sim_link(SimLinkConfig(drop_probability=0.1, rng_seed=3), clock)
        stats = LinkStats()
        parser = MAV_Parser(catalog)
        for data in _send_all(link, clock, _frames(catalog, 10000)):
            for frame, verdict in parser.feed(data.data):
                stats_update(stats, frame.seq)
        assert stats.drop_ratio == pytest.approx(0.10, abs=0.01)
        assert link.dropped + link.delivered == 10000

    def test_corruption_flips_one_bit(self, clock, catalog):
        link = MAV_SimLink(SimLinkConfig(corrupt_probability=1.0, rng_seed=5), clock)
        frames = _frames(catalog, 20)
        for sent, got in zip(frames, _send_all(link, clock, frames)):
            diff = np.bitwise_xor(np.frombuffer(sent, np.uint8), np.frombuffer(got.data, np.uint8))
            assert int(np.unpackbits(diff).sum()) == 1

    def test_same_seed_same_trace(self, catalog):
        traces = []
        for _ in range(2):
            clock = MAV_SimClock()
            link = MAV_SimLink(SimLinkConfig(drop_probability=0.3, corrupt_probability=0.2, rng_seed=9), clock)
            _send_all(link, clock, _frames(catalog, 500))
            traces.append([(e.outcome, e.data) for e in link.trace])
        assert traces[0] == traces[1]

    def test_delay(self, clock, catalog):
        link = MAV_SimLink(SimLinkConfig(delay=0.5), clock)
        link.gcs_end.send(_frames(catalog, 1)[0])
        clock.advance(0.4)
        assert link.vehicle_end.recv() is None
        clock.advance(0.1)
        assert link.vehicle_end.recv() is not None

    def test_directions_are_separate(self, clock, catalog):
        link = MAV_SimLink(SimLinkConfig(), clock)
        link.vehicle_end.send(b"\x01")
        assert link.vehicle_end.recv() is None
        assert link.gcs_end.recv() == b"\x01"

    def test_taps_interceptors_and_injection(self, clock):
        link = MAV_SimLink(SimLinkConfig(), clock)
        seen = []
        link.taps.append(lambda direction, data, origin: seen.append((direction, data)))
        link.interceptors.append(lambda direction, data, origin: None if data == b"drop" else data.upper())
        link.gcs_end.send(b"drop")
        link.gcs_end.send(b"abc")
        link.inject(b"xyz", Direction.TO_VEHICLE)
        got = [link.vehicle_end.recv_datagram() for _ in range(2)]
        assert [(d.data, d.origin) for d in got] == [(b"ABC", ORIGIN_ATTACKER), (b"xyz", ORIGIN_ATTACKER)]
        assert seen == [(Direction.TO_VEHICLE, b"drop"), (Direction.TO_VEHICLE, b"abc")]

    def test_jam(self, clock):
        link = MAV_SimLink(SimLinkConfig(), clock)
        link.jam(1.0)
        link.gcs_end.send(b"a")
        clock.advance(1.0)
        link.gcs_end.send(b"b")
        assert link.vehicle_end.recv() == b"b"
        assert link.dropped == 1

    def test_closed(self, clock):
        link = MAV_SimLink(SimLinkConfig(), clock)
        link.close()
        with pytest.raises(LinkError):
            link.gcs_end.send(b"a")

    @pytest.mark.parametrize("kwargs", [{"drop_probability": 1.5}, {"corrupt_probability": -0.1}, {"delay": -1}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ScenarioInvalid):
            SimLinkConfig(**kwargs).validate()


class TestSockets:
    def test_udp_loopback(self, catalog):
        frames = _frames(catalog, 100)
        with open_udp(("127.0.0.1", 0)) as server, open_udp(("127.0.0.1", 0)) as client:
            client.remote = server.local
            for data in frames:
                client.send(data)
            received = []
            while len(received) < 100:
                data = server.recv(timeout=2.0)
                if data is None:
                    break
                received.append(data)
            assert received == frames
            # Replies go back to the last sender
            server.send(frames[0])
            assert client.recv(timeout=2.0) == frames[0]

    def test_tcp_stream(self, catalog):
        frames = _frames(catalog, 100)
        with MAV_TCPLink.listen(("127.0.0.1", 0)) as server:
            with open_tcp(server.local) as client:
                assert server.accept(timeout=2.0)
                client.send(b"".join(frames))
                parser = MAV_Parser(catalog)
                parsed = []
                while len(parsed) < 100:
                    chunk = server.recv(timeout=2.0)
                    if chunk is None:
                        break
                    parsed += [f for f, v in parser.feed(chunk) if v]
        assert len(parsed) == 100

    def test_tcp_send_without_peer(self):
        with MAV_TCPLink.listen(("127.0.0.1", 0)) as server:
            with pytest.raises(LinkError, match="no peer"):
                server.send(b"x")
            assert server.frames_sent == 0
            with open_tcp(server.local) as client:
                server.accept(timeout=2.0)
                server.send(b"hello")
                assert client.recv(timeout=2.0) == b"hello"

    def test_send_on_closed(self):
        link = open_udp(("127.0.0.1", 0), remote=("127.0.0.1", 9))
        link.close()
        with pytest.raises(LinkError):
            link.send(b"x")

    def test_connect_refused(self):
        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        sock.close()
        with pytest.raises(LinkError):
            open_tcp(("127.0.0.1", port))


class TestCapture:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        records = [
            CaptureRecord(int(t), Direction(int(d)), rng.bytes(int(n)))
            for t, d, n in zip(
                np.cumsum(rng.integers(1, 1000, 1000)), rng.integers(0, 2, 1000), rng.integers(8, 280, 1000)
            )
        ]
        path = tmp_path / "cap.bin"
        assert capture_write(path, records) == 1000
        assert capture_read(path) == records

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        assert capture_read(path) == []

    def test_truncated_last_record(self, tmp_path):
        records = [
            CaptureRecord(1, Direction.TO_GCS, b"\x01" * 10),
            CaptureRecord(2, Direction.TO_VEHICLE, b"\x02" * 10),
        ]
        data = b"".join(r.to_bytes() for r in records)
        with pytest.raises(CaptureCorrupt) as info:
            list(capture_iter(data[:-3]))
        assert info.value.offset == len(records[0].to_bytes())
        assert "offset" in str(info.value)

    def test_bad_direction(self):
        data = bytearray(CaptureRecord(1, Direction.TO_GCS, b"\x01").to_bytes())
        data[8] = 7
        with pytest.raises(CaptureCorrupt):
            list(capture_iter(bytes(data)))

    def test_link_capture(self, clock, tmp_path):
        link = MAV_SimLink(SimLinkConfig(), clock)
        path = tmp_path / "link.bin"
        with CaptureWriter(path) as writer:
            link.gcs_end.attach_capture(writer, Direction.TO_VEHICLE)
            link.gcs_end.send(b"\xfd\x00")
            link.vehicle_end.send(b"\xfe\x00")
            clock.advance(0.01)
            link.gcs_end.recv()
        records = capture_read(path)
        assert [(r.direction, r.frame) for r in records] == [
            (Direction.TO_VEHICLE, b"\xfd\x00"),
            (Direction.TO_GCS, b"\xfe\x00"),
        ]
