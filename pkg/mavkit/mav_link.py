"""Links that move framed bytes between a vehicle and a ground station.

Three transports share one interface (`send`, `recv`, `recv_datagram`,
`close`):

* `MAV_UDPLink`: one frame per datagram.
* `MAV_TCPLink`: a byte stream; receivers run it through a parser.
* `MAV_SimLink`: an in-process link with two endpoints, seeded drop and
  corruption, delay measured on a simulated clock, and hooks for an attacker
  sitting on the wire.

`LinkStats` estimates loss from gaps in the 8 bit sequence number, and the
capture helpers read and write the record format of `mav_frame.CaptureRecord`.
"""

import heapq
import logging
import socket
from dataclasses import dataclass, field

import numpy as np

from .api_common import CaptureCorrupt, LinkError, MAVAPI_Baseclass, ScenarioInvalid
from .mav_clock import MAV_SimClock
from .mav_frame import CaptureRecord, Direction

logger = logging.getLogger(__name__)

# Gaps at or above this are taken as reordering, not loss
REORDER_THRESHOLD = 128
UDP_MAX_DATAGRAM = 65535
TCP_CHUNK = 4096

ORIGIN_VEHICLE = "vehicle"
ORIGIN_GCS = "gcs"
ORIGIN_ATTACKER = "attacker"
ORIGIN_REMOTE = "remote"


class LinkStats(MAVAPI_Baseclass):
    """Loss statistics of one received stream, estimated from sequence gaps.

    Attributes
    ----------
    last_seq : int or None
        Sequence number of the last frame received.
    received : int
        Frames received.
    lost : int
        Frames inferred missing.
    """

    _attributes = ["last_seq", "received", "lost", "drop_ratio"]

    def __init__(self):
        self.last_seq = None
        self.received = 0
        self.lost = 0
        self._received_prior = 0
        self._lost_prior = 0

    @property
    def drop_ratio(self):
        expected = self.lost + self.received
        if expected == 0:
            return 0.0
        return self.lost / expected

    @property
    def drop_rate_comm(self):
        """drop_ratio in the 0.01 % units of SYS_STATUS.drop_rate_comm"""
        return int(round(self.drop_ratio * 10000))

    def update(self, seq):
        return stats_update(self, seq)

    def take_window(self):
        """(received, lost) since the previous call"""
        received = self.received - self._received_prior
        lost = self.lost - self._lost_prior
        self._received_prior = self.received
        self._lost_prior = self.lost
        return received, lost


def stats_update(stats, seq):
    """Account for one received sequence number. Returns `stats`."""
    if stats.last_seq is not None:
        gap = (seq - stats.last_seq - 1) % 256
        if gap < REORDER_THRESHOLD:
            stats.lost += gap
        else:
            logger.debug(f"Sequence went from {stats.last_seq} to {seq}; taken as reordering")
    stats.received += 1
    stats.last_seq = seq
    return stats


@dataclass(frozen=True)
class Datagram:
    """Bytes as handed to a receiver, tagged with who put them on the wire"""

    data: bytes
    origin: str = ORIGIN_REMOTE
    sent_us: int = 0


class MAV_Link(MAVAPI_Baseclass):
    """Common behaviour of all links: closed-state checks and optional
    capture of every frame sent or received.

    Subclasses implement `_send` and `_recv`.
    """

    _attributes = ["closed", "frames_sent", "frames_received"]
    # True when receivers must keep parser state across chunks
    byte_stream = False

    def __init__(self, clock=None):
        self.clock = clock
        self.closed = False
        self.frames_sent = 0
        self.frames_received = 0
        self._capture = None
        self._outbound = Direction.TO_GCS

    def attach_capture(self, writer, outbound=Direction.TO_GCS):
        """Record traffic to a `CaptureWriter`. `outbound` is the direction
        tag used for frames this side sends."""
        self._capture = writer
        self._outbound = Direction(outbound)

    def _record(self, data, direction):
        if self._capture is not None:
            now_us = self.clock.monotonic_us() if self.clock is not None else 0
            self._capture.write(CaptureRecord(now_us, direction, data))

    def send(self, data):
        if self.closed:
            raise LinkError(f"send on closed {type(self).__name__}")
        self._send(bytes(data))
        self.frames_sent += 1
        self._record(data, self._outbound)

    def recv_datagram(self, timeout=None):
        """Next Datagram, or None if nothing is available"""
        if self.closed:
            raise LinkError(f"recv on closed {type(self).__name__}")
        datagram = self._recv(timeout)
        if datagram is not None:
            self.frames_received += 1
            inbound = Direction.TO_VEHICLE if self._outbound is Direction.TO_GCS else Direction.TO_GCS
            self._record(datagram.data, inbound)
        return datagram

    def recv(self, timeout=None):
        """Next chunk of bytes, or None if nothing is available"""
        datagram = self.recv_datagram(timeout)
        return None if datagram is None else datagram.data

    def close(self):
        self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class MAV_UDPLink(MAV_Link):
    """UDP link. Each `send` is one datagram.

    Parameters
    ----------
    local : tuple
        (host, port) to bind; port 0 picks a free port.
    remote : tuple or None
        (host, port) to send to. If None, replies go to the sender of the
        most recent datagram received.
    """

    _parameters = ["local", "remote"]

    def __init__(self, local=("127.0.0.1", 0), remote=None, clock=None):
        super().__init__(clock)
        self.remote = remote
        try:
            self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self.sock.bind(local)
        except OSError as exc:
            raise LinkError(f"Cannot bind UDP socket to {local}: {exc}") from exc
        self.local = self.sock.getsockname()

    def _send(self, data):
        if self.remote is None:
            raise LinkError("UDP link has no remote address yet")
        try:
            self.sock.sendto(data, self.remote)
        except OSError as exc:
            raise LinkError(f"UDP send to {self.remote} failed: {exc}") from exc

    def _recv(self, timeout):
        try:
            self.sock.settimeout(timeout)
            data, addr = self.sock.recvfrom(UDP_MAX_DATAGRAM)
        except (socket.timeout, BlockingIOError):
            return None
        except OSError as exc:
            raise LinkError(f"UDP receive failed: {exc}") from exc
        if self.remote is None:
            self.remote = addr
            logger.info(f"UDP peer is {addr[0]}:{addr[1]}")
        return Datagram(data, ORIGIN_REMOTE)

    def close(self):
        if not self.closed:
            self.sock.close()
        super().close()


class MAV_TCPLink(MAV_Link):
    """TCP link carrying a byte stream. Build it with `connect` or `listen`.
    A listening link accepts one peer in `accept` or on first receive; sending
    before that peer has connected raises LinkError."""

    _parameters = ["local", "remote"]
    byte_stream = True

    def __init__(self, sock, listening=False, clock=None):
        super().__init__(clock)
        self.sock = sock
        self._listener = sock if listening else None
        self._conn = None if listening else sock
        self.local = sock.getsockname()
        self.remote = None if listening else sock.getpeername()

    @classmethod
    def connect(cls, remote, timeout=5.0, clock=None):
        try:
            sock = socket.create_connection(remote, timeout=timeout)
        except OSError as exc:
            raise LinkError(f"Cannot connect to {remote[0]}:{remote[1]}: {exc}") from exc
        return cls(sock, clock=clock)

    @classmethod
    def listen(cls, local=("127.0.0.1", 0), clock=None):
        try:
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            sock.bind(local)
            sock.listen(1)
        except OSError as exc:
            raise LinkError(f"Cannot listen on {local}: {exc}") from exc
        return cls(sock, listening=True, clock=clock)

    def accept(self, timeout=None):
        """Wait for the peer of a listening link"""
        if self._conn is None:
            try:
                self._listener.settimeout(timeout)
                self._conn, self.remote = self._listener.accept()
                self._conn.settimeout(None)
            except (socket.timeout, BlockingIOError):
                return False
            except OSError as exc:
                raise LinkError(f"TCP accept failed: {exc}") from exc
            logger.info(f"TCP peer is {self.remote[0]}:{self.remote[1]}")
        return True

    def _send(self, data):
        if not self.accept(timeout=0.0):
            raise LinkError("TCP link has no peer yet")
        try:
            self._conn.sendall(data)
        except OSError as exc:
            raise LinkError(f"TCP send failed: {exc}") from exc

    def _recv(self, timeout):
        if not self.accept(timeout):
            return None
        try:
            self._conn.settimeout(timeout)
            data = self._conn.recv(TCP_CHUNK)
        except (socket.timeout, BlockingIOError):
            return None
        except OSError as exc:
            raise LinkError(f"TCP receive failed: {exc}") from exc
        if not data:
            raise LinkError("TCP peer closed the connection")
        return Datagram(data, ORIGIN_REMOTE)

    def close(self):
        if not self.closed:
            for sock in {self._conn, self._listener}:
                if sock is not None:
                    sock.close()
        super().close()


def open_udp(local, remote=None, clock=None):
    return MAV_UDPLink(local, remote, clock=clock)


def open_tcp(address, listen=False, clock=None):
    if listen:
        return MAV_TCPLink.listen(address, clock=clock)
    return MAV_TCPLink.connect(address, clock=clock)


@dataclass
class SimLinkConfig:
    """Impairments of a simulated link.

    Attributes
    ----------
    drop_probability : float
        Chance each datagram is lost.
    corrupt_probability : float
        Chance one uniformly chosen bit of a delivered datagram is flipped.
    delay : float
        Seconds between send and delivery on the simulated clock.
    rng_seed : int
        Seed of the link's random generator.
    """

    drop_probability: float = 0.0
    corrupt_probability: float = 0.0
    delay: float = 0.0
    rng_seed: int = 0

    def validate(self):
        """Raise ScenarioInvalid if a field is out of range"""
        for name in ("drop_probability", "corrupt_probability"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ScenarioInvalid(f"{name} must be in [0, 1], got {value}")
        if self.delay < 0:
            raise ScenarioInvalid(f"delay must not be negative, got {self.delay}")
        if self.rng_seed < 0:
            raise ScenarioInvalid(f"rng_seed must not be negative, got {self.rng_seed}")
        return True


@dataclass(frozen=True)
class TraceEntry:
    sent_us: int
    direction: Direction
    origin: str
    outcome: str
    data: bytes = field(repr=False)


class MAV_SimLinkEndpoint(MAV_Link):
    """One side of a `MAV_SimLink`"""

    def __init__(self, link, outbound, name):
        super().__init__(link.clock)
        self.link = link
        self.name = name
        self._outbound = outbound
        self.inbound = Direction.TO_VEHICLE if outbound is Direction.TO_GCS else Direction.TO_GCS

    def _send(self, data):
        self.link.transmit(data, self._outbound, self.name)

    def _recv(self, timeout=None):
        return self.link.deliver(self.inbound)

    def pending(self):
        """Datagrams queued towards this endpoint, due or not"""
        return len(self.link._queues[self.inbound])


class MAV_SimLink(MAVAPI_Baseclass):
    """In-process bidirectional link between a vehicle and a ground station.

    Every datagram is drawn against the seeded generator for drop and
    corruption in a fixed order, so equal seeds and equal traffic produce
    equal traces. Delivery happens once the simulated clock reaches
    send time plus `delay`.

    Attributes
    ----------
    vehicle_end : MAV_SimLinkEndpoint
        Endpoint used by the vehicle (sends TO_GCS)
    gcs_end : MAV_SimLinkEndpoint
        Endpoint used by the ground station (sends TO_VEHICLE)
    trace : list of TraceEntry
        Every datagram put on the link and what happened to it
    taps : list
        Callables `tap(direction, data, origin)` that see every datagram sent
        by either endpoint
    interceptors : list
        Callables `f(direction, data, origin)` returning bytes to forward or
        None to swallow the datagram. Changed bytes are tagged as attacker
        traffic.
    """

    _parameters = ["config"]
    _attributes = ["delivered", "dropped", "corrupted"]

    def __init__(self, config=None, clock=None):
        self.config = config if config is not None else SimLinkConfig()
        self.config.validate()
        self.clock = clock if clock is not None else MAV_SimClock()
        self.rng = np.random.default_rng(self.config.rng_seed)
        self._queues = {Direction.TO_VEHICLE: [], Direction.TO_GCS: []}
        self._counter = 0
        self.trace = []
        self.taps = []
        self.interceptors = []
        self.jam_until_us = None
        self.delivered = 0
        self.dropped = 0
        self.corrupted = 0
        self.vehicle_end = MAV_SimLinkEndpoint(self, Direction.TO_GCS, ORIGIN_VEHICLE)
        self.gcs_end = MAV_SimLinkEndpoint(self, Direction.TO_VEHICLE, ORIGIN_GCS)

    def jam(self, duration):
        """Swallow everything sent for the next `duration` simulated seconds"""
        self.jam_until_us = self.clock.monotonic_us() + int(round(duration * 1e6))
        logger.info(f"Link jammed for {duration} s")

    def transmit(self, data, direction, origin):
        """Put a datagram sent by an endpoint on the wire"""
        for tap in self.taps:
            tap(direction, data, origin)
        for interceptor in self.interceptors:
            result = interceptor(direction, data, origin)
            if result is None:
                self._log(direction, origin, "intercepted", data)
                return
            if result != data:
                data, origin = bytes(result), ORIGIN_ATTACKER
        self._impair_and_queue(data, direction, origin)

    def inject(self, data, direction, origin=ORIGIN_ATTACKER):
        """Put a datagram on the wire without it passing the taps"""
        self._impair_and_queue(bytes(data), Direction(direction), origin)

    def _log(self, direction, origin, outcome, data):
        self.trace.append(TraceEntry(self.clock.monotonic_us(), direction, origin, outcome, data))

    def _impair_and_queue(self, data, direction, origin):
        now_us = self.clock.monotonic_us()
        # Draws happen for every datagram so the random stream does not depend on outcomes
        drop_draw, corrupt_draw = self.rng.random(2)
        bit = int(self.rng.integers(0, max(1, len(data) * 8)))

        if self.jam_until_us is not None and now_us < self.jam_until_us:
            self.dropped += 1
            self._log(direction, origin, "jammed", data)
            return
        if drop_draw < self.config.drop_probability:
            self.dropped += 1
            self._log(direction, origin, "dropped", data)
            return
        outcome = "queued"
        if data and corrupt_draw < self.config.corrupt_probability:
            corrupted = bytearray(data)
            corrupted[bit // 8] ^= 1 << (bit % 8)
            data = bytes(corrupted)
            self.corrupted += 1
            outcome = "corrupted"
        self._log(direction, origin, outcome, data)
        deliver_us = now_us + int(round(self.config.delay * 1e6))
        heapq.heappush(self._queues[direction], (deliver_us, self._counter, Datagram(data, origin, now_us)))
        self._counter += 1

    def deliver(self, direction):
        """Pop the next datagram due in `direction`, or None"""
        queue = self._queues[direction]
        if queue and queue[0][0] <= self.clock.monotonic_us():
            self.delivered += 1
            return heapq.heappop(queue)[2]
        return None

    def close(self):
        self.vehicle_end.close()
        self.gcs_end.close()


def sim_link(config=None, clock=None):
    return MAV_SimLink(config, clock)


class CaptureWriter:
    """Append capture records to a file as they happen"""

    def __init__(self, path):
        self.path = path
        self._file = open(path, "wb")
        self.records = 0

    def write(self, record):
        self._file.write(record.to_bytes())
        self.records += 1

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def capture_write(path, records):
    with CaptureWriter(path) as writer:
        for record in records:
            writer.write(record)
    return writer.records


def capture_read(path):
    """Read every record of a capture file.

    Raises
    ------
    CaptureCorrupt
        If the file ends inside a record; the offset is that of the
        incomplete record.
    """
    with open(path, "rb") as f:
        data = f.read()
    return list(capture_iter(data))


def capture_iter(data):
    header = CaptureRecord.header
    offset = 0
    while offset < len(data):
        if offset + header.size > len(data):
            raise CaptureCorrupt("Truncated record header", offset)
        timestamp_us, direction, length = header.unpack_from(data, offset)
        end = offset + header.size + length
        if end > len(data):
            available = len(data) - offset - header.size
            raise CaptureCorrupt(f"Record needs {length} frame bytes, file has {available}", offset)
        try:
            record = CaptureRecord(timestamp_us, direction, data[offset + header.size : end])
        except ValueError as exc:
            raise CaptureCorrupt(f"Bad direction byte {direction}", offset) from exc
        yield record
        offset = end


# Aliases
Link = MAV_Link
UDPLink = MAV_UDPLink
TCPLink = MAV_TCPLink
SimLink = MAV_SimLink
