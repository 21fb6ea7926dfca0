"""Byte exact serialization and streaming deserialization of MAVLink 1.0 and
2.0 frames.

Wire layout (all multi-byte fields little endian)::

    v1: STX(0xFE) LEN SEQ SYS COMP MSG payload[LEN] CKA CKB
    v2: STX(0xFD) LEN INCOMPAT COMPAT SEQ SYS COMP MSGID[3] payload[LEN] CKA CKB [signature[13]]

The checksum covers every header byte after STX, the payload, and finally
the per-message CRC seed byte from the catalog. For v2 the signature block
is not part of the checksum.
"""

import logging
import re
import struct
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import ClassVar, Optional

from .api_common import (
    FlagSignatureMismatch,
    LengthMismatch,
    MAVAPI_Baseclass,
    PayloadTooLong,
)
from .mav_crc import crc_x25

logger = logging.getLogger(__name__)

STX_V1 = 0xFE
STX_V2 = 0xFD
HEADER_LEN_V1 = 6
HEADER_LEN_V2 = 10
CHECKSUM_LEN = 2
SIGNATURE_LEN = 13
MAX_PAYLOAD_LEN = 255
MAX_MSGID_V1 = 0xFF
MAX_MSGID_V2 = 0xFFFFFF

# Incompatibility flag bits
INCOMPAT_SIGNED = 0x01
INCOMPAT_KNOWN = INCOMPAT_SIGNED

# Conventional system id of a ground station
GCS_SYSID = 255

_stx_regex = re.compile(b"[\xfd\xfe]")


def _check_u8(name, value):
    if not 0 <= value <= 0xFF:
        raise ValueError(f"{name} must be in 0..255, got {value}")


def seq_next(current):
    """Next value of the rolling 8 bit sequence number"""
    return (current + 1) % 256


@dataclass(frozen=True)
class SignatureBlock:
    """13 byte MAVLink 2.0 signature trailer.

    Attributes
    ----------
    link_id : int
        Channel the frame was sent on.
    timestamp : int
        48 bit timestamp in 10 microsecond units since 2015-01-01 00:00:00 GMT.
    sig48 : bytes
        First 6 bytes of the SHA-256 tag.
    """

    link_id: int
    timestamp: int
    sig48: bytes

    def __post_init__(self):
        _check_u8("link_id", self.link_id)
        if not 0 <= self.timestamp < (1 << 48):
            raise ValueError(f"timestamp must fit in 48 bits, got {self.timestamp}")
        object.__setattr__(self, "sig48", bytes(self.sig48))
        if len(self.sig48) != 6:
            raise ValueError(f"sig48 must be 6 bytes, got {len(self.sig48)}")

    def to_bytes(self):
        return bytes([self.link_id]) + self.timestamp.to_bytes(6, "little") + self.sig48

    @classmethod
    def from_bytes(cls, data):
        if len(data) != SIGNATURE_LEN:
            raise LengthMismatch(f"Signature block must be {SIGNATURE_LEN} bytes, got {len(data)}")
        return cls(data[0], int.from_bytes(data[1:7], "little"), bytes(data[7:13]))


@dataclass(frozen=True)
class FrameV1:
    """A MAVLink 1.0 frame. `crc` is filled in by the parser or by
    `with_crc`, and is not part of equality."""

    seq: int
    sysid: int
    compid: int
    msgid: int
    payload: bytes = b""
    crc: Optional[int] = field(default=None, compare=False)

    stx: ClassVar[int] = STX_V1
    version: ClassVar[int] = 1
    header_len: ClassVar[int] = HEADER_LEN_V1

    def __post_init__(self):
        object.__setattr__(self, "payload", bytes(self.payload))
        for name in ("seq", "sysid", "compid", "msgid"):
            _check_u8(name, getattr(self, name))

    @property
    def len(self):
        return len(self.payload)

    @property
    def signed(self):
        return False

    @property
    def wire_size(self):
        return HEADER_LEN_V1 + self.len + CHECKSUM_LEN

    def header_bytes(self):
        """Header bytes covered by the checksum: LEN..MSGID"""
        return bytes([self.len & 0xFF, self.seq, self.sysid, self.compid, self.msgid])

    def to_bytes(self):
        """Wire bytes using the stored checksum"""
        if self.crc is None:
            raise ValueError("Frame has no checksum; serialize it with a seed first")
        return bytes([self.stx]) + self.header_bytes() + self.payload + struct.pack("<H", self.crc)

    def with_crc(self, seed):
        return replace(self, crc=frame_crc(self, seed))


@dataclass(frozen=True)
class FrameV2:
    """A MAVLink 2.0 frame. The signature block is present iff bit 0x01 of
    `incompat_flags` is set. `compat_flags` are carried, never interpreted."""

    seq: int
    sysid: int
    compid: int
    msgid: int
    payload: bytes = b""
    incompat_flags: int = 0
    compat_flags: int = 0
    signature: Optional[SignatureBlock] = None
    crc: Optional[int] = field(default=None, compare=False)

    stx: ClassVar[int] = STX_V2
    version: ClassVar[int] = 2
    header_len: ClassVar[int] = HEADER_LEN_V2

    def __post_init__(self):
        object.__setattr__(self, "payload", bytes(self.payload))
        for name in ("seq", "sysid", "compid", "incompat_flags", "compat_flags"):
            _check_u8(name, getattr(self, name))
        if not 0 <= self.msgid <= MAX_MSGID_V2:
            raise ValueError(f"msgid must be in 0..{MAX_MSGID_V2}, got {self.msgid}")

    @property
    def len(self):
        return len(self.payload)

    @property
    def signed(self):
        return bool(self.incompat_flags & INCOMPAT_SIGNED)

    @property
    def wire_size(self):
        return HEADER_LEN_V2 + self.len + CHECKSUM_LEN + (SIGNATURE_LEN if self.signed else 0)

    def header_bytes(self):
        """Header bytes covered by the checksum: LEN..MSGID"""
        return bytes(
            [self.len & 0xFF, self.incompat_flags, self.compat_flags, self.seq, self.sysid, self.compid]
        ) + self.msgid.to_bytes(3, "little")

    def unsigned_bytes(self):
        """STX..CRC with the stored checksum, i.e. the part covered by the signature"""
        if self.crc is None:
            raise ValueError("Frame has no checksum; serialize it with a seed first")
        return bytes([self.stx]) + self.header_bytes() + self.payload + struct.pack("<H", self.crc)

    def to_bytes(self):
        """Wire bytes using the stored checksum"""
        out = self.unsigned_bytes()
        if self.signature is not None:
            out += self.signature.to_bytes()
        return out

    def with_crc(self, seed):
        return replace(self, crc=frame_crc(self, seed))


def frame_crc(frame, seed):
    """Checksum of a frame: X.25 over LEN..MSGID, the payload and the seed byte"""
    _check_u8("seed", seed)
    return crc_x25(frame.header_bytes() + frame.payload + bytes([seed]))


def _check_payload(frame):
    if frame.len > MAX_PAYLOAD_LEN:
        raise PayloadTooLong(f"Payload is {frame.len} bytes, maximum is {MAX_PAYLOAD_LEN}")


def serialize_v1(frame, seed):
    """Serialize a v1 frame; output is exactly 8 + len bytes"""
    _check_payload(frame)
    return frame.with_crc(seed).to_bytes()


def serialize_v2(frame, seed):
    """Serialize a v2 frame; output is 12 + len bytes, plus 13 if signed"""
    _check_payload(frame)
    if frame.signed != (frame.signature is not None):
        raise FlagSignatureMismatch(
            f"incompat_flags=0x{frame.incompat_flags:02x} disagrees with "
            f"signature {'present' if frame.signature is not None else 'absent'}"
        )
    return frame.with_crc(seed).to_bytes()


def serialize(frame, seed):
    if frame.version == 1:
        return serialize_v1(frame, seed)
    return serialize_v2(frame, seed)


def frame_from_bytes(raw):
    """Build a frame from the exact bytes of one candidate frame. No checksum
    verification is done here."""
    if raw[0] == STX_V1:
        payload_len = raw[1]
        payload = raw[HEADER_LEN_V1 : HEADER_LEN_V1 + payload_len]
        (crc,) = struct.unpack_from("<H", raw, HEADER_LEN_V1 + payload_len)
        return FrameV1(raw[2], raw[3], raw[4], raw[5], payload, crc=crc)
    if raw[0] == STX_V2:
        payload_len = raw[1]
        end = HEADER_LEN_V2 + payload_len
        (crc,) = struct.unpack_from("<H", raw, end)
        signature = None
        if raw[2] & INCOMPAT_SIGNED:
            signature = SignatureBlock.from_bytes(raw[end + CHECKSUM_LEN : end + CHECKSUM_LEN + SIGNATURE_LEN])
        return FrameV2(
            seq=raw[4],
            sysid=raw[5],
            compid=raw[6],
            msgid=int.from_bytes(raw[7:10], "little"),
            payload=raw[HEADER_LEN_V2:end],
            incompat_flags=raw[2],
            compat_flags=raw[3],
            signature=signature,
            crc=crc,
        )
    raise ValueError(f"Not a start of frame byte: 0x{raw[0]:02x}")


class CrcVerdict(Enum):
    CRC_OK = "CRC OK"
    CRC_BAD = "CRC BAD"

    def __bool__(self):
        return self is CrcVerdict.CRC_OK


class ParserState(Enum):
    IDLE = "Idle"
    COLLECTING_V1 = "CollectingV1"
    COLLECTING_V2 = "CollectingV2"


def _as_seed_lookup(seed_lookup):
    """Accept a callable, a mapping or a catalog (anything with crc_seed)"""
    if hasattr(seed_lookup, "crc_seed"):
        return seed_lookup.crc_seed
    if hasattr(seed_lookup, "get"):
        return seed_lookup.get
    return seed_lookup


class MAV_Parser(MAVAPI_Baseclass):
    """Streaming parser for interleaved MAVLink 1.0 / 2.0 byte streams.

    Scans for a start byte, collects a candidate frame using LEN, and checks
    the checksum with the seed returned by `seed_lookup`. When the checksum
    fails, the msgid has no seed, or a v2 frame carries an incompatibility
    flag we do not understand, the parser drops one byte past the candidate
    STX and rescans. Signatures are attached but not verified.

    One parser instance per input stream; not safe for concurrent feeding.

    Attributes
    ----------
    state : ParserState
        Current scanning state
    frames_ok : int
        Frames emitted with a good checksum
    frames_bad_crc : int
        Frames emitted with a bad checksum
    frames_unknown : int
        Candidates dropped because the msgid has no CRC seed
    bytes_discarded : int
        Bytes dropped while scanning or resynchronising
    """

    _parameters = []
    _attributes = ["state", "frames_ok", "frames_bad_crc", "frames_unknown", "bytes_discarded"]

    def __init__(self, seed_lookup):
        self._seed_lookup = _as_seed_lookup(seed_lookup)
        self.buffer = bytearray()
        self.state = ParserState.IDLE
        self.frames_ok = 0
        self.frames_bad_crc = 0
        self.frames_unknown = 0
        self.bytes_discarded = 0

    def _resync(self):
        """Drop the candidate STX and go back to scanning"""
        del self.buffer[0]
        self.bytes_discarded += 1
        self.state = ParserState.IDLE

    def _scan(self):
        """Discard bytes up to the next start byte. Returns False if there is none."""
        match = _stx_regex.search(self.buffer)
        if match is None:
            self.bytes_discarded += len(self.buffer)
            self.buffer.clear()
            return False
        if match.start() > 0:
            self.bytes_discarded += match.start()
            del self.buffer[: match.start()]
        self.state = ParserState.COLLECTING_V1 if self.buffer[0] == STX_V1 else ParserState.COLLECTING_V2
        return True

    def feed(self, data):
        """Feed bytes, returning a list of (frame, CrcVerdict) emitted"""
        self.buffer.extend(data)
        emitted = []
        buf = self.buffer
        while True:
            if self.state is ParserState.IDLE and not self._scan():
                break

            if self.state is ParserState.COLLECTING_V1:
                header_len = HEADER_LEN_V1
                if len(buf) < header_len:
                    break
                msgid = buf[5]
                total = header_len + buf[1] + CHECKSUM_LEN
            else:
                header_len = HEADER_LEN_V2
                if len(buf) < header_len:
                    break
                if buf[2] & ~INCOMPAT_KNOWN:
                    logger.debug(f"Unknown incompat flags 0x{buf[2]:02x}; resyncing")
                    self._resync()
                    continue
                msgid = int.from_bytes(buf[7:10], "little")
                total = header_len + buf[1] + CHECKSUM_LEN + (SIGNATURE_LEN if buf[2] & INCOMPAT_SIGNED else 0)

            seed = self._seed_lookup(msgid)
            if seed is None:
                self.frames_unknown += 1
                self._resync()
                continue
            if len(buf) < total:
                break

            frame = frame_from_bytes(bytes(buf[:total]))
            if frame_crc(frame, seed) == frame.crc:
                self.frames_ok += 1
                emitted.append((frame, CrcVerdict.CRC_OK))
                del buf[:total]
                self.state = ParserState.IDLE
            else:
                self.frames_bad_crc += 1
                logger.debug(f"Bad checksum on msgid {msgid} seq {frame.seq}; resyncing")
                emitted.append((frame, CrcVerdict.CRC_BAD))
                self._resync()
        return emitted

    def flush(self):
        """End of input. A partial candidate with a known msgid whose LEN runs
        past the buffered bytes is emitted as CRC_BAD, the missing bytes read
        as zero. Returns a list of (frame, CrcVerdict) like `feed`."""
        buf = self.buffer
        if self.state is ParserState.IDLE or not buf:
            return []
        if self.state is ParserState.COLLECTING_V1:
            if len(buf) < HEADER_LEN_V1:
                return []
            msgid = buf[5]
            total = HEADER_LEN_V1 + buf[1] + CHECKSUM_LEN
        else:
            if len(buf) < HEADER_LEN_V2:
                return []
            msgid = int.from_bytes(buf[7:10], "little")
            total = HEADER_LEN_V2 + buf[1] + CHECKSUM_LEN + (SIGNATURE_LEN if buf[2] & INCOMPAT_SIGNED else 0)
        if self._seed_lookup(msgid) is None:
            return []
        frame = frame_from_bytes(bytes(buf) + bytes(total - len(buf)))
        logger.debug(f"Input ends {total - len(buf)} bytes short of msgid {msgid} seq {frame.seq}")
        self.frames_bad_crc += 1
        self.bytes_discarded += len(buf)
        self.reset()
        return [(frame, CrcVerdict.CRC_BAD)]

    def reset(self):
        """Forget any partial frame. Counters are kept."""
        self.buffer.clear()
        self.state = ParserState.IDLE


def parser_feed(state, data, seed_lookup=None):
    """Functional form of `MAV_Parser.feed`. `seed_lookup` replaces the
    parser's lookup when given."""
    if seed_lookup is not None:
        state._seed_lookup = _as_seed_lookup(seed_lookup)
    return state.feed(data)


def parse_bytes(data, seed_lookup):
    """Parse the first frame in `data`. Returns (frame, CrcVerdict).

    `data` is the whole input: a candidate whose LEN runs past its end is
    reported as CRC_BAD.

    Raises
    ------
    LengthMismatch
        If `data` holds no frame header with a known msgid.
    """
    parser = MAV_Parser(seed_lookup)
    emitted = parser.feed(data) or parser.flush()
    if not emitted:
        raise LengthMismatch(f"No complete frame in {len(data)} bytes")
    return emitted[0]


class Direction(IntEnum):
    TO_VEHICLE = 0
    TO_GCS = 1


_capture_header = struct.Struct("<QBH")


@dataclass(frozen=True)
class CaptureRecord:
    """One record of a capture file:
    [u64 monotonic microseconds LE][u8 direction][u16 frame length LE][frame bytes]"""

    timestamp_us: int
    direction: Direction
    frame: bytes

    header: ClassVar[struct.Struct] = _capture_header

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "frame", bytes(self.frame))

    def to_bytes(self):
        return self.header.pack(self.timestamp_us, self.direction, len(self.frame)) + self.frame


# Aliases
Parser = MAV_Parser
