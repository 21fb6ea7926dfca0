"""Typed message definitions, payload encoding and decoding, and the
enumerations used to interpret them.

The catalog is read from a line oriented definition file (see
`data/common.msgdef`). Each message gets a CRC seed computed once at load
time as the low byte of the X.25 checksum of its canonical description
"NAME:type name;type name;...". The catalog is immutable after loading and
may be shared between threads.
"""

import logging
import struct
from dataclasses import dataclass
from enum import IntEnum, IntFlag
from functools import lru_cache
from importlib import resources

from .api_common import (
    ArityMismatch,
    CatalogSyntaxError,
    LengthMismatch,
    MAVAPI_Baseclass,
    TypeMismatch,
    UnknownMessage,
)
from .mav_crc import crc_x25
from .mav_frame import FrameV1, FrameV2

logger = logging.getLogger(__name__)

MAVLINK_VERSION = 3
# COMMAND_ACK.command value acknowledging a MISSION_ITEM (its msgid)
MISSION_ITEM_ACK = 39

# type name -> (struct code, width, is integer, min, max)
FIELD_TYPES = {
    "u8": ("B", 1, True, 0, 0xFF),
    "u16": ("H", 2, True, 0, 0xFFFF),
    "u32": ("I", 4, True, 0, 0xFFFFFFFF),
    "u64": ("Q", 8, True, 0, 0xFFFFFFFFFFFFFFFF),
    "i8": ("b", 1, True, -0x80, 0x7F),
    "i16": ("h", 2, True, -0x8000, 0x7FFF),
    "i32": ("i", 4, True, -0x80000000, 0x7FFFFFFF),
    "float64": ("d", 8, False, None, None),
}


class MAV_TYPE(IntEnum):
    GENERIC = 0
    FIXED_WING = 1
    QUADROTOR = 2
    HELICOPTER = 4
    GCS = 6


class MAV_AUTOPILOT(IntEnum):
    GENERIC = 0
    ARDUPILOTMEGA = 3
    INVALID = 8
    PX4 = 12


class MAV_MODE_FLAG(IntFlag):
    RESERVED = 1
    TEST = 2
    AUTO = 4
    GUIDED = 8
    STABILIZE = 16
    HIL = 32
    MANUAL = 64
    ARMED = 128


class MAV_STATE(IntEnum):
    UNINIT = 0
    BOOT = 1
    CALIBRATING = 2
    STANDBY = 3
    ACTIVE = 4
    CRITICAL = 5
    EMERGENCY = 6
    POWEROFF = 7
    TERMINATING = 8


class FlightMode(IntEnum):
    """Copter flight modes by heartbeat custom_mode value. STABILIZE is the
    manual mode (custom_mode 0). UNKNOWN is never sent on the wire."""

    UNKNOWN = -1
    STABILIZE = 0
    ALT_HOLD = 2
    GUIDED = 4
    LOITER = 5
    LAND = 9
    AUTO = 10
    RTL = 11

    MANUAL = 0


class MAV_CMD(IntEnum):
    LAND = 21
    TAKEOFF = 22
    DO_SET_MODE = 176
    SET_HOME = 179
    ARM_DISARM = 400
    GET_HOME = 410


class MAV_FRAME(IntEnum):
    GLOBAL = 0
    GLOBAL_RELATIVE_ALT = 3


class MAV_RESULT(IntEnum):
    ACCEPTED = 0
    TEMPORARILY_REJECTED = 1
    DENIED = 2
    UNSUPPORTED = 3
    FAILED = 4


# Mode family bits reported in heartbeat base_mode for each flight mode
MODE_FAMILY_FLAGS = {
    FlightMode.STABILIZE: MAV_MODE_FLAG.MANUAL | MAV_MODE_FLAG.STABILIZE,
    FlightMode.ALT_HOLD: MAV_MODE_FLAG.STABILIZE,
    FlightMode.LOITER: MAV_MODE_FLAG.GUIDED | MAV_MODE_FLAG.STABILIZE,
    FlightMode.GUIDED: MAV_MODE_FLAG.GUIDED | MAV_MODE_FLAG.STABILIZE,
    FlightMode.AUTO: MAV_MODE_FLAG.AUTO | MAV_MODE_FLAG.STABILIZE,
    FlightMode.RTL: MAV_MODE_FLAG.AUTO | MAV_MODE_FLAG.STABILIZE,
    FlightMode.LAND: MAV_MODE_FLAG.AUTO | MAV_MODE_FLAG.STABILIZE,
}


def gps_raw_to_degrees(raw):
    """Convert a degE7 integer to decimal degrees"""
    return raw / 1e7


def degrees_to_gps_raw(degrees):
    """Convert decimal degrees to a degE7 integer"""
    return int(round(degrees * 1e7))


def absolute_alt_from_relative(ground_abs_m, relative_m):
    """Absolute (sea level) altitude from the take-off ground altitude and the
    altitude relative to it, both in metres"""
    return ground_abs_m + relative_m


def decode_base_mode(base_mode):
    """Set of MAV_MODE_FLAG members set in a heartbeat base_mode byte"""
    return {flag for flag in MAV_MODE_FLAG if base_mode & flag}


def flight_mode_from_custom(custom_mode):
    """FlightMode for a heartbeat custom_mode, FlightMode.UNKNOWN if unmapped"""
    try:
        mode = FlightMode(custom_mode)
    except ValueError:
        return FlightMode.UNKNOWN
    return mode


def base_mode_for(mode, armed):
    """Heartbeat base_mode byte for a flight mode and arming state"""
    flags = MODE_FAMILY_FLAGS.get(mode, MAV_MODE_FLAG(0))
    if armed:
        flags |= MAV_MODE_FLAG.ARMED
    return int(flags)


@dataclass(frozen=True)
class FieldDef:
    name: str
    type: str
    unit: str = ""

    @property
    def width(self):
        return FIELD_TYPES[self.type][1]


@dataclass(frozen=True)
class MessageDescriptor:
    """Catalog entry for one message.

    Attributes
    ----------
    msgid : int
        24 bit message id
    name : str
        Message name, e.g. HEARTBEAT
    fields : tuple of FieldDef
        Fields in wire order
    crc_seed : int
        Seed byte appended to the checksum input
    """

    msgid: int
    name: str
    fields: tuple
    crc_seed: int

    @property
    def canonical(self):
        return f"{self.name}:" + "".join(f"{f.type} {f.name};" for f in self.fields)

    @property
    def field_names(self):
        return tuple(f.name for f in self.fields)

    @property
    def payload_len(self):
        return sum(f.width for f in self.fields)

    @property
    def struct(self):
        return _struct_for(tuple(f.type for f in self.fields))

    def offset_of(self, name):
        """Byte offset of a field within the payload"""
        offset = 0
        for f in self.fields:
            if f.name == name:
                return offset
            offset += f.width
        raise KeyError(f"{self.name} has no field '{name}'")

    @classmethod
    def build(cls, msgid, name, fields):
        """Construct a descriptor, computing its CRC seed"""
        fields = tuple(fields)
        canonical = f"{name}:" + "".join(f"{f.type} {f.name};" for f in fields)
        return cls(msgid, name, fields, crc_x25(canonical.encode("ascii")) & 0xFF)


@lru_cache(maxsize=None)
def _struct_for(types):
    return struct.Struct("<" + "".join(FIELD_TYPES[t][0] for t in types))


def encode_payload(descriptor, values):
    """Encode ordered field values into a payload.

    Raises
    ------
    ArityMismatch
        Wrong number of values.
    TypeMismatch
        A value has the wrong type or does not fit its field.
    """
    values = tuple(values)
    if len(values) != len(descriptor.fields):
        raise ArityMismatch(f"{descriptor.name} takes {len(descriptor.fields)} values, got {len(values)}")
    for fdef, value in zip(descriptor.fields, values):
        _code, _width, is_int, lo, hi = FIELD_TYPES[fdef.type]
        if is_int:
            if not isinstance(value, int):
                raise TypeMismatch(f"{descriptor.name}.{fdef.name} ({fdef.type}) needs an int, got {value!r}")
            if not lo <= value <= hi:
                raise TypeMismatch(f"{descriptor.name}.{fdef.name} ({fdef.type}) out of range: {value}")
        elif not isinstance(value, (int, float)):
            raise TypeMismatch(f"{descriptor.name}.{fdef.name} ({fdef.type}) needs a number, got {value!r}")
    return descriptor.struct.pack(*values)


def decode_payload(descriptor, payload):
    """Decode a payload into a tuple of field values.

    Raises
    ------
    LengthMismatch
        If the payload length differs from the declared length.
    """
    if len(payload) != descriptor.payload_len:
        raise LengthMismatch(f"{descriptor.name} payload must be {descriptor.payload_len} bytes, got {len(payload)}")
    return descriptor.struct.unpack(bytes(payload))


class MAV_Message(MAVAPI_Baseclass):
    """A decoded message: a descriptor plus one value per field. Field values
    are available as attributes.

    Attributes
    ----------
    name : str
        Message name
    msgid : int
        Message id
    errors : list
        Problems found by the last call to `validate`
    """

    def __init__(self, descriptor, values):
        values = tuple(values)
        if len(values) != len(descriptor.fields):
            raise ArityMismatch(f"{descriptor.name} takes {len(descriptor.fields)} values, got {len(values)}")
        self.descriptor = descriptor
        self.values = values
        self.errors = list()

    @property
    def _parameters(self):
        return list(self.descriptor.field_names)

    @property
    def name(self):
        return self.descriptor.name

    @property
    def msgid(self):
        return self.descriptor.msgid

    def __getattr__(self, key):
        # Only reached for attributes not found the normal way
        descriptor = self.__dict__.get("descriptor")
        if descriptor is not None and key in descriptor.field_names:
            return self.values[descriptor.field_names.index(key)]
        raise AttributeError(f"{type(self).__name__} has no attribute '{key}'")

    def __eq__(self, other):
        return isinstance(other, MAV_Message) and (self.descriptor, self.values) == (other.descriptor, other.values)

    def __hash__(self):
        return hash((self.descriptor.msgid, self.values))

    def __repr__(self):
        args = ", ".join(f"{n}={v!r}" for n, v in zip(self.descriptor.field_names, self.values))
        return f"{self.name}({args})"

    def to_dict(self):
        return dict(zip(self.descriptor.field_names, self.values))

    def encode(self):
        return encode_payload(self.descriptor, self.values)

    def replace(self, **changes):
        """Copy with some field values changed"""
        values = self.to_dict()
        for key, value in changes.items():
            if key not in values:
                raise TypeError(f"{self.name} has no field '{key}'")
            values[key] = value
        return MAV_Message(self.descriptor, [values[n] for n in self.descriptor.field_names])

    def validate(self):
        """Check field values against their allowed ranges

        Returns
        -------
        bool
            Was validation successful? Problems are listed in `errors`.
        """
        self.errors = list()
        check = _message_checks.get(self.name)
        if check is not None:
            check(self, self.errors)
        return len(self.errors) == 0


def _check_heartbeat(msg, errors):
    if not 0 <= msg.system_status <= 8:
        errors.append(f"system_status {msg.system_status} not in 0..8")


def _check_sys_status(msg, errors):
    if msg.battery_remaining != -1 and not 0 <= msg.battery_remaining <= 100:
        errors.append(f"battery_remaining {msg.battery_remaining} not -1 or 0..100")


def _check_global_position(msg, errors):
    if abs(msg.lat) > 900000000:
        errors.append(f"lat {msg.lat} beyond 90 degrees")
    if abs(msg.lon) > 1800000000:
        errors.append(f"lon {msg.lon} beyond 180 degrees")


def _check_mission_item(msg, errors):
    if msg.frame not in tuple(MAV_FRAME):
        errors.append(f"frame {msg.frame} is not a known MAV_FRAME")


_message_checks = {
    "HEARTBEAT": _check_heartbeat,
    "SYS_STATUS": _check_sys_status,
    "GLOBAL_POSITION": _check_global_position,
    "MISSION_ITEM": _check_mission_item,
}


class MAV_Catalog(MAVAPI_Baseclass):
    """An immutable set of message descriptors indexed by id and name."""

    def __init__(self, descriptors):
        self._by_id = dict()
        self._by_name = dict()
        for descriptor in descriptors:
            if descriptor.msgid in self._by_id:
                raise CatalogSyntaxError(f"Duplicate msgid {descriptor.msgid}")
            if descriptor.name in self._by_name:
                raise CatalogSyntaxError(f"Duplicate message name {descriptor.name}")
            if descriptor.payload_len > 255:
                raise CatalogSyntaxError(f"{descriptor.name} payload is {descriptor.payload_len} bytes, maximum 255")
            self._by_id[descriptor.msgid] = descriptor
            self._by_name[descriptor.name] = descriptor

    @classmethod
    def from_text(cls, text):
        """Parse catalog definition text"""
        descriptors = []
        current = None

        def close():
            if current is not None:
                descriptors.append(MessageDescriptor.build(*current))

        for lineno, line in enumerate(text.splitlines(), start=1):
            words = line.split("#", 1)[0].split()
            if not words:
                continue
            if words[0] == "msg":
                if len(words) != 3:
                    raise CatalogSyntaxError("expected 'msg <id> <NAME>'", lineno)
                close()
                try:
                    msgid = int(words[1], 0)
                except ValueError:
                    raise CatalogSyntaxError(f"bad msgid '{words[1]}'", lineno)
                if not 0 <= msgid <= 0xFFFFFF:
                    raise CatalogSyntaxError(f"msgid {msgid} does not fit in 24 bits", lineno)
                current = (msgid, words[2], [])
            elif words[0] == "field":
                if current is None:
                    raise CatalogSyntaxError("'field' before any 'msg'", lineno)
                if len(words) not in (3, 4):
                    raise CatalogSyntaxError("expected 'field <type> <name> [unit]'", lineno)
                if words[1] not in FIELD_TYPES:
                    raise CatalogSyntaxError(f"unknown field type '{words[1]}'", lineno)
                current[2].append(FieldDef(words[2], words[1], words[3] if len(words) == 4 else ""))
            else:
                raise CatalogSyntaxError(f"unknown keyword '{words[0]}'", lineno)
        close()
        return cls(descriptors)

    @classmethod
    def load(cls, path):
        with open(path, "r") as f:
            return cls.from_text(f.read())

    def __iter__(self):
        return iter(sorted(self._by_id.values(), key=lambda d: d.msgid))

    def __len__(self):
        return len(self._by_id)

    def __contains__(self, key):
        return key in self._by_id or key in self._by_name

    def __getitem__(self, key):
        """Descriptor by msgid or by name"""
        if isinstance(key, str):
            descriptor = self._by_name.get(key)
        else:
            descriptor = self._by_id.get(key)
        if descriptor is None:
            raise UnknownMessage(f"No message {key!r} in catalog")
        return descriptor

    def crc_seed(self, msgid):
        """CRC seed for a msgid, None if the catalog does not know it"""
        descriptor = self._by_id.get(msgid)
        return None if descriptor is None else descriptor.crc_seed

    @property
    def msgids(self):
        return sorted(self._by_id)

    def message(self, name, **values):
        """Build a message by name. Fields not given are zero."""
        descriptor = self[name]
        unknown = set(values) - set(descriptor.field_names)
        if unknown:
            raise TypeError(f"{name} has no field(s) {', '.join(sorted(unknown))}")
        ordered = []
        for f in descriptor.fields:
            default = 0.0 if f.type == "float64" else 0
            ordered.append(values.get(f.name, default))
        return MAV_Message(descriptor, ordered)

    def decode(self, frame):
        """Decode the payload of a frame into a MAV_Message"""
        descriptor = self[frame.msgid]
        return MAV_Message(descriptor, decode_payload(descriptor, frame.payload))

    def frame(self, message, seq, sysid, compid, version=2):
        """Wrap a message in an unsigned frame with its checksum filled in"""
        descriptor = self[message.msgid]
        payload = encode_payload(descriptor, message.values)
        if version == 1:
            frame = FrameV1(seq, sysid, compid, message.msgid, payload)
        else:
            frame = FrameV2(seq, sysid, compid, message.msgid, payload)
        return frame.with_crc(descriptor.crc_seed)

    @property
    def _table(self):
        header = ["msgid", "name", "len", "crc_seed", "fields"]
        table = []
        for d in self:
            fields = " ".join(f"{f.type}:{f.name}" for f in d.fields)
            table.append([d.msgid, d.name, d.payload_len, d.crc_seed, fields])
        return header, table


@lru_cache(maxsize=1)
def default_catalog():
    """The catalog shipped with mavkit"""
    text = resources.files("mavkit").joinpath("data/common.msgdef").read_text()
    return MAV_Catalog.from_text(text)


# Aliases
Catalog = MAV_Catalog
Message = MAV_Message
