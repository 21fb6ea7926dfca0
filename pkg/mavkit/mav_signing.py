"""MAVLink 2.0 message signing, verification and per-stream anti-replay state.

The 48 bit signature of a frame is the first 6 bytes of::

    SHA-256(key || frame bytes STX..CRC || link_id || timestamp as 6 LE bytes)

Verification applies its rules in a fixed order: the signature first, then
replay (timestamp not newer than the last one accepted on the stream), then
clock skew (more than one minute away from our clock in either direction).
Replay state lives in memory only, so a restarted receiver accepts any
correctly signed frame newer than one minute ago.
"""

import hashlib
import hmac
import logging
import os
import secrets
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional

from .api_common import BadKeyFile, MAVAPI_Baseclass, UnknownMessage
from .mav_catalog import default_catalog
from .mav_clock import TIMESTAMP_MASK, UNITS_PER_SECOND, MAV_SystemClock, timestamp_now
from .mav_frame import INCOMPAT_SIGNED, FrameV2, SignatureBlock, _as_seed_lookup

logger = logging.getLogger(__name__)

# Next imports are not dependencies, but if you have them installed, we'll use
# them
try:
    import keyring

    # Check that keyring actually is set up and working
    if keyring.get_keyring().name != "fail Keyring":
        keyring_support = True
    else:
        keyring_support = False
except ImportError:
    keyring_support = False

KEY_LEN = 32
KEYRING_SERVICE = "mavkit.signing"
KEYFILE_ENV = "MAVKIT_KEYFILE"
# One minute in timestamp units
SKEW_WINDOW = 60 * UNITS_PER_SECOND


@dataclass(frozen=True)
class SecretKey:
    """32 byte shared signing key. The repr never shows the key material."""

    raw: bytes

    def __post_init__(self):
        object.__setattr__(self, "raw", bytes(self.raw))
        if len(self.raw) != KEY_LEN:
            raise ValueError(f"Signing key must be {KEY_LEN} bytes, got {len(self.raw)}")

    @property
    def hex(self):
        return self.raw.hex()

    @property
    def fingerprint(self):
        """Short identifier of the key, safe to log"""
        return hashlib.sha256(self.raw).hexdigest()[:8]

    @classmethod
    def from_hex(cls, text):
        return cls(bytes.fromhex(text))

    def __repr__(self):
        return f"SecretKey(fingerprint={self.fingerprint})"


class StreamKey(NamedTuple):
    sysid: int
    compid: int
    link_id: int


class UnsignedPolicy(Enum):
    REJECT = "Reject"
    ACCEPT = "Accept"


class VerdictReason(Enum):
    SIGNED_OK = "SignedOK"
    UNSIGNED_ACCEPTED = "UnsignedAccepted"
    UNSIGNED = "Unsigned"
    BAD_SIGNATURE = "BadSignature"
    REPLAY_OR_STALE = "ReplayOrStale"
    CLOCK_SKEW = "ClockSkew"


@dataclass(frozen=True)
class SigningVerdict:
    """Outcome of `verify_frame`. True when the frame is accepted."""

    accepted: bool
    reason: VerdictReason
    signed: bool
    stream: Optional[StreamKey] = None
    timestamp: Optional[int] = None

    def __bool__(self):
        return self.accepted

    def __str__(self):
        if self.accepted:
            return "Accept" if self.signed else "Accept(unsigned)"
        return f"Reject({self.reason.value})"


def compute_signature(key, unsigned_bytes, link_id, timestamp):
    """First 6 bytes of the SHA-256 tag of a frame"""
    h = hashlib.sha256()
    h.update(key.raw)
    h.update(unsigned_bytes)
    h.update(bytes([link_id]))
    h.update(timestamp.to_bytes(6, "little"))
    return h.digest()[:6]


class MAV_SigningContext(MAVAPI_Baseclass):
    """Signing state for one link: key, outgoing timestamp and the last
    accepted timestamp of every stream.

    Not safe for concurrent use; the owner of the link serializes calls.

    Parameters
    ----------
    key : SecretKey
        Shared key.
    clock : clock
        Anything with a `now()` returning an aware datetime.
    unsigned_policy : UnsignedPolicy
        What `verify` does with unsigned frames (default Reject).
    link_id : int
        Link id placed in signatures produced by `sign` (default 0).
    seed_lookup : callable, mapping or catalog
        CRC seed source used to recompute checksums when signing.
    on_reject : callable
        Called with every rejecting SigningVerdict.

    Attributes
    ----------
    out_timestamp : int
        Timestamp of the last signed outgoing frame.
    last_timestamp : dict
        StreamKey -> last accepted timestamp.
    accepted : int
        Count of accepted frames
    rejected : int
        Count of rejected frames
    """

    _parameters = ["unsigned_policy", "link_id"]
    _attributes = ["key", "out_timestamp", "accepted", "rejected"]

    def __init__(
        self, key, clock=None, unsigned_policy=UnsignedPolicy.REJECT, link_id=0, seed_lookup=None, on_reject=None
    ):
        self.key = key if isinstance(key, SecretKey) else SecretKey(key)
        self.clock = clock if clock is not None else MAV_SystemClock()
        self.unsigned_policy = UnsignedPolicy(unsigned_policy)
        self.link_id = link_id
        self._seed_lookup = _as_seed_lookup(seed_lookup if seed_lookup is not None else default_catalog())
        self.on_reject = on_reject
        self.out_timestamp = 0
        self.last_timestamp = dict()
        self.accepted = 0
        self.rejected = 0

    def sign(self, frame, link_id=None):
        return sign_frame(self, frame, self.link_id if link_id is None else link_id)

    def verify(self, frame):
        return verify_frame(self, frame)

    def _reject(self, verdict):
        self.rejected += 1
        if verdict.signed:
            logger.warning(f"Rejected signed frame on stream {tuple(verdict.stream)}: {verdict}")
        else:
            logger.debug(f"Rejected unsigned frame: {verdict}")
        if self.on_reject is not None:
            self.on_reject(verdict)
        return verdict


def sign_frame(ctx, frame, link_id=0):
    """Sign a v2 frame.

    Sets the signed incompatibility bit, recomputes the checksum and appends
    a signature block. The timestamp is the larger of the clock and the last
    outgoing timestamp plus one, so consecutive signatures strictly increase
    even when the clock stalls.
    """
    if not isinstance(frame, FrameV2):
        raise TypeError("Only MAVLink 2.0 frames can be signed")
    seed = ctx._seed_lookup(frame.msgid)
    if seed is None:
        raise UnknownMessage(f"No CRC seed for msgid {frame.msgid}")
    timestamp = max(timestamp_now(ctx.clock), ctx.out_timestamp + 1) & TIMESTAMP_MASK
    ctx.out_timestamp = timestamp
    unsigned = replace(frame, incompat_flags=frame.incompat_flags | INCOMPAT_SIGNED, signature=None).with_crc(seed)
    sig48 = compute_signature(ctx.key, unsigned.unsigned_bytes(), link_id, timestamp)
    return replace(unsigned, signature=SignatureBlock(link_id, timestamp, sig48))


def verify_frame(ctx, frame):
    """Check the signature, freshness and clock skew of a frame that already
    passed its checksum. Returns a SigningVerdict; never raises."""
    if not frame.signed or frame.signature is None:
        if ctx.unsigned_policy is UnsignedPolicy.ACCEPT:
            ctx.accepted += 1
            return SigningVerdict(True, VerdictReason.UNSIGNED_ACCEPTED, False)
        stream = StreamKey(frame.sysid, frame.compid, 0)
        return ctx._reject(SigningVerdict(False, VerdictReason.UNSIGNED, False, stream))

    sig = frame.signature
    stream = StreamKey(frame.sysid, frame.compid, sig.link_id)
    expected = compute_signature(ctx.key, frame.unsigned_bytes(), sig.link_id, sig.timestamp)
    if not hmac.compare_digest(expected, sig.sig48):
        return ctx._reject(SigningVerdict(False, VerdictReason.BAD_SIGNATURE, True, stream, sig.timestamp))

    last = ctx.last_timestamp.get(stream)
    if last is not None and sig.timestamp <= last:
        return ctx._reject(SigningVerdict(False, VerdictReason.REPLAY_OR_STALE, True, stream, sig.timestamp))

    if abs(sig.timestamp - timestamp_now(ctx.clock)) > SKEW_WINDOW:
        return ctx._reject(SigningVerdict(False, VerdictReason.CLOCK_SKEW, True, stream, sig.timestamp))

    ctx.last_timestamp[stream] = sig.timestamp
    ctx.accepted += 1
    return SigningVerdict(True, VerdictReason.SIGNED_OK, True, stream, sig.timestamp)


def keygen(entropy=None):
    """Generate a signing key.

    Parameters
    ----------
    entropy : None, bytes or numpy.random.Generator
        None draws from the operating system. Bytes are hashed into a key,
        which makes the key reproducible. A Generator supplies 32 random
        bytes (for simulations only).
    """
    if entropy is None:
        return SecretKey(secrets.token_bytes(KEY_LEN))
    if isinstance(entropy, (bytes, bytearray, str)):
        if isinstance(entropy, str):
            entropy = entropy.encode()
        return SecretKey(hashlib.sha256(entropy).digest())
    return SecretKey(entropy.bytes(KEY_LEN))


def store_key(key, path, use_keyring=False, name="default"):
    """Write a key file: exactly 64 hex characters and a newline. With
    `use_keyring` the key is also saved in the system keyring."""
    with open(path, "w") as f:
        f.write(key.hex + "\n")
    os.chmod(path, 0o600)
    if use_keyring:
        if not keyring_support:
            warnings.warn("keyring support not available; key saved to file only.")
        else:
            try:
                keyring.set_password(KEYRING_SERVICE, name, key.hex)
            except keyring.errors.PasswordSetError:
                warnings.warn("Could not save key in the system keyring.")
    logger.info(f"Stored signing key {key.fingerprint} in {path}")


def load_key(path=None, use_keyring=False, name="default"):
    """Read a key file. When `path` is None the MAVKIT_KEYFILE environment
    variable is used, then the keyring if `use_keyring` is set.

    Raises
    ------
    BadKeyFile
        The file is not exactly 64 hex characters and a newline, or no key
        source is available.
    """
    if path is None:
        path = os.environ.get(KEYFILE_ENV)
    if path is None:
        if use_keyring and keyring_support:
            text = keyring.get_password(KEYRING_SERVICE, name)
            if text is not None:
                return SecretKey.from_hex(text)
        raise BadKeyFile(f"No key file given and {KEYFILE_ENV} is not set")

    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as exc:
        raise BadKeyFile(f"Cannot read key file {path}: {exc}") from exc
    if len(text) != 2 * KEY_LEN + 1 or not text.endswith("\n"):
        raise BadKeyFile(f"Key file {path} must hold exactly {2 * KEY_LEN} hex characters and a newline")
    try:
        return SecretKey.from_hex(text[:-1])
    except ValueError as exc:
        raise BadKeyFile(f"Key file {path} is not hexadecimal") from exc


# Aliases
SigningContext = MAV_SigningContext
