"""Ground station core: vehicle supervision, command and mission dispatch,
and a small rule-based intrusion detector.

A `MAV_GroundStation` owns one link. Every `step` it sends its own heartbeat
when due, drains the link, verifies and decodes what arrived, updates one
`VehicleView` per system id, resends unacknowledged commands and runs the
detection rules. Requests return status objects that resolve as later steps
see acknowledgements; `wait` pumps until one is done.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, fields
from enum import Enum
from typing import NamedTuple

from .api_common import (
    LengthMismatch,
    MAVAPI_Baseclass,
    NonContiguousSeq,
    ScenarioInvalid,
    UnknownMessage,
    read_keyvalue_file,
)
from .api_status import MAV_Status
from .mav_catalog import (
    MAV_AUTOPILOT,
    MAV_CMD,
    MAV_FRAME,
    MAV_MODE_FLAG,
    MAV_RESULT,
    MAV_STATE,
    MAV_TYPE,
    MAVLINK_VERSION,
    MISSION_ITEM_ACK,
    FlightMode,
    MAV_Message,
    decode_base_mode,
    default_catalog,
    flight_mode_from_custom,
    gps_raw_to_degrees,
)
from .mav_clock import MAV_SimClock
from .mav_frame import GCS_SYSID, MAV_Parser, seq_next
from .mav_link import ORIGIN_REMOTE, LinkStats, stats_update
from .mav_vehicle import METERS_PER_DEGREE, AcceptedFrame

logger = logging.getLogger(__name__)

GCS_COMPID = 190


class GlobalPositionView(NamedTuple):
    """GLOBAL_POSITION in degrees, metres and m/s"""

    lat: float
    lon: float
    alt: float
    relative_alt: float
    vx: float
    vy: float
    vz: float
    hdg: float


class VehicleView(MAVAPI_Baseclass):
    """What the ground station knows about one vehicle.

    Attributes
    ----------
    sysid : int
        System id of the vehicle
    last_heartbeat : float
        Time the last heartbeat arrived, None before the first
    mode : FlightMode
        Decoded from custom_mode
    armed : bool
        ARMED bit of base_mode
    position : GlobalPositionView
        Last reported position
    battery_pct : int
        Last reported battery_remaining
    link : LinkStats
        Loss statistics of the vehicle's stream
    alive : bool
        A heartbeat arrived within the liveness window
    """

    _parameters = ["sysid"]
    _attributes = ["alive", "mode", "armed", "system_status", "position", "battery_pct", "home", "drop_ratio"]

    def __init__(self, sysid, heartbeat_period=1.0, liveness_factor=3.0):
        self.sysid = sysid
        self.liveness_window = heartbeat_period * liveness_factor
        self.last_heartbeat = None
        self.mode = FlightMode.UNKNOWN
        self.armed = False
        self.mode_flags = set()
        self.system_status = None
        self.position = None
        self.position_time = None
        self.battery_pct = None
        self.errors_comm = None
        self.home = None
        self.link = LinkStats()
        self.heartbeats = 0
        self.alive = False

    @property
    def drop_ratio(self):
        return round(self.link.drop_ratio, 4)

    def refresh(self, now):
        """Recompute liveness at time `now`"""
        was_alive = self.alive
        self.alive = self.last_heartbeat is not None and now - self.last_heartbeat < self.liveness_window
        if was_alive and not self.alive:
            logger.warning(f"Vehicle {self.sysid} lost: no heartbeat for {now - self.last_heartbeat:.1f} s")
        return self.alive


def ingest(view, frame, now, catalog=None, msg=None):
    """Update a view from one verified frame. Returns the view."""
    catalog = catalog if catalog is not None else default_catalog()
    msg = msg if msg is not None else catalog.decode(frame)
    stats_update(view.link, frame.seq)

    if msg.name == "HEARTBEAT":
        view.last_heartbeat = now
        view.heartbeats += 1
        view.mode_flags = decode_base_mode(msg.base_mode)
        view.armed = MAV_MODE_FLAG.ARMED in view.mode_flags
        mode = flight_mode_from_custom(msg.custom_mode)
        if mode is not view.mode:
            logger.info(f"Vehicle {view.sysid} mode {view.mode.name} -> {mode.name}")
        view.mode = mode
        try:
            view.system_status = MAV_STATE(msg.system_status)
        except ValueError:
            view.system_status = None
        view.alive = True
    elif msg.name == "GLOBAL_POSITION":
        view.position = GlobalPositionView(
            lat=gps_raw_to_degrees(msg.lat),
            lon=gps_raw_to_degrees(msg.lon),
            alt=msg.alt / 1000,
            relative_alt=msg.relative_alt / 1000,
            vx=msg.vx / 100,
            vy=msg.vy / 100,
            vz=msg.vz / 100,
            hdg=msg.hdg / 100,
        )
        view.position_time = now
    elif msg.name == "SYS_STATUS":
        view.battery_pct = msg.battery_remaining
        view.errors_comm = msg.errors_comm
    elif msg.name == "MISSION_ITEM" and msg.seq == 0:
        view.home = (msg.x, msg.y, msg.z)
    return view


class DetectionRule(Enum):
    HEARTBEAT_GAP = "HeartbeatGap"
    SEQ_LOSS_SPIKE = "SeqLossSpike"
    TIMESTAMP_ANOMALY = "TimestampAnomaly"
    FLOOD_RATE = "FloodRate"
    POSITION_JUMP = "PositionJump"


@dataclass(frozen=True)
class Alert:
    """A fired detection rule. `evidence` is a tuple of (name, value) pairs."""

    rule: DetectionRule
    time: float
    sysid: int = None
    evidence: tuple = ()

    @property
    def details(self):
        return dict(self.evidence)

    def __str__(self):
        evidence = " ".join(f"{k}={v}" for k, v in self.evidence)
        return f"t={self.time:.2f} {self.rule.value} sysid={self.sysid} {evidence}".rstrip()


@dataclass
class DetectorConfig:
    """Thresholds of the detection rules. Read from a key=value file with
    `from_file`; unknown keys are an error."""

    heartbeat_period: float = 1.0
    heartbeat_gap_factor: float = 3.0
    seq_loss_window: float = 10.0
    seq_loss_threshold: float = 0.2
    seq_loss_min_frames: int = 10
    flood_window: float = 1.0
    flood_rate: float = 100.0
    position_jump_speed: float = 30.0

    @classmethod
    def from_file(cls, path):
        values = read_keyvalue_file(path)
        types = {f.name: f.type for f in fields(cls)}
        kwargs = dict()
        for key, value in values.items():
            if key not in types:
                raise ScenarioInvalid(f"{path}: unknown detector setting '{key}'")
            try:
                kwargs[key] = int(value) if types[key] in (int, "int") else float(value)
            except ValueError:
                raise ScenarioInvalid(f"{path}: '{key}' must be a number, got '{value}'")
        config = cls(**kwargs)
        config.validate()
        return config

    def validate(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ScenarioInvalid(f"{f.name} must be positive")
        if self.seq_loss_threshold > 1:
            raise ScenarioInvalid("seq_loss_threshold is a ratio and must be at most 1")
        return True


def _distance_m(a, b):
    """Flat-earth distance between two GlobalPositionViews, 3D"""
    north = (b.lat - a.lat) * METERS_PER_DEGREE
    east = (b.lon - a.lon) * METERS_PER_DEGREE * math.cos(math.radians(a.lat))
    return math.sqrt(north**2 + east**2 + (b.alt - a.alt) ** 2)


class MAV_Detectors(MAVAPI_Baseclass):
    """Rule-based detector.

    Rules and predicates:

    * HeartbeatGap: no heartbeat for more than `heartbeat_gap_factor` periods.
      Fires once per silence.
    * SeqLossSpike: over each `seq_loss_window`, the sequence-gap drop ratio
      of a vehicle stream exceeds `seq_loss_threshold`.
    * TimestampAnomaly: a signed frame was rejected by signing. One alert per
      rejection.
    * FloodRate: frames arriving faster than `flood_rate` per second over
      `flood_window`. Fires once per episode.
    * PositionJump: two consecutive position reports imply a speed above
      `position_jump_speed`.
    """

    _parameters = ["config"]
    _attributes = ["alerts"]

    def __init__(self, config=None):
        self.config = config if config is not None else DetectorConfig()
        self.config.validate()
        self.alerts = []
        self._arrivals = deque()
        self._pending = []
        self._gap_open = set()
        self._flood_open = False
        self._window_start = None
        self._last_position = dict()

    def on_frame(self, now):
        """Count one frame arriving at time `now`"""
        self._arrivals.append(now)

    def on_signing_reject(self, verdict):
        """Signing context callback; unsigned rejections are not anomalies"""
        if verdict.signed:
            self._pending.append((DetectionRule.TIMESTAMP_ANOMALY, verdict))

    def on_position(self, sysid, position, now):
        previous = self._last_position.get(sysid)
        self._last_position[sysid] = (position, now)
        if previous is None:
            return
        last, then = previous
        distance = _distance_m(last, position)
        speed = distance / max(now - then, 1e-3)
        if speed > self.config.position_jump_speed:
            evidence = (("distance_m", round(distance, 1)), ("speed_m_s", round(speed, 1)))
            self._pending.append((DetectionRule.POSITION_JUMP, (sysid, evidence)))

    def _fire(self, rule, now, sysid=None, evidence=()):
        alert = Alert(rule, now, sysid, tuple(evidence))
        logger.warning(f"Alert: {alert}")
        self.alerts.append(alert)
        return alert

    def step(self, views, now):
        """Evaluate every rule at time `now`. Returns the new alerts."""
        if isinstance(views, VehicleView):
            views = [views]
        elif isinstance(views, dict):
            views = list(views.values())
        fired = []
        cfg = self.config

        for rule, item in self._pending:
            if rule is DetectionRule.TIMESTAMP_ANOMALY:
                evidence = [("reason", item.reason.value), ("timestamp", item.timestamp)]
                fired.append(self._fire(rule, now, item.stream.sysid if item.stream else None, evidence))
            else:
                sysid, evidence = item
                fired.append(self._fire(rule, now, sysid, evidence))
        self._pending = []

        gap_limit = cfg.heartbeat_gap_factor * cfg.heartbeat_period
        for view in views:
            if view.last_heartbeat is None:
                continue
            gap = now - view.last_heartbeat
            if gap > gap_limit:
                if view.sysid not in self._gap_open:
                    self._gap_open.add(view.sysid)
                    evidence = [("gap_s", round(gap, 2)), ("last_heartbeat", round(view.last_heartbeat, 2))]
                    fired.append(self._fire(DetectionRule.HEARTBEAT_GAP, now, view.sysid, evidence))
            else:
                self._gap_open.discard(view.sysid)

        if self._window_start is None:
            self._window_start = now
        elif now - self._window_start >= cfg.seq_loss_window:
            self._window_start = now
            for view in views:
                received, lost = view.link.take_window()
                if received + lost < cfg.seq_loss_min_frames:
                    continue
                ratio = lost / (received + lost)
                if ratio > cfg.seq_loss_threshold:
                    evidence = [("received", received), ("lost", lost), ("drop_ratio", round(ratio, 3))]
                    fired.append(self._fire(DetectionRule.SEQ_LOSS_SPIKE, now, view.sysid, evidence))

        while self._arrivals and self._arrivals[0] <= now - cfg.flood_window:
            self._arrivals.popleft()
        rate = len(self._arrivals) / cfg.flood_window
        if rate > cfg.flood_rate:
            if not self._flood_open:
                self._flood_open = True
                fired.append(self._fire(DetectionRule.FLOOD_RATE, now, None, [("frames_per_s", rate)]))
        else:
            self._flood_open = False
        return fired

    def count(self, rule):
        return sum(1 for a in self.alerts if a.rule is DetectionRule(rule))


def detector_step(rules, view, clock):
    """Run the detection rules against one view (or several) at the clock's time"""
    return rules.step(view, clock.monotonic_us() / 1e6)


class MAV_CommandStatus(MAV_Status):
    """Status of one COMMAND_LONG. `confirmations` lists the confirmation
    byte of every transmission: 0 first, then 1, 2... on retries.

    Attributes
    ----------
    command : int
        MAV_CMD value
    result : MAV_RESULT
        Result carried by the matching COMMAND_ACK, once one arrives
    """

    _parameters = ["name", "command"]
    _attributes = MAV_Status._attributes + ["confirmations", "result"]

    def __init__(self, command, params, retries, timeout, began=None):
        try:
            name = MAV_CMD(command).name
        except ValueError:
            name = str(command)
        super().__init__(name, began)
        self.command = command
        self.params = tuple(params)
        self.retries = retries
        self.timeout = timeout
        self.confirmations = []
        self.last_sent = None
        self.result = None

    @property
    def outcome(self):
        return {self.ACCEPTED: "Success", self.PENDING: "Pending"}.get(self.status, self.status)


class MAV_MissionUpload(MAV_Status):
    """Status of a mission upload. Items go one at a time, each waiting for
    its COMMAND_ACK (command = 39) before the next is sent.

    Attributes
    ----------
    acked : list
        Sequence numbers acknowledged so far
    """

    _attributes = MAV_Status._attributes + ["acked"]

    def __init__(self, items, retries, timeout, began=None):
        super().__init__("MISSION_UPLOAD", began)
        self.items = list(items)
        self.retries = retries
        self.timeout = timeout
        self.acked = []
        self.attempts = 0
        self.last_sent = None

    @property
    def current(self):
        return self.items[len(self.acked)]


def check_mission(items):
    """Raise NonContiguousSeq unless seq runs 0, 1, 2..."""
    for expected, item in enumerate(items):
        if item.seq != expected:
            raise NonContiguousSeq(f"Mission item {expected} has seq {item.seq}")
    if not items:
        raise NonContiguousSeq("Mission has no items")


def mission_item(seq, frame, x, y, z, target_system=1, target_component=1):
    """Build a MISSION_ITEM message"""
    return default_catalog().message(
        "MISSION_ITEM",
        target_system=target_system,
        target_component=target_component,
        seq=seq,
        frame=int(frame),
        x=float(x),
        y=float(y),
        z=float(z),
    )


def parse_mission(text, target_system=1, target_component=1):
    """Mission text: one item per line, `seq frame x y z`. frame is a number
    or a MAV_FRAME name."""
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        words = line.split("#", 1)[0].split()
        if not words:
            continue
        if len(words) != 5:
            raise ScenarioInvalid(f"line {lineno}: expected 'seq frame x y z'")
        try:
            seq = int(words[0])
            frame = MAV_FRAME[words[1]] if words[1] in MAV_FRAME.__members__ else MAV_FRAME(int(words[1]))
            x, y, z = (float(w) for w in words[2:])
        except (ValueError, KeyError):
            raise ScenarioInvalid(f"line {lineno}: cannot parse '{line.strip()}'")
        items.append(mission_item(seq, frame, x, y, z, target_system, target_component))
    return items


def load_mission(path, target_system=1, target_component=1):
    with open(path, "r") as f:
        return parse_mission(f.read(), target_system, target_component)


class MAV_GroundStation(MAVAPI_Baseclass):
    """Ground station attached to one link.

    Parameters
    ----------
    link : MAV_Link
        Link endpoint.
    clock : clock
        Clock read at every step.
    signing : MAV_SigningContext
        When given, inbound frames must verify and outbound frames are signed.
    target_system : int
        Vehicle commands are addressed to (default 1).
    detectors : MAV_Detectors
        Detection rules; a default set is created when None.
    retries : int
        Default number of retransmissions of an unacknowledged request.
    command_timeout : float
        Seconds to wait for an acknowledgement before retransmitting.

    Attributes
    ----------
    views : dict
        sysid -> VehicleView
    alerts : list
        Every alert raised so far
    """

    _parameters = ["sysid", "target_system"]
    _attributes = ["views", "alerts"]

    def __init__(
        self,
        link=None,
        clock=None,
        signing=None,
        catalog=None,
        sysid=GCS_SYSID,
        compid=GCS_COMPID,
        target_system=1,
        target_component=1,
        detectors=None,
        heartbeat_period=1.0,
        retries=3,
        command_timeout=1.0,
        mavlink_version=2,
    ):
        self.link = link
        self.clock = clock if clock is not None else MAV_SimClock()
        self.signing = signing
        self.catalog = catalog if catalog is not None else default_catalog()
        self.sysid = sysid
        self.compid = compid
        self.target_system = target_system
        self.target_component = target_component
        self.detectors = detectors if detectors is not None else MAV_Detectors()
        self.heartbeat_period = heartbeat_period
        self.retries = retries
        self.command_timeout = command_timeout
        self.mavlink_version = mavlink_version
        if self.signing is not None and self.signing.on_reject is None:
            self.signing.on_reject = self.detectors.on_signing_reject
        self.parser = MAV_Parser(self.catalog)
        self.views = dict()
        self.commands = []
        self.upload = None
        self.accepted = []
        self.frames_sent = 0
        self.commands_sent = 0
        self._tx_seq = 0
        self._next_heartbeat = 0.0

    @property
    def alerts(self):
        return self.detectors.alerts

    @property
    def view(self):
        """View of the target vehicle, created on first use"""
        return self._view(self.target_system)

    def _view(self, sysid):
        if sysid not in self.views:
            self.views[sysid] = VehicleView(sysid, self.detectors.config.heartbeat_period)
        return self.views[sysid]

    @property
    def now(self):
        return self.clock.monotonic_us() / 1e6

    # Transmit
    def send_message(self, msg):
        frame = self.catalog.frame(msg, self._tx_seq, self.sysid, self.compid, self.mavlink_version)
        self._tx_seq = seq_next(self._tx_seq)
        if self.signing is not None and frame.version == 2:
            frame = self.signing.sign(frame)
        if self.link is not None:
            self.link.send(frame.to_bytes())
        self.frames_sent += 1
        return frame

    def _send_heartbeat(self):
        self.send_message(
            self.catalog.message(
                "HEARTBEAT",
                type=int(MAV_TYPE.GCS),
                autopilot=int(MAV_AUTOPILOT.INVALID),
                base_mode=0,
                custom_mode=0,
                system_status=int(MAV_STATE.ACTIVE),
                mavlink_version=MAVLINK_VERSION,
            )
        )

    def _transmit_command(self, status, now):
        confirmation = len(status.confirmations)
        p = status.params
        self.send_message(
            self.catalog.message(
                "COMMAND_LONG",
                target_system=self.target_system,
                target_component=self.target_component,
                command=int(status.command),
                confirmation=confirmation,
                param1=p[0],
                param2=p[1],
                param3=p[2],
                param4=p[3],
                param5=p[4],
                param6=p[5],
                param7=p[6],
            )
        )
        status.confirmations.append(confirmation)
        status.last_sent = now
        self.commands_sent += 1

    def send_command(self, command, *params, retries=None, timeout=None):
        """Send a COMMAND_LONG with up to seven float parameters.

        Returns a MAV_CommandStatus that resolves when a COMMAND_ACK for the
        same command arrives, or times out after `retries` retransmissions.
        """
        if len(params) > 7:
            raise TypeError("COMMAND_LONG takes at most 7 parameters")
        params = tuple(float(p) for p in params) + (0.0,) * (7 - len(params))
        now = self.now
        status = MAV_CommandStatus(
            command,
            params,
            self.retries if retries is None else retries,
            self.command_timeout if timeout is None else timeout,
            began=now,
        )
        self.commands.append(status)
        self._transmit_command(status, now)
        logger.info(f"Sent {status.name}{tuple(params)}")
        return status

    def arm(self, **kwargs):
        return self.send_command(MAV_CMD.ARM_DISARM, 1, **kwargs)

    def disarm(self, **kwargs):
        return self.send_command(MAV_CMD.ARM_DISARM, 0, **kwargs)

    def takeoff(self, altitude, **kwargs):
        return self.send_command(MAV_CMD.TAKEOFF, 0, 0, 0, 0, 0, 0, altitude, **kwargs)

    def land(self, **kwargs):
        return self.send_command(MAV_CMD.LAND, **kwargs)

    def set_mode(self, mode, **kwargs):
        return self.send_command(MAV_CMD.DO_SET_MODE, int(MAV_MODE_FLAG.RESERVED), int(FlightMode(mode)), **kwargs)

    def get_home(self, **kwargs):
        return self.send_command(MAV_CMD.GET_HOME, **kwargs)

    def set_home(self, lat, lon, alt, **kwargs):
        return self.send_command(MAV_CMD.SET_HOME, 0, 0, 0, 0, lat, lon, alt, **kwargs)

    def upload_mission(self, items, retries=None, timeout=None):
        """Upload a mission, item 0 being home.

        Raises
        ------
        NonContiguousSeq
            If item seqs are not 0, 1, 2...
        """
        items = list(items)
        check_mission(items)
        upload = MAV_MissionUpload(
            items,
            self.retries if retries is None else retries,
            self.command_timeout if timeout is None else timeout,
            began=self.now,
        )
        if self.upload is not None and not self.upload.done:
            self.upload.resolve(MAV_Status.REJECTED, self.now)
            self.upload.error("Superseded by a new upload")
        self.upload = upload
        self._send_item(upload, self.now)
        logger.info(f"Uploading mission of {len(items)} items")
        return upload

    def _send_item(self, upload, now):
        self.send_message(upload.current)
        upload.attempts += 1
        upload.last_sent = now

    # Receive
    def step(self):
        now = self.now
        if now >= self._next_heartbeat:
            self._send_heartbeat()
            self._next_heartbeat = max(self._next_heartbeat + self.heartbeat_period, now)
        self._receive(now)
        for view in self.views.values():
            view.refresh(now)
        self._service(now)
        return self.detectors.step(self.views, now)

    def _receive(self, now):
        if self.link is None:
            return
        while True:
            datagram = self.link.recv_datagram(timeout=0)
            if datagram is None:
                break
            self.detectors.on_frame(now)
            for frame, verdict in self.parser.feed(datagram.data):
                if not verdict:
                    continue
                if self.signing is not None and not self.signing.verify(frame):
                    continue
                try:
                    msg = self.catalog.decode(frame)
                except (UnknownMessage, LengthMismatch):
                    continue
                self.accepted.append(AcceptedFrame(now, frame.msgid, frame.sysid, datagram.origin or ORIGIN_REMOTE))
                self.handle(frame, msg, now)
            if not self.link.byte_stream:
                self.parser.reset()

    def handle(self, frame, msg, now):
        """Act on one verified, decoded frame"""
        if frame.sysid == self.sysid:
            return
        view = ingest(self._view(frame.sysid), frame, now, self.catalog, msg)
        if msg.name == "GLOBAL_POSITION":
            self.detectors.on_position(frame.sysid, view.position, now)
        elif msg.name == "COMMAND_ACK":
            self._handle_ack(msg, now)

    def _handle_ack(self, ack, now):
        try:
            result = MAV_RESULT(ack.result)
        except ValueError:
            result = ack.result
        if ack.command == MISSION_ITEM_ACK:
            upload = self.upload
            if upload is None or upload.done:
                return
            if result is MAV_RESULT.ACCEPTED:
                upload.acked.append(upload.current.seq)
                if len(upload.acked) == len(upload.items):
                    upload.resolve(MAV_Status.ACCEPTED, now)
                    logger.info(f"Mission upload complete: {len(upload.items)} items")
                else:
                    upload.attempts = 0
                    self._send_item(upload, now)
            else:
                upload.error(f"Item {upload.current.seq} refused: {getattr(result, 'name', result)}")
                upload.resolve(MAV_Status.REJECTED, now)
            return

        for status in self.commands:
            if status.command == ack.command and not status.done:
                status.result = result
                if result is MAV_RESULT.ACCEPTED:
                    status.resolve(MAV_Status.ACCEPTED, now)
                else:
                    status.error(f"{status.name} refused: {getattr(result, 'name', result)}")
                    status.resolve(MAV_Status.REJECTED, now)
                logger.info(f"{status.name} -> {status.outcome}")
                break

    def _service(self, now):
        """Retransmit or time out requests whose acknowledgement is late"""
        for status in self.commands:
            if status.done or now - status.last_sent < status.timeout:
                continue
            if len(status.confirmations) <= status.retries:
                self._transmit_command(status, now)
            else:
                status.error(f"No acknowledgement after {len(status.confirmations)} attempts")
                status.resolve(MAV_Status.TIMEOUT, now)
                logger.warning(f"{status.name} timed out")
        self.commands = [s for s in self.commands if not s.done]

        upload = self.upload
        if upload is not None and not upload.done and now - upload.last_sent >= upload.timeout:
            if upload.attempts <= upload.retries:
                self._send_item(upload, now)
            else:
                upload.error(f"No acknowledgement for item {upload.current.seq}")
                upload.resolve(MAV_Status.TIMEOUT, now)

    def wait(self, status, pump=None, timeout=60.0):
        """Call `pump` (default: advance a simulated clock and step) until
        `status` is resolved or `timeout` seconds pass. Returns the status."""
        if pump is None:
            pump = self._pump
        deadline = self.now + timeout
        while not status.done and self.now < deadline:
            pump()
        return status

    def _pump(self):
        self.clock.advance(0.02)
        self.step()

    @property
    def _table(self):
        header = ["sysid", "alive", "mode", "armed", "lat", "lon", "rel alt (m)", "battery %", "drop ratio"]
        table = []
        for view in self.views.values():
            pos = view.position
            table.append(
                [
                    view.sysid,
                    view.alive,
                    view.mode.name,
                    view.armed,
                    "" if pos is None else f"{pos.lat:.7f}",
                    "" if pos is None else f"{pos.lon:.7f}",
                    "" if pos is None else f"{pos.relative_alt:.2f}",
                    "" if view.battery_pct is None else view.battery_pct,
                    view.drop_ratio,
                ]
            )
        return header, table


# Aliases
GroundStation = MAV_GroundStation
GCS = MAV_GroundStation
Detectors = MAV_Detectors
CommandStatus = MAV_CommandStatus
