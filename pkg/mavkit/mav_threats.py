"""Scripted adversary against a simulated vehicle and ground station.

`run_scenario` builds a vehicle, a ground station and one attacker around a
`MAV_SimLink`, flies a four waypoint AUTO mission and starts the attack
mid-mission. The attacker can read everything on the link, inject frames and
rewrite frames in flight; it never holds the signing key. `score_matrix`
runs every attack with signing off and on and compares the outcome with the
defence each configuration is expected to give.

Actors are stepped in a fixed order on one simulated clock (vehicle,
attacker, ground station, operator), so a scenario and its seed determine the
report completely.
"""

import logging
import math
import struct
import warnings
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np
import pandas as pd
from tabulate import tabulate

from .api_common import MAVAPI_Baseclass, ScenarioInvalid, read_keyvalue_file
from .mav_catalog import MAV_CMD, MAV_FRAME, FlightMode, default_catalog, degrees_to_gps_raw
from .mav_clock import MAV_Scheduler, MAV_SimClock
from .mav_frame import GCS_SYSID, Direction, MAV_Parser, seq_next
from .mav_gcs import GCS_COMPID, MAV_Detectors, MAV_GroundStation, mission_item
from .mav_link import ORIGIN_ATTACKER, MAV_SimLink, SimLinkConfig
from .mav_signing import MAV_SigningContext, keygen
from .mav_vehicle import METERS_PER_DEGREE, MAV_Vehicle, SimParams

logger = logging.getLogger(__name__)

# Time allowed after the outcome is known before a run stops
SETTLE_TIME = 2.0
TAKEOFF_ALT_M = 10.0
MISSION_SIDE_M = 30.0


class Attack(Enum):
    EAVESDROP = "Eavesdrop"
    REPLAY = "Replay"
    TAMPER = "Tamper"
    SPOOF_POSITION = "SpoofPosition"
    INJECT_COMMAND = "InjectCommand"
    FLOOD = "Flood"
    JAM = "Jam"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().replace("_", "").lower()
        for attack in cls:
            if text in (attack.value.lower(), attack.name.replace("_", "").lower()):
                return attack
        raise ScenarioInvalid(f"Unknown attack '{value}'")


class Outcome(Enum):
    COMPLETED = "completed"
    DIVERTED = "diverted"
    CRASHED = "crashed"
    TIMED_OUT = "timed_out"


# Attacks of the default matrix, in row order
MATRIX_ATTACKS = (
    Attack.EAVESDROP,
    Attack.REPLAY,
    Attack.TAMPER,
    Attack.SPOOF_POSITION,
    Attack.INJECT_COMMAND,
    Attack.FLOOD,
)

# attack -> (defended with signing off, defended with signing on)
EXPECTED_DEFENSE = {
    Attack.EAVESDROP: (False, False),
    Attack.REPLAY: (False, True),
    Attack.TAMPER: (False, True),
    Attack.SPOOF_POSITION: (False, True),
    Attack.INJECT_COMMAND: (False, True),
    Attack.FLOOD: (False, False),
    Attack.JAM: (False, False),
}

# Who receives the attacker's traffic
DEFAULT_TARGET = {
    Attack.EAVESDROP: "vehicle",
    Attack.REPLAY: "vehicle",
    Attack.TAMPER: "vehicle",
    Attack.SPOOF_POSITION: "gcs",
    Attack.INJECT_COMMAND: "vehicle",
    Attack.FLOOD: "vehicle",
    Attack.JAM: "vehicle",
}

REPLAY_FRAMES = ("set_mode", "arm", "waypoint")

_LINK_KEYS = ("drop_probability", "corrupt_probability", "delay")
_TRUE = ("on", "true", "yes", "1")
_FALSE = ("off", "false", "no", "0")


@dataclass
class AttackScenario:
    """One attack run.

    Attributes
    ----------
    attack : Attack
        What the adversary does.
    target : str
        'vehicle' or 'gcs'; defaults to the natural victim of the attack.
    signing : bool
        Whether vehicle and ground station sign and require signatures.
    rng_seed : int
        Seed of the link impairments, attack jitter and attacker keys.
    duration : float
        Longest simulated run in seconds.
    attack_time : float
        Seconds into the run the attack starts, before jitter.
    link : SimLinkConfig
        Link impairments. The file keys drop_probability,
        corrupt_probability and delay land here.
    """

    attack: Attack = Attack.REPLAY
    target: str = None
    signing: bool = False
    rng_seed: int = 1
    duration: float = 120.0
    attack_time: float = 15.0
    attack_jitter: float = 1.0
    link: SimLinkConfig = field(default_factory=SimLinkConfig)
    replay_frame: str = "set_mode"
    replay_delay: float = 0.0
    spoof_offset_m: float = 1000.0
    spoof_rate: float = 4.0
    spoof_duration: float = 10.0
    inject_count: int = 1
    flood_rate: float = 1000.0
    flood_duration: float = 10.0
    jam_duration: float = 5.0

    def __post_init__(self):
        self.attack = Attack.parse(self.attack)
        if self.target is None:
            self.target = DEFAULT_TARGET[self.attack]

    @classmethod
    def from_dict(cls, values):
        """Build from string values as read from a scenario file. Unknown
        keys are ignored with a warning."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = dict()
        link = dict()
        for key, value in values.items():
            try:
                if key in _LINK_KEYS:
                    link[key] = float(value)
                elif key == "seed":
                    kwargs["rng_seed"] = int(value)
                elif key not in types:
                    warnings.warn(f"Ignoring unknown scenario key '{key}'")
                elif key == "signing":
                    kwargs[key] = _parse_bool(key, value)
                elif key in ("attack", "target", "replay_frame"):
                    kwargs[key] = value
                elif types[key] in (int, "int"):
                    kwargs[key] = int(value)
                else:
                    kwargs[key] = float(value)
            except ValueError:
                raise ScenarioInvalid(f"Bad value for '{key}': '{value}'")
        kwargs["link"] = SimLinkConfig(rng_seed=kwargs.get("rng_seed", 1), **link)
        scenario = cls(**kwargs)
        scenario.validate()
        return scenario

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(read_keyvalue_file(path))

    def with_signing(self, signing):
        return replace(self, signing=signing)

    def with_seed(self, seed):
        return replace(self, rng_seed=seed, link=replace(self.link, rng_seed=seed))

    def validate(self):
        """Raise ScenarioInvalid on inconsistent parameters"""
        if self.target not in ("vehicle", "gcs"):
            raise ScenarioInvalid(f"target must be 'vehicle' or 'gcs', got '{self.target}'")
        if self.attack is Attack.SPOOF_POSITION and self.target != "gcs":
            raise ScenarioInvalid("SpoofPosition fabricates vehicle telemetry and must target the gcs")
        commands = (Attack.REPLAY, Attack.TAMPER, Attack.INJECT_COMMAND, Attack.FLOOD)
        if self.attack in commands and self.target != "vehicle":
            raise ScenarioInvalid(f"{self.attack.value} carries commands and must target the vehicle")
        if self.rng_seed < 0:
            raise ScenarioInvalid("rng_seed must not be negative")
        if self.duration <= 0 or not 0 <= self.attack_time < self.duration:
            raise ScenarioInvalid("attack_time must fall inside the run duration")
        if self.attack_jitter < 0:
            raise ScenarioInvalid("attack_jitter must not be negative")
        if self.replay_frame not in REPLAY_FRAMES:
            raise ScenarioInvalid(f"replay_frame must be one of {', '.join(REPLAY_FRAMES)}")
        for name in ("spoof_rate", "flood_rate", "inject_count"):
            if getattr(self, name) <= 0:
                raise ScenarioInvalid(f"{name} must be positive")
        for name in ("replay_delay", "spoof_duration", "flood_duration", "jam_duration", "spoof_offset_m"):
            if getattr(self, name) < 0:
                raise ScenarioInvalid(f"{name} must not be negative")
        self.link.validate()
        return True


def _parse_bool(key, value):
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ValueError(f"{key} must be on or off")


def load_scenario(path):
    return AttackScenario.from_file(path)


def square_mission(params, side=MISSION_SIDE_M, target_system=1):
    """Home followed by four corners of a square flown at 10-15 m above home"""
    lat0, lon0 = params.home_lat, params.home_lon
    items = [mission_item(0, MAV_FRAME.GLOBAL, lat0, lon0, params.ground_alt_m, target_system)]
    corners = [(side, 0.0, 15.0), (side, side, 15.0), (0.0, side, 10.0), (0.0, 0.0, 10.0)]
    for seq, (north, east, alt) in enumerate(corners, start=1):
        lat = lat0 + north / METERS_PER_DEGREE
        lon = lon0 + east / (METERS_PER_DEGREE * math.cos(math.radians(lat0)))
        items.append(mission_item(seq, MAV_FRAME.GLOBAL_RELATIVE_ALT, lat, lon, alt, target_system))
    return items


class MAV_Attacker(MAVAPI_Baseclass):
    """Base adversary: full read and write access to the link, no key.

    Subclasses install taps or interceptors in `install` and act in
    `on_start` and `act`, which run once the attack time has passed.
    """

    _parameters = ["attack"]
    _attributes = ["injected"]

    attack = None

    def __init__(self, scenario, link, clock, rng, catalog=None, vehicle_params=None):
        self.scenario = scenario
        self.link = link
        self.clock = clock
        self.rng = rng
        self.catalog = catalog if catalog is not None else default_catalog()
        self.vehicle_params = vehicle_params if vehicle_params is not None else SimParams()
        self.start_time = scenario.attack_time + float(rng.uniform(0.0, scenario.attack_jitter))
        # Signing with a key of our own is the best an outsider can do
        self.signing = MAV_SigningContext(keygen(rng), clock) if scenario.signing else None
        self.injected = 0
        self.started = False
        self._seq = 0
        self.install()

    @property
    def now(self):
        return self.clock.monotonic_us() / 1e6

    @property
    def details(self):
        return dict()

    def install(self):
        pass

    def on_start(self, now):
        pass

    def act(self, now):
        pass

    def step(self):
        now = self.now
        if now < self.start_time:
            return
        if not self.started:
            self.started = True
            logger.info(f"t={now:.2f} {self.attack.value} attack started")
            self.on_start(now)
        self.act(now)

    def forge(self, msg, sysid, compid, sign=True):
        """Frame a message under a borrowed identity"""
        frame = self.catalog.frame(msg, self._seq, sysid, compid)
        self._seq = seq_next(self._seq)
        if sign and self.signing is not None:
            frame = self.signing.sign(frame)
        return frame

    def inject(self, data, direction):
        self.link.inject(data, direction, ORIGIN_ATTACKER)
        self.injected += 1

    def _decode(self, data):
        """Frames and messages of one datagram, skipping undecodable frames"""
        parser = MAV_Parser(self.catalog)
        for frame, verdict in parser.feed(data):
            if not verdict or frame.msgid not in self.catalog:
                continue
            try:
                yield frame, self.catalog.decode(frame)
            except ValueError:
                continue


class Eavesdropper(MAV_Attacker):
    """Records and decodes everything either side sends. Signing does not
    encrypt, so the decode fraction is 1.0 either way."""

    attack = Attack.EAVESDROP

    def install(self):
        self.frames = 0
        self.decoded = 0
        self.histogram = Counter()
        self.identities = set()
        self.leaked_positions = 0
        self.link.taps.append(self._tap)

    def _tap(self, direction, data, origin):
        parser = MAV_Parser(self.catalog)
        for frame, verdict in parser.feed(data):
            self.frames += 1
            if not verdict:
                continue
            try:
                msg = self.catalog.decode(frame)
            except (KeyError, ValueError):
                continue
            self.decoded += 1
            self.histogram[msg.name] += 1
            self.identities.add((frame.sysid, frame.compid))
            if msg.name == "GLOBAL_POSITION":
                self.leaked_positions += 1

    @property
    def decode_fraction(self):
        return self.decoded / self.frames if self.frames else 1.0

    @property
    def details(self):
        return {
            "frames_observed": self.frames,
            "decode_fraction": round(self.decode_fraction, 4),
            "histogram": dict(sorted(self.histogram.items())),
            "identities": sorted(self.identities),
            "leaked_positions": self.leaked_positions,
        }


class Replayer(MAV_Attacker):
    """Captures one command frame from the ground station and sends the
    identical bytes again once the attack starts"""

    attack = Attack.REPLAY

    def install(self):
        self.captured = None
        self.captured_time = None
        self.link.taps.append(self._tap)

    def _matches(self, msg):
        kind = self.scenario.replay_frame
        if kind == "set_mode":
            return (
                msg.name == "COMMAND_LONG"
                and msg.command == MAV_CMD.DO_SET_MODE
                and int(msg.param2) == FlightMode.GUIDED
            )
        if kind == "arm":
            return msg.name == "COMMAND_LONG" and msg.command == MAV_CMD.ARM_DISARM and msg.param1 != 0
        return msg.name == "MISSION_ITEM" and msg.seq >= 1

    def _tap(self, direction, data, origin):
        if self.captured is not None or direction is not Direction.TO_VEHICLE:
            return
        for frame, msg in self._decode(data):
            if self._matches(msg):
                self.captured = bytes(data)
                self.captured_time = self.now
                logger.info(f"t={self.now:.2f} captured {msg.name} for replay")
                return

    def act(self, now):
        if self.injected or self.captured is None:
            return
        if now >= self.captured_time + self.scenario.replay_delay:
            self.inject(self.captured, Direction.TO_VEHICLE)
            logger.info(f"t={now:.2f} replayed {len(self.captured)} bytes captured at t={self.captured_time:.2f}")

    @property
    def details(self):
        return {"replay_frame": self.scenario.replay_frame, "captured_at": self.captured_time}


class Tamperer(MAV_Attacker):
    """Rewrites GET_HOME requests in flight into LAND by flipping bits of
    the command field, then fixes the checksum. A signature, if any, is
    left as it was."""

    attack = Attack.TAMPER

    def install(self):
        descriptor = self.catalog["COMMAND_LONG"]
        self._offset = descriptor.offset_of("command")
        self._seed = descriptor.crc_seed
        self._mask = int(MAV_CMD.GET_HOME) ^ int(MAV_CMD.LAND)
        self.link.interceptors.append(self._intercept)

    def _intercept(self, direction, data, origin):
        if not self.started or direction is not Direction.TO_VEHICLE:
            return data
        out = b""
        changed = False
        for frame, msg in self._decode(data):
            if msg.name == "COMMAND_LONG" and msg.command == MAV_CMD.GET_HOME:
                payload = bytearray(frame.payload)
                (command,) = struct.unpack_from("<H", payload, self._offset)
                struct.pack_into("<H", payload, self._offset, command ^ self._mask)
                frame = replace(frame, payload=bytes(payload)).with_crc(self._seed)
                changed = True
            out += frame.to_bytes()
        if not changed:
            return data
        self.injected += 1
        logger.info(f"t={self.now:.2f} rewrote GET_HOME into LAND")
        return out


class PositionSpoofer(MAV_Attacker):
    """Sends the ground station position reports under the vehicle's
    identity, displaced by `spoof_offset_m` to the north"""

    attack = Attack.SPOOF_POSITION

    def install(self):
        self.last_position = None
        self.last_identity = (self.vehicle_params.sysid, self.vehicle_params.compid)
        self._next = None
        self.link.taps.append(self._tap)

    def _tap(self, direction, data, origin):
        if direction is not Direction.TO_GCS:
            return
        for frame, msg in self._decode(data):
            if msg.name == "GLOBAL_POSITION":
                self.last_position = msg
                self.last_identity = (frame.sysid, frame.compid)

    def on_start(self, now):
        self._next = now

    def act(self, now):
        if now > self.start_time + self.scenario.spoof_duration or now < self._next:
            return
        self._next += 1.0 / self.scenario.spoof_rate
        if self.last_position is None:
            return
        shift = degrees_to_gps_raw(self.scenario.spoof_offset_m / METERS_PER_DEGREE)
        msg = self.last_position.replace(lat=self.last_position.lat + shift)
        frame = self.forge(msg, *self.last_identity)
        self.inject(frame.to_bytes(), Direction.TO_GCS)


class CommandInjector(MAV_Attacker):
    """Sends LAND to the vehicle under the ground station's identity"""

    attack = Attack.INJECT_COMMAND

    def act(self, now):
        if self.injected >= self.scenario.inject_count:
            return
        msg = self.catalog.message(
            "COMMAND_LONG",
            target_system=self.vehicle_params.sysid,
            target_component=self.vehicle_params.compid,
            command=int(MAV_CMD.LAND),
        )
        frame = self.forge(msg, GCS_SYSID, GCS_COMPID)
        self.inject(frame.to_bytes(), Direction.TO_VEHICLE)
        logger.info(f"t={now:.2f} injected forged LAND")


class Flooder(MAV_Attacker):
    """Blasts the vehicle with well formed, unsigned SYSTEM_TIME frames from
    random identities at `flood_rate` frames per second"""

    attack = Attack.FLOOD

    def act(self, now):
        elapsed = min(now, self.start_time + self.scenario.flood_duration) - self.start_time
        due = int(math.floor(elapsed * self.scenario.flood_rate + 1e-9))
        while self.injected < due:
            msg = self.catalog.message(
                "SYSTEM_TIME",
                time_unix_usec=int(self.rng.integers(0, 1 << 62)),
                time_boot_ms=int(self.rng.integers(0, 1 << 32)),
            )
            sysid, compid = (int(v) for v in self.rng.integers(1, 255, size=2))
            self.inject(self.forge(msg, sysid, compid, sign=False).to_bytes(), Direction.TO_VEHICLE)

    @property
    def details(self):
        return {"flood_rate": self.scenario.flood_rate, "flood_duration": self.scenario.flood_duration}


class Jammer(MAV_Attacker):
    """Silences the whole link for `jam_duration` seconds"""

    attack = Attack.JAM

    def on_start(self, now):
        self.link.jam(self.scenario.jam_duration)


ATTACKERS = {
    cls.attack: cls for cls in (Eavesdropper, Replayer, Tamperer, PositionSpoofer, CommandInjector, Flooder, Jammer)
}


class MissionOperator:
    """Ground station operator running a generator script. The script
    yields request statuses to wait for, or predicates to wait on."""

    def __init__(self, gcs, script, timed=None):
        self.gcs = gcs
        self.script = script
        self.waiting = None
        self.finished = False
        self.failed = None
        self.timed = sorted(timed or [], key=lambda t: t[0])

    def step(self):
        now = self.gcs.now
        while self.timed and self.timed[0][0] <= now:
            self.timed.pop(0)[1]()
        if self.finished:
            return
        waiting = self.waiting
        if waiting is not None:
            if callable(waiting):
                if not waiting():
                    return
            else:
                if not waiting.done:
                    return
                if not waiting:
                    self.failed = f"{waiting.name} {waiting.status}"
                    self.finished = True
                    logger.warning(f"Operator script stopped: {self.failed}")
                    return
        try:
            self.waiting = next(self.script)
        except StopIteration:
            self.finished = True
            self.waiting = None


def mission_script(gcs, items, takeoff_alt=TAKEOFF_ALT_M):
    """Upload, take off in GUIDED and hand over to AUTO"""
    yield gcs.upload_mission(items)
    yield gcs.set_mode(FlightMode.GUIDED)
    yield gcs.arm()
    yield gcs.takeoff(takeoff_alt)
    view = gcs.view
    yield lambda: view.position is not None and view.position.relative_alt >= takeoff_alt - 0.5
    yield gcs.set_mode(FlightMode.AUTO)


class MissionMonitor:
    """Decides the mission outcome from the vehicle's own state"""

    def __init__(self, vehicle):
        self.vehicle = vehicle
        self.auto_entered = False
        self.outcome = None
        self.decided_at = None
        self.reason = ""

    def step(self):
        if self.outcome is not None:
            return
        state = self.vehicle.state
        if state.crashed:
            self._decide(Outcome.CRASHED, "ground collision")
        elif state.mode is FlightMode.AUTO:
            self.auto_entered = True
            if state.mission_complete:
                self._decide(Outcome.COMPLETED)
            elif state.failsafe is not None:
                self._decide(Outcome.DIVERTED, f"failsafe {state.failsafe}")
        elif self.auto_entered:
            reason = f"failsafe {state.failsafe}" if state.failsafe else f"mode {state.mode.name}"
            self._decide(Outcome.DIVERTED, reason)

    def _decide(self, outcome, reason=""):
        self.outcome = outcome
        self.reason = reason
        self.decided_at = self.vehicle.state.time
        logger.info(f"t={self.decided_at:.2f} mission {outcome.value} {reason}".rstrip())


class AttackReport(MAVAPI_Baseclass):
    """Result of one scenario run.

    Attributes
    ----------
    frames_injected : int
        Datagrams the attacker put on the link or rewrote
    frames_accepted : int
        Attacker datagrams the victim acted on
    alerts : list of Alert
        Alerts raised by the detectors during the run
    mission_outcome : Outcome
        completed, diverted, crashed or timed_out
    defended : bool
        Whether the configuration held against the attack
    expected : bool
        Whether it is expected to
    """

    _parameters = ["attack", "signing", "rng_seed", "target"]
    _attributes = [
        "frames_injected",
        "frames_accepted",
        "alerts_raised",
        "mission_outcome",
        "defended",
        "expected",
        "passed",
        "sim_time",
    ]

    def __init__(self, scenario, frames_injected, frames_accepted, alerts, outcome, sim_time, details=None):
        self.scenario = scenario
        self.attack = scenario.attack
        self.signing = scenario.signing
        self.rng_seed = scenario.rng_seed
        self.target = scenario.target
        self.frames_injected = frames_injected
        self.frames_accepted = frames_accepted
        self.alerts = list(alerts)
        self.mission_outcome = outcome
        self.sim_time = round(sim_time, 2)
        self.details = details or dict()

    @property
    def alerts_raised(self):
        return len(self.alerts)

    @property
    def alert_counts(self):
        return dict(Counter(a.rule.value for a in self.alerts))

    @property
    def defended(self):
        if self.attack is Attack.EAVESDROP:
            return False
        completed = self.mission_outcome is Outcome.COMPLETED
        if self.attack in (Attack.FLOOD, Attack.JAM):
            return completed
        return self.frames_accepted == 0 and completed

    @property
    def expected(self):
        return EXPECTED_DEFENSE[self.attack][int(self.signing)]

    @property
    def passed(self):
        return self.defended == self.expected

    def to_dict(self):
        return {
            "attack": self.attack.value,
            "signing": "on" if self.signing else "off",
            "seed": self.rng_seed,
            "target": self.target,
            "frames_injected": self.frames_injected,
            "frames_accepted": self.frames_accepted,
            "alerts_raised": self.alerts_raised,
            "alerts": self.alert_counts,
            "mission_outcome": self.mission_outcome.value,
            "defended": self.defended,
            "expected_defended": self.expected,
            "passed": self.passed,
            "sim_time": self.sim_time,
            **self.details,
        }

    def lines(self):
        """Stable key: value text"""
        out = []
        for key, value in self.to_dict().items():
            if isinstance(value, bool):
                value = "yes" if value else "no"
            out.append(f"{key}: {value}")
        return out


def run_scenario(scenario, vehicle_params=None, catalog=None):
    """Fly the mission under attack and report.

    Raises
    ------
    ScenarioInvalid
        If the scenario parameters are inconsistent.
    """
    scenario.validate()
    catalog = catalog if catalog is not None else default_catalog()
    params = vehicle_params if vehicle_params is not None else SimParams()
    rng = np.random.default_rng(scenario.rng_seed)
    clock = MAV_SimClock()
    link = MAV_SimLink(replace(scenario.link, rng_seed=scenario.rng_seed), clock)

    detectors = MAV_Detectors()
    vehicle_signing = gcs_signing = None
    if scenario.signing:
        key = keygen(rng)
        # Onboard rejections are reported to the same detectors as the ground station's
        vehicle_signing = MAV_SigningContext(key, clock, on_reject=detectors.on_signing_reject)
        gcs_signing = MAV_SigningContext(key, clock, on_reject=detectors.on_signing_reject)

    vehicle = MAV_Vehicle(link.vehicle_end, params, clock, signing=vehicle_signing, catalog=catalog)
    vehicle.on_receive = detectors.on_frame
    gcs = MAV_GroundStation(
        link.gcs_end, clock, signing=gcs_signing, catalog=catalog, target_system=params.sysid, detectors=detectors
    )
    attacker = ATTACKERS[scenario.attack](scenario, link, clock, rng, catalog, params)
    operator = MissionOperator(
        gcs,
        mission_script(gcs, square_mission(params, target_system=params.sysid)),
        timed=[(attacker.start_time, gcs.get_home)],
    )
    monitor = MissionMonitor(vehicle)
    scheduler = MAV_Scheduler(clock, [vehicle, attacker, gcs, operator, monitor], dt=params.dt)

    logger.info(
        f"Running {scenario.attack.value} against {scenario.target}, signing {'on' if scenario.signing else 'off'}, "
        f"seed {scenario.rng_seed}"
    )
    scheduler.run_until(lambda: monitor.outcome is not None, scenario.duration)
    if monitor.outcome is not None:
        scheduler.run(min(SETTLE_TIME, max(0.0, scenario.duration - clock.elapsed)))
    outcome = monitor.outcome if monitor.outcome is not None else Outcome.TIMED_OUT

    victim = vehicle if scenario.target == "vehicle" else gcs
    accepted = sum(1 for f in victim.accepted if f.origin == ORIGIN_ATTACKER)
    details = dict(attacker.details)
    if monitor.reason:
        details["outcome_reason"] = monitor.reason
    if operator.failed:
        details["operator_failed"] = operator.failed
    details["rx_overflow"] = vehicle.rx_overflow
    report = AttackReport(scenario, attacker.injected, accepted, detectors.alerts, outcome, clock.elapsed, details)
    logger.info(
        f"{scenario.attack.value} signing={'on' if scenario.signing else 'off'}: {outcome.value}, "
        f"{accepted}/{attacker.injected} attacker frames accepted"
    )
    return report


def matrix_scenarios(seed=1, attacks=MATRIX_ATTACKS, base=None):
    """Every attack with signing off and on"""
    scenarios = []
    for attack in attacks:
        template = replace(base, attack=attack, target=DEFAULT_TARGET[attack]) if base else AttackScenario(attack)
        template = template.with_seed(seed)
        for signing in (False, True):
            scenarios.append(template.with_signing(signing))
    return scenarios


class MAV_ScoreMatrix(MAVAPI_Baseclass):
    """Defended / not defended grid of attacks against signing off and on.

    Attributes
    ----------
    reports : list of AttackReport
        One per cell
    frame : pandas.DataFrame
        Rows are attacks, columns 'signing off' and 'signing on'
    all_passed : bool
        Every cell matches the expected defence
    """

    _attributes = ["all_passed"]

    def __init__(self, reports):
        self.reports = list(reports)
        records = [
            {
                "attack": r.attack.value,
                "signing": "signing on" if r.signing else "signing off",
                "cell": _cell(r),
            }
            for r in self.reports
        ]
        self.frame = pd.DataFrame(records).pivot(index="attack", columns="signing", values="cell")
        order = [a.value for a in Attack if a.value in self.frame.index]
        self.frame = self.frame.reindex(order)

    @property
    def all_passed(self):
        return all(r.passed for r in self.reports)

    @property
    def mismatches(self):
        return [r for r in self.reports if not r.passed]

    @property
    def _table(self):
        columns = [c for c in ("signing off", "signing on") if c in self.frame.columns]
        header = ["attack"] + columns
        table = [[attack] + [row[c] for c in columns] for attack, row in self.frame.iterrows()]
        return header, table

    def __str__(self):
        header, table = self._table
        return tabulate(table, header, tablefmt="pretty", stralign="left")

    def summary(self):
        """Machine readable summary: one JSON object per line"""
        return pd.DataFrame([r.to_dict() for r in self.reports]).to_json(orient="records", lines=True)


def _cell(report):
    text = "defended" if report.defended else "not defended"
    if not report.passed:
        text += " (MISMATCH)"
    return text


def score_matrix(scenarios=None, seed=1, vehicle_params=None):
    """Run every scenario (default: the six attacks with signing off and on
    at `seed`) and score each against the expected defence"""
    if scenarios is None:
        scenarios = matrix_scenarios(seed)
    return MAV_ScoreMatrix(run_scenario(s, vehicle_params) for s in scenarios)


# Aliases
Scenario = AttackScenario
ScoreMatrix = MAV_ScoreMatrix
Attacker = MAV_Attacker
