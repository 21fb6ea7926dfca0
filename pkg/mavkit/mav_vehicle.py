"""Simulated copter autopilot.

The vehicle is a point mass stepped at a fixed rate. Position is kept as
metres north and east of a fixed origin plus absolute altitude, and reported
on the wire in degE7 / millimetres. Flight modes follow copter semantics:

============ =================================================================
STABILIZE    manual; no pilot input, so the vehicle drifts with the wind
ALT_HOLD     holds altitude, drifts horizontally
LOITER       holds position and altitude
GUIDED       flies to a single target (TAKEOFF or a MISSION_ITEM) and holds
AUTO         flies the stored mission in order, then holds at the last item
RTL          returns to home at the current altitude, then lands
LAND         descends in place and disarms on touchdown
============ =================================================================

Horizontal speed in the position controlled modes never exceeds
`loiter_speed`, and velocity changes by at most `max_accel` per second.

The module level functions (`tick`, `handle_command`, `set_mode`,
`arming_allowed`, `emit_telemetry`, `failsafe_check`) operate on a
`VehicleState`; `MAV_Vehicle` wires them to a link, a parser, a signing
context and a clock.
"""

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .api_common import LengthMismatch, MAVAPI_Baseclass, ScenarioInvalid, UnknownMessage
from .mav_catalog import (
    MAV_AUTOPILOT,
    MAV_CMD,
    MAV_FRAME,
    MAV_RESULT,
    MAV_STATE,
    MAV_TYPE,
    MAVLINK_VERSION,
    MISSION_ITEM_ACK,
    FlightMode,
    base_mode_for,
    default_catalog,
    degrees_to_gps_raw,
    flight_mode_from_custom,
)
from .mav_clock import MAV_SimClock
from .mav_frame import GCS_SYSID, MAV_Parser, seq_next
from .mav_link import ORIGIN_REMOTE, LinkStats, stats_update

logger = logging.getLogger(__name__)

METERS_PER_DEGREE = 6378137.0 * math.pi / 180.0
# Home position used when none is configured
DEFAULT_HOME = (24.68773, 46.72185, 612.0)

# Modes whose horizontal speed is clamped to loiter_speed
POSITION_MODES = frozenset({FlightMode.LOITER, FlightMode.GUIDED, FlightMode.AUTO, FlightMode.RTL})
# Modes where arming needs a 3D fix and HDOP < 2.0
GPS_ARMING_MODES = frozenset({FlightMode.LOITER, FlightMode.GUIDED, FlightMode.AUTO})
DRIFT_MODES = frozenset({FlightMode.STABILIZE, FlightMode.ALT_HOLD})

ARMING_HDOP_MAX = 2.0
DISARM_MAX_ALT_M = 0.5
AIRBORNE_ALT_M = 0.5
RTL_LAND_RADIUS_M = 1.0
WIND_TIME_CONSTANT = 2.0

# SYS_STATUS sensor bits: gyro, accel, mag, baro, gps
SENSORS_PRESENT = 0x01 | 0x02 | 0x04 | 0x08 | 0x20
SENSOR_GPS = 0x20
BATTERY_FULL_MV = 12600
BATTERY_EMPTY_MV = 10500


@dataclass
class SimParams:
    """Simulator tunables. Speeds are cm/s and accelerations cm/s/s as on
    the wire; times are seconds.

    `max_accel` defaults to half of `loiter_speed`.
    """

    tick_hz: int = 50
    loiter_speed: float = 500.0
    max_accel: Optional[float] = None
    alt_p_gain: float = 1.0
    pos_p_gain: float = 1.0
    max_climb_rate: float = 250.0
    land_speed: float = 100.0
    battery_failsafe_pct: int = 20
    failsafe_action: FlightMode = FlightMode.RTL
    battery_drain_pct_s: float = 0.05
    heartbeat_period: float = 1.0
    position_rate_hz: float = 4.0
    sys_status_period: float = 1.0
    waypoint_radius_m: float = 2.0
    gcs_failsafe_timeout: Optional[float] = 3.0
    fence_radius_m: Optional[float] = None
    fence_alt_max_m: Optional[float] = None
    rx_queue_len: int = 64
    rx_frames_per_tick: int = 4
    home_lat: float = DEFAULT_HOME[0]
    home_lon: float = DEFAULT_HOME[1]
    ground_alt_m: float = DEFAULT_HOME[2]
    sysid: int = 1
    compid: int = 1
    mavlink_version: int = 2

    def __post_init__(self):
        if self.max_accel is None:
            self.max_accel = self.loiter_speed / 2
        self.failsafe_action = FlightMode(self.failsafe_action)

    @property
    def dt(self):
        return 1.0 / self.tick_hz

    def validate(self):
        """Raise ScenarioInvalid on inconsistent values"""
        if self.tick_hz <= 0:
            raise ScenarioInvalid("tick_hz must be positive")
        if self.loiter_speed <= 0 or self.max_accel <= 0:
            raise ScenarioInvalid("loiter_speed and max_accel must be positive")
        if self.failsafe_action not in (FlightMode.LAND, FlightMode.RTL):
            raise ScenarioInvalid(f"failsafe_action must be LAND or RTL, got {self.failsafe_action.name}")
        if not 0 <= self.battery_failsafe_pct <= 100:
            raise ScenarioInvalid("battery_failsafe_pct must be in 0..100")
        if self.rx_queue_len < 1 or self.rx_frames_per_tick < 1:
            raise ScenarioInvalid("rx_queue_len and rx_frames_per_tick must be at least 1")
        if self.mavlink_version not in (1, 2):
            raise ScenarioInvalid("mavlink_version must be 1 or 2")
        return True


@dataclass(frozen=True)
class VehicleEvent:
    time: float
    kind: str
    detail: str = ""


@dataclass
class VehicleState:
    """Everything the simulator knows about the vehicle.

    `pos` is [north m, east m, absolute altitude m] relative to `origin`,
    `vel` is [north, east, up] in m/s, `home` and `target` use the same frame
    as `pos`.
    """

    origin: tuple
    ground_alt_m: float
    pos: np.ndarray
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    heading_cdeg: int = 0
    mode: FlightMode = FlightMode.STABILIZE
    armed: bool = False
    airborne: bool = False
    landing: bool = False
    crashed: bool = False
    battery_pct: float = 100.0
    gps_fix_3d: bool = True
    hdop: float = 0.9
    home: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    mission: list = field(default_factory=list)
    mission_index: int = 0
    mission_complete: bool = False
    mission_log: list = field(default_factory=list)
    failsafe: Optional[str] = None
    wind: np.ndarray = field(default_factory=lambda: np.zeros(2))
    commanded_vertical_accel: float = 0.0
    time: float = 0.0
    last_gcs_heartbeat: Optional[float] = None
    errors_comm: int = 0
    link: LinkStats = field(default_factory=LinkStats)
    tx_seq: int = 0
    next_heartbeat: float = 0.0
    next_position: float = 0.0
    next_sys_status: float = 0.0
    outbox: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @classmethod
    def at_rest(cls, params):
        """Disarmed on the ground at the configured home location"""
        return cls(
            origin=(params.home_lat, params.home_lon),
            ground_alt_m=params.ground_alt_m,
            pos=np.array([0.0, 0.0, params.ground_alt_m]),
        )

    # Wire-unit views
    def to_local(self, lat_deg, lon_deg):
        lat0, lon0 = self.origin
        north = (lat_deg - lat0) * METERS_PER_DEGREE
        east = (lon_deg - lon0) * METERS_PER_DEGREE * math.cos(math.radians(lat0))
        return north, east

    def to_global(self, north, east):
        lat0, lon0 = self.origin
        lat = lat0 + north / METERS_PER_DEGREE
        lon = lon0 + east / (METERS_PER_DEGREE * math.cos(math.radians(lat0)))
        return lat, lon

    @property
    def lat_deg(self):
        return self.to_global(self.pos[0], self.pos[1])[0]

    @property
    def lon_deg(self):
        return self.to_global(self.pos[0], self.pos[1])[1]

    @property
    def position(self):
        """(lat degE7, lon degE7, absolute altitude mm)"""
        lat, lon = self.to_global(self.pos[0], self.pos[1])
        return degrees_to_gps_raw(lat), degrees_to_gps_raw(lon), int(round(self.pos[2] * 1000))

    @property
    def home_position(self):
        if self.home is None:
            return None
        lat, lon = self.to_global(self.home[0], self.home[1])
        return degrees_to_gps_raw(lat), degrees_to_gps_raw(lon), int(round(self.home[2] * 1000))

    @property
    def home_alt_m(self):
        return self.ground_alt_m if self.home is None else float(self.home[2])

    @property
    def relative_alt_m(self):
        if not self.armed:
            return 0.0
        return float(self.pos[2]) - self.home_alt_m

    @property
    def relative_alt(self):
        """Altitude above home in mm"""
        return int(round(self.relative_alt_m * 1000))

    @property
    def velocity(self):
        """(vx, vy, vz) in cm/s, north east down"""
        return tuple(int(round(v * 100)) for v in (self.vel[0], self.vel[1], -self.vel[2]))

    @property
    def horizontal_speed(self):
        return float(np.hypot(self.vel[0], self.vel[1]))

    @property
    def landing_phase(self):
        return self.mode is FlightMode.LAND or (self.mode is FlightMode.RTL and self.landing)

    @property
    def system_status(self):
        if self.crashed:
            return MAV_STATE.EMERGENCY
        if self.failsafe is not None:
            return MAV_STATE.CRITICAL
        if self.armed:
            return MAV_STATE.ACTIVE
        return MAV_STATE.STANDBY

    def mission_target(self, item):
        """Local [n, e, abs alt] of a MISSION_ITEM"""
        north, east = self.to_local(item.x, item.y)
        alt = item.z if item.frame == MAV_FRAME.GLOBAL else self.home_alt_m + item.z
        return np.array([north, east, alt])


@dataclass(frozen=True)
class VehicleSnapshot:
    """Read-only copy of the state handed to observers"""

    time: float
    mode: FlightMode
    armed: bool
    position: tuple
    relative_alt: int
    velocity: tuple
    heading: int
    battery_pct: float
    mission_index: int
    mission_complete: bool
    failsafe: Optional[str]
    crashed: bool


def _event(state, kind, detail=""):
    state.events.append(VehicleEvent(state.time, kind, detail))
    logger.info(f"t={state.time:.2f} {kind} {detail}".rstrip())


def _enter_mode(state, mode):
    """Change mode without checking preconditions and set the new targets"""
    previous = state.mode
    state.mode = mode
    here = state.pos.copy()
    if mode is FlightMode.AUTO:
        if state.mission_complete or state.mission_index < 1:
            state.mission_index = 1
            state.mission_complete = False
            state.mission_log = []
    elif mode is FlightMode.RTL:
        state.landing = False
        state.target = np.array([state.home[0], state.home[1], here[2]])
    else:
        state.target = here
    if mode is not previous:
        _event(state, "ModeChange", f"{previous.name} -> {mode.name}")


def set_mode(state, mode, params=None):
    """Request a mode change. Returns (state, accepted)."""
    try:
        mode = FlightMode(mode)
    except ValueError:
        return state, False
    if mode is FlightMode.UNKNOWN:
        return state, False
    if mode in (FlightMode.GUIDED, FlightMode.AUTO) and not state.gps_fix_3d:
        logger.info(f"{mode.name} rejected: no 3D fix")
        return state, False
    if mode is FlightMode.AUTO and len(state.mission) < 2:
        logger.info("AUTO rejected: no mission waypoints")
        return state, False
    if mode is FlightMode.RTL and state.home is None:
        logger.info("RTL rejected: home not set")
        return state, False
    _enter_mode(state, mode)
    return state, True


def arming_allowed(state):
    if state.mode in GPS_ARMING_MODES:
        return state.gps_fix_3d and state.hdop < ARMING_HDOP_MAX
    return state.mode in DRIFT_MODES


def _arm(state):
    state.armed = True
    state.airborne = False
    state.failsafe = None
    state.home = state.pos.copy()
    state.target = state.pos.copy()
    _event(state, "Armed")


def _disarm(state, reason=""):
    state.armed = False
    state.airborne = False
    state.landing = False
    state.failsafe = None
    state.vel = np.zeros(3)
    state.pos[2] = state.ground_alt_m
    _event(state, "Disarmed", reason)


def _ack(command, result):
    return default_catalog().message("COMMAND_ACK", command=int(command), result=int(result))


def handle_command(state, cmd, params=None):
    """Execute a COMMAND_LONG. Returns (state, COMMAND_ACK message)."""
    result = MAV_RESULT.UNSUPPORTED
    command = cmd.command

    if command == MAV_CMD.TAKEOFF:
        if not state.armed or state.mode is not FlightMode.GUIDED or cmd.param7 <= 0:
            result = MAV_RESULT.DENIED
        else:
            if state.home is None:
                state.home = state.pos.copy()
            state.target = np.array([state.pos[0], state.pos[1], state.home_alt_m + cmd.param7])
            _event(state, "Takeoff", f"{cmd.param7:g} m")
            result = MAV_RESULT.ACCEPTED

    elif command == MAV_CMD.LAND:
        _enter_mode(state, FlightMode.LAND)
        result = MAV_RESULT.ACCEPTED

    elif command == MAV_CMD.ARM_DISARM:
        if cmd.param1 != 0:
            if state.armed:
                result = MAV_RESULT.ACCEPTED
            elif arming_allowed(state):
                _arm(state)
                result = MAV_RESULT.ACCEPTED
            else:
                logger.info(f"Arming denied in {state.mode.name} (fix={state.gps_fix_3d}, hdop={state.hdop})")
                result = MAV_RESULT.DENIED
        else:
            if not state.armed:
                result = MAV_RESULT.ACCEPTED
            elif state.relative_alt_m < DISARM_MAX_ALT_M:
                _disarm(state, "commanded")
                result = MAV_RESULT.ACCEPTED
            else:
                result = MAV_RESULT.DENIED

    elif command == MAV_CMD.SET_HOME:
        if cmd.param1 != 0:
            state.home = state.pos.copy()
        else:
            north, east = state.to_local(cmd.param5, cmd.param6)
            state.home = np.array([north, east, cmd.param7])
        result = MAV_RESULT.ACCEPTED

    elif command == MAV_CMD.GET_HOME:
        if state.home is None:
            result = MAV_RESULT.FAILED
        else:
            lat, lon = state.to_global(state.home[0], state.home[1])
            item = default_catalog().message(
                "MISSION_ITEM",
                target_system=GCS_SYSID,
                seq=0,
                frame=int(MAV_FRAME.GLOBAL),
                x=lat,
                y=lon,
                z=float(state.home[2]),
            )
            state.outbox.append(item)
            result = MAV_RESULT.ACCEPTED

    elif command == MAV_CMD.DO_SET_MODE:
        _, accepted = set_mode(state, flight_mode_from_custom(int(cmd.param2)), params)
        result = MAV_RESULT.ACCEPTED if accepted else MAV_RESULT.DENIED

    if result is MAV_RESULT.UNSUPPORTED:
        logger.info(f"Unsupported command {command}")
    return state, _ack(command, result)


def handle_mission_item(state, item, params=None):
    """Store a mission item, or in GUIDED while armed take seq >= 1 as the
    single target. Returns (state, COMMAND_ACK message)."""
    if item.frame == MAV_FRAME.GLOBAL and item.seq >= 1 and item.z < state.ground_alt_m:
        logger.warning(f"Mission item {item.seq} is below ground ({item.z} m < {state.ground_alt_m} m)")

    if item.seq >= 1 and state.mode is FlightMode.GUIDED and state.armed:
        state.target = state.mission_target(item)
        _event(state, "GuidedTarget", f"{item.x:.7f},{item.y:.7f},{item.z:g}")
        result = MAV_RESULT.ACCEPTED
    elif item.seq == 0:
        state.mission = [item]
        state.mission_index = 0
        state.mission_complete = False
        result = MAV_RESULT.ACCEPTED
    elif item.seq == len(state.mission):
        state.mission.append(item)
        result = MAV_RESULT.ACCEPTED
    else:
        result = MAV_RESULT.DENIED
    return state, _ack(MISSION_ITEM_ACK, result)


def _step_horizontal(state, params, target_ne, dt):
    """Move horizontal velocity toward a speed-limited approach of target_ne"""
    loiter = params.loiter_speed / 100
    accel = params.max_accel / 100
    err = target_ne - state.pos[:2]
    dist = float(np.hypot(err[0], err[1]))
    if dist > 1e-9:
        speed = min(loiter, math.sqrt(2 * accel * dist), params.pos_p_gain * dist)
        v_des = err / dist * speed
    else:
        v_des = np.zeros(2)
    dv = v_des - state.vel[:2]
    norm = float(np.hypot(dv[0], dv[1]))
    limit = accel * dt
    if norm > limit:
        dv *= limit / norm
    state.vel[:2] += dv


def _step_drift(state, params, dt):
    """Relax horizontal velocity toward the wind"""
    if state.airborne:
        state.vel[:2] += (state.wind - state.vel[:2]) * min(1.0, dt / WIND_TIME_CONSTANT)
    else:
        state.vel[:2] = 0.0


def _step_vertical(state, params, v_cmd, dt):
    limit = params.max_accel / 100 * dt
    dv = float(np.clip(v_cmd - state.vel[2], -limit, limit))
    state.commanded_vertical_accel = dv / dt
    state.vel[2] += dv


def _vertical_command(state, params):
    """Commanded climb rate in m/s"""
    if state.landing_phase:
        return -params.land_speed / 100
    if state.mode is FlightMode.STABILIZE or state.target is None:
        return 0.0
    max_climb = params.max_climb_rate / 100
    return float(np.clip(params.alt_p_gain * (state.target[2] - state.pos[2]), -max_climb, max_climb))


def _navigate(state, params):
    """Update targets for AUTO and RTL. Returns the horizontal target or None to drift."""
    if state.mode is FlightMode.AUTO and not state.mission_complete:
        item = state.mission[state.mission_index]
        state.target = state.mission_target(item)
        if np.linalg.norm(state.target - state.pos) <= params.waypoint_radius_m:
            state.mission_log.append(item.seq)
            _event(state, "WaypointReached", f"seq {item.seq}")
            state.mission_index += 1
            if state.mission_index >= len(state.mission):
                state.mission_complete = True
                state.mission_index = len(state.mission) - 1
                _event(state, "MissionComplete")
    elif state.mode is FlightMode.RTL and not state.landing:
        if np.hypot(*(state.home[:2] - state.pos[:2])) <= RTL_LAND_RADIUS_M:
            state.landing = True
            _event(state, "RTLLand")
    if state.mode in DRIFT_MODES:
        return None
    return state.target[:2]


def tick(state, params, dt=None):
    """Advance the kinematics by one step of dt seconds"""
    dt = params.dt if dt is None else dt
    if not state.armed:
        state.vel = np.zeros(3)
        state.commanded_vertical_accel = 0.0
        return state

    target_ne = _navigate(state, params)
    if target_ne is None:
        _step_drift(state, params, dt)
    elif not state.airborne:
        state.vel[:2] = 0.0
    else:
        _step_horizontal(state, params, target_ne, dt)
    _step_vertical(state, params, _vertical_command(state, params), dt)
    state.pos += state.vel * dt

    if state.pos[2] - state.ground_alt_m > AIRBORNE_ALT_M:
        state.airborne = True
    if state.pos[2] <= state.ground_alt_m:
        if state.landing_phase:
            state.pos[2] = state.ground_alt_m
            _event(state, "Landed")
            _disarm(state, "landed")
            return state
        if state.airborne:
            state.pos[2] = state.ground_alt_m
            state.crashed = True
            _event(state, "GroundCollision", f"at {state.lat_deg:.7f},{state.lon_deg:.7f}")
            _disarm(state, "crashed")
            return state
        state.pos[2] = state.ground_alt_m
        state.vel[2] = max(0.0, state.vel[2])

    if state.horizontal_speed > 0.5:
        state.heading_cdeg = int(round(math.degrees(math.atan2(state.vel[1], state.vel[0])) * 100)) % 36000
    state.battery_pct = max(0.0, state.battery_pct - params.battery_drain_pct_s * dt)
    return state


def failsafe_check(state, params):
    """Latch the failsafe action on low battery, lost GCS heartbeats or a
    fence breach. The latch clears on disarm."""
    if not state.armed or state.failsafe is not None:
        return state
    reason = None
    if state.battery_pct < params.battery_failsafe_pct:
        reason = "battery"
    elif (
        params.gcs_failsafe_timeout is not None
        and state.airborne
        and state.last_gcs_heartbeat is not None
        and state.time - state.last_gcs_heartbeat > params.gcs_failsafe_timeout
    ):
        reason = "gcs"
    elif state.home is not None and state.airborne:
        if params.fence_radius_m is not None and np.hypot(*(state.pos[:2] - state.home[:2])) > params.fence_radius_m:
            reason = "fence"
        elif params.fence_alt_max_m is not None and state.relative_alt_m > params.fence_alt_max_m:
            reason = "fence"
    if reason is None:
        return state

    state.failsafe = reason
    action = params.failsafe_action
    if action is FlightMode.RTL and state.home is None:
        action = FlightMode.LAND
    logger.warning(f"Failsafe ({reason}): switching to {action.name}")
    _event(state, "Failsafe", f"{reason} -> {action.name}")
    _enter_mode(state, action)
    return state


def _next_seq(state):
    seq = state.tx_seq
    state.tx_seq = seq_next(seq)
    return seq


def telemetry_messages(state, now, params):
    """Messages due at time `now` (seconds)"""
    catalog = default_catalog()
    messages = []
    if now >= state.next_heartbeat:
        messages.append(
            catalog.message(
                "HEARTBEAT",
                type=int(MAV_TYPE.QUADROTOR),
                autopilot=int(MAV_AUTOPILOT.ARDUPILOTMEGA),
                base_mode=base_mode_for(state.mode, state.armed),
                custom_mode=int(state.mode),
                system_status=int(state.system_status),
                mavlink_version=MAVLINK_VERSION,
            )
        )
        state.next_heartbeat = max(state.next_heartbeat + params.heartbeat_period, now)
    if now >= state.next_position:
        lat, lon, alt = state.position
        vx, vy, vz = (int(np.clip(v, -32768, 32767)) for v in state.velocity)
        messages.append(
            catalog.message(
                "GLOBAL_POSITION",
                lat=lat,
                lon=lon,
                alt=alt,
                relative_alt=state.relative_alt,
                vx=vx,
                vy=vy,
                vz=vz,
                hdg=state.heading_cdeg,
            )
        )
        state.next_position = max(state.next_position + 1.0 / params.position_rate_hz, now)
    if now >= state.next_sys_status:
        health = SENSORS_PRESENT if state.gps_fix_3d else SENSORS_PRESENT & ~SENSOR_GPS
        voltage = BATTERY_EMPTY_MV + (BATTERY_FULL_MV - BATTERY_EMPTY_MV) * state.battery_pct / 100
        messages.append(
            catalog.message(
                "SYS_STATUS",
                sensors_present=SENSORS_PRESENT,
                sensors_enabled=SENSORS_PRESENT,
                sensors_health=health,
                voltage_battery=int(round(voltage)),
                battery_remaining=int(round(state.battery_pct)),
                drop_rate_comm=min(state.link.drop_rate_comm, 10000),
                errors_comm=min(state.errors_comm, 0xFFFF),
            )
        )
        state.next_sys_status = max(state.next_sys_status + params.sys_status_period, now)
    return messages


def emit_telemetry(state, clock, params=None):
    """Frames of the telemetry due at the clock's current time"""
    params = params if params is not None else SimParams()
    now = clock.monotonic_us() / 1e6
    catalog = default_catalog()
    return [
        catalog.frame(msg, _next_seq(state), params.sysid, params.compid, params.mavlink_version)
        for msg in telemetry_messages(state, now, params)
    ]


@dataclass(frozen=True)
class ScenarioEvent:
    """One line of a vehicle scenario file: `t=<sec> <event> [args]`

    Events are `battery <pct>`, `gps fix|nofix [hdop]` and
    `wind <north m/s> <east m/s>`.
    """

    time: float
    kind: str
    args: tuple = ()


_scenario_arity = {"battery": (1, 1), "gps": (1, 2), "wind": (2, 2)}


def parse_scenario(text):
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        words = line.split("#", 1)[0].split()
        if not words:
            continue
        if not words[0].startswith("t=") or len(words) < 2:
            raise ScenarioInvalid(f"line {lineno}: expected 't=<sec> <event> [args]'")
        try:
            t = float(words[0][2:])
        except ValueError:
            raise ScenarioInvalid(f"line {lineno}: bad time '{words[0]}'")
        kind, args = words[1], tuple(words[2:])
        if kind not in _scenario_arity:
            raise ScenarioInvalid(f"line {lineno}: unknown event '{kind}'")
        lo, hi = _scenario_arity[kind]
        if not lo <= len(args) <= hi:
            raise ScenarioInvalid(f"line {lineno}: '{kind}' takes {lo}..{hi} arguments")
        if kind == "gps" and args[0] not in ("fix", "nofix"):
            raise ScenarioInvalid(f"line {lineno}: gps takes 'fix' or 'nofix'")
        try:
            numbers = [float(a) for a in args if a not in ("fix", "nofix")]
        except ValueError:
            raise ScenarioInvalid(f"line {lineno}: non-numeric argument in '{line.strip()}'")
        events.append(ScenarioEvent(t, kind, tuple(args[:1] if kind == "gps" else ()) + tuple(numbers)))
    return sorted(events, key=lambda e: e.time)


def load_scenario(path):
    with open(path, "r") as f:
        return parse_scenario(f.read())


def apply_event(state, event):
    if event.kind == "battery":
        state.battery_pct = float(event.args[0])
    elif event.kind == "gps":
        state.gps_fix_3d = event.args[0] == "fix"
        if len(event.args) > 1:
            state.hdop = float(event.args[1])
    elif event.kind == "wind":
        state.wind = np.array([float(event.args[0]), float(event.args[1])])
    _event(state, "Scenario", f"{event.kind} {' '.join(str(a) for a in event.args)}")
    return state


@dataclass(frozen=True)
class AcceptedFrame:
    """A frame the vehicle acted on, with the origin tag of its datagram"""

    time: float
    msgid: int
    sysid: int
    origin: str


class MAV_Vehicle(MAVAPI_Baseclass):
    """A simulated vehicle attached to a link.

    Each `step` drains the link into a bounded receive queue, handles at most
    `rx_frames_per_tick` queued datagrams, advances the kinematics by one
    tick, checks failsafes and sends the telemetry that is due.

    Parameters
    ----------
    link : MAV_Link
        Link endpoint to talk on, or None for a detached vehicle.
    params : SimParams
        Tunables.
    clock : MAV_SimClock
        Clock advanced by whoever drives `step`.
    signing : MAV_SigningContext
        When given, inbound frames must verify and outbound v2 frames are signed.
    scenario : list of ScenarioEvent
        Timed changes applied as simulated time passes.

    Attributes
    ----------
    state : VehicleState
        Live state, owned by the step loop.
    accepted : list of AcceptedFrame
        Frames that passed checksum and signing and were acted on.
    rx_overflow : int
        Datagrams dropped because the receive queue was full.
    """

    _parameters = ["sysid"]
    _attributes = ["mode", "armed", "relative_alt", "battery_pct", "rx_overflow"]

    def __init__(self, link=None, params=None, clock=None, signing=None, catalog=None, scenario=None):
        self.params = params if params is not None else SimParams()
        self.params.validate()
        self.clock = clock if clock is not None else MAV_SimClock()
        self.catalog = catalog if catalog is not None else default_catalog()
        self.link = link
        self.signing = signing
        self.state = VehicleState.at_rest(self.params)
        self.parser = MAV_Parser(self.catalog)
        self.rx_queue = deque()
        self.rx_overflow = 0
        self.accepted = []
        self.on_receive = None
        self.scenario = deque(scenario or [])

    @property
    def sysid(self):
        return self.params.sysid

    @property
    def mode(self):
        return self.state.mode

    @property
    def armed(self):
        return self.state.armed

    @property
    def relative_alt(self):
        return self.state.relative_alt

    @property
    def battery_pct(self):
        return round(self.state.battery_pct, 2)

    @property
    def events(self):
        return self.state.events

    def snapshot(self):
        s = self.state
        return VehicleSnapshot(
            time=s.time,
            mode=s.mode,
            armed=s.armed,
            position=s.position,
            relative_alt=s.relative_alt,
            velocity=s.velocity,
            heading=s.heading_cdeg,
            battery_pct=s.battery_pct,
            mission_index=s.mission_index,
            mission_complete=s.mission_complete,
            failsafe=s.failsafe,
            crashed=s.crashed,
        )

    def step(self):
        now = self.clock.monotonic_us() / 1e6
        self.state.time = now
        while self.scenario and self.scenario[0].time <= now:
            apply_event(self.state, self.scenario.popleft())
        self._receive(now)
        tick(self.state, self.params)
        failsafe_check(self.state, self.params)
        for frame in emit_telemetry(self.state, self.clock, self.params):
            self._send_frame(frame)
        self._flush_outbox()

    def run(self, duration, realtime=False):
        """Step for `duration` simulated seconds, advancing the clock. With
        `realtime` each step waits for the wall clock to catch up."""
        dt = self.params.dt
        start = time.monotonic()
        for i in range(int(round(duration / dt))):
            self.clock.advance(dt)
            self.step()
            if realtime:
                delay = start + (i + 1) * dt - time.monotonic()
                if delay > 0:
                    time.sleep(delay)

    def _receive(self, now):
        if self.link is None:
            return
        while True:
            datagram = self.link.recv_datagram(timeout=0)
            if datagram is None:
                break
            if self.on_receive is not None:
                self.on_receive(now)
            if len(self.rx_queue) >= self.params.rx_queue_len:
                self.rx_overflow += 1
                continue
            self.rx_queue.append(datagram)
        for _ in range(min(len(self.rx_queue), self.params.rx_frames_per_tick)):
            self._process(self.rx_queue.popleft(), now)

    def _process(self, datagram, now):
        for frame, verdict in self.parser.feed(datagram.data):
            if not verdict:
                self.state.errors_comm += 1
                continue
            if self.signing is not None and not self.signing.verify(frame):
                self.state.errors_comm += 1
                continue
            try:
                msg = self.catalog.decode(frame)
            except (UnknownMessage, LengthMismatch):
                self.state.errors_comm += 1
                continue
            self.accepted.append(AcceptedFrame(now, frame.msgid, frame.sysid, datagram.origin or ORIGIN_REMOTE))
            self._dispatch(frame, msg)
        if not self.link.byte_stream:
            self.parser.reset()

    def _dispatch(self, frame, msg):
        state = self.state
        if frame.sysid == GCS_SYSID:
            stats_update(state.link, frame.seq)
        if msg.name == "HEARTBEAT":
            if msg.type == MAV_TYPE.GCS:
                state.last_gcs_heartbeat = state.time
        elif msg.name == "COMMAND_LONG":
            if msg.target_system in (0, self.sysid):
                _, ack = handle_command(state, msg, self.params)
                state.outbox.insert(0, ack)
        elif msg.name == "MISSION_ITEM":
            if msg.target_system in (0, self.sysid):
                _, ack = handle_mission_item(state, msg, self.params)
                state.outbox.append(ack)

    def _send_frame(self, frame):
        if self.link is None:
            return
        if self.signing is not None and frame.version == 2:
            frame = self.signing.sign(frame)
        self.link.send(frame.to_bytes())

    def _flush_outbox(self):
        for msg in self.state.outbox:
            frame = self.catalog.frame(
                msg, _next_seq(self.state), self.params.sysid, self.params.compid, self.params.mavlink_version
            )
            self._send_frame(frame)
        self.state.outbox.clear()


# Aliases
Vehicle = MAV_Vehicle
