"""The `mavkit` command.

    mavkit mavdump [INPUT] [--key FILE]
    mavkit keygen OUT [--keyring]
    mavkit sim [--udp HOST:PORT | --tcp HOST:PORT] [--signed --key FILE] [--seed N] [--scenario FILE]
               [--capture PATH] [--duration S]
    mavkit gcs [--udp HOST:PORT | --tcp HOST:PORT | --sim] [--signed --key FILE] ACTION ...
    mavkit attack [--scenario FILE] [--seed N] [--matrix] [--summary PATH]
    mavkit catalog

Text output is line oriented `key: value`; `--machine` switches to one JSON
object per line. Exit codes: 0 success, 1 usage error, 2 runtime failure,
3 attack matrix does not match the expected defences.
"""

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone

import pandas as pd

from . import mav_vehicle
from .api_common import MAVKitError, parse_hostport
from .api_status import MAV_Status
from .mav_catalog import FlightMode, default_catalog
from .mav_clock import MAV_Scheduler, MAV_SimClock, datetime_from_timestamp
from .mav_frame import (
    CHECKSUM_LEN,
    HEADER_LEN_V1,
    HEADER_LEN_V2,
    INCOMPAT_SIGNED,
    SIGNATURE_LEN,
    STX_V1,
    STX_V2,
    CrcVerdict,
    Direction,
    MAV_Parser,
    frame_crc,
    frame_from_bytes,
)
from .mav_gcs import DetectorConfig, MAV_Detectors, MAV_GroundStation, load_mission
from .mav_link import CaptureWriter, MAV_SimLink, SimLinkConfig, capture_iter, open_tcp, open_udp
from .mav_signing import KEYFILE_ENV, MAV_SigningContext, UnsignedPolicy, keygen, load_key, store_key
from .mav_threats import (
    AttackScenario,
    MissionOperator,
    matrix_scenarios,
    mission_script,
    run_scenario,
    score_matrix,
    square_mission,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_MISMATCH = 3

DEFAULT_PORT = 14550


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(lines):
    for line in lines:
        print(line)


def _machine(records):
    """Print records as JSON lines"""
    for record in records:
        print(json.dumps(record, default=str))


# mavdump
class _PinnedClock:
    """Clock that reads whatever instant it was last set to. Offline
    verification pins it to each frame's own timestamp."""

    def __init__(self):
        self.instant = datetime(2015, 1, 1, tzinfo=timezone.utc)

    def now(self):
        return self.instant


def split_frames(data, catalog):
    """Frames of a record or hex string, in order, as (frame, verdict).

    Input is assumed to start at a frame boundary; frames are cut by their
    declared length, so a damaged frame yields exactly one CRC BAD entry.
    If a boundary is lost the rest is rescanned with a parser. A verdict of
    None means the msgid is not in the catalog.
    """
    offset = 0
    while offset < len(data):
        stx = data[offset]
        if stx not in (STX_V1, STX_V2) or len(data) - offset < 3:
            yield from MAV_Parser(catalog).feed(data[offset:])
            return
        if stx == STX_V1:
            total = HEADER_LEN_V1 + data[offset + 1] + CHECKSUM_LEN
        else:
            signed = data[offset + 2] & INCOMPAT_SIGNED
            total = HEADER_LEN_V2 + data[offset + 1] + CHECKSUM_LEN + (SIGNATURE_LEN if signed else 0)
        if len(data) - offset < total:
            logger.warning(f"{len(data) - offset} trailing bytes do not hold a complete frame")
            return
        frame = frame_from_bytes(bytes(data[offset : offset + total]))
        seed = catalog.crc_seed(frame.msgid)
        if seed is None:
            verdict = None
        else:
            verdict = CrcVerdict.CRC_OK if frame_crc(frame, seed) == frame.crc else CrcVerdict.CRC_BAD
        yield frame, verdict
        offset += total


def describe_frame(frame, verdict, catalog, signing=None, pinned=None):
    """Ordered dict of everything mavdump shows about one frame"""
    out = {"version": frame.version, "len": frame.len}
    if frame.version == 2:
        out["incompat_flags"] = f"0x{frame.incompat_flags:02x}"
        out["compat_flags"] = f"0x{frame.compat_flags:02x}"
    out.update(seq=frame.seq, sysid=frame.sysid, compid=frame.compid, msgid=frame.msgid)
    if frame.msgid in catalog:
        out["message"] = catalog[frame.msgid].name
        if verdict:
            try:
                out["fields"] = catalog.decode(frame).to_dict()
            except ValueError as exc:
                out["fields"] = f"undecodable: {exc}"
    else:
        out["message"] = "unknown"
    out["crc"] = verdict.value if verdict is not None else "unchecked"
    if frame.signed and frame.signature is not None:
        out["link_id"] = frame.signature.link_id
        out["timestamp"] = frame.signature.timestamp
        if signing is not None and verdict:
            pinned.instant = datetime_from_timestamp(frame.signature.timestamp)
            out["signature"] = str(signing.verify(frame))
        else:
            out["signature"] = "present"
    else:
        out["signature"] = "unsigned"
    return out


def _dump_lines(index, info, record=None):
    lines = [f"frame: {index}"]
    if record is not None:
        lines.append(f"record_time_us: {record.timestamp_us}")
        lines.append(f"direction: {record.direction.name}")
    for key, value in info.items():
        if key == "fields" and isinstance(value, dict):
            lines.extend(f"  {name}: {v}" for name, v in value.items())
        else:
            lines.append(f"{key}: {value}")
    lines.append("")
    return lines


def _read_dump_input(source):
    """(records or None, raw bytes) from a capture file path, a hex string or stdin"""
    if source is None or source == "-":
        text = sys.stdin.read()
        return None, bytes.fromhex("".join(text.split()))
    if os.path.isfile(source):
        with open(source, "rb") as f:
            return list(capture_iter(f.read())), None
    return None, bytes.fromhex("".join(source.split()))


def cmd_mavdump(args):
    catalog = default_catalog()
    signing = pinned = None
    if args.key is not None:
        pinned = _PinnedClock()
        signing = MAV_SigningContext(load_key(args.key), pinned, unsigned_policy=UnsignedPolicy.REJECT)
    try:
        records, raw = _read_dump_input(args.input)
    except ValueError as exc:
        if isinstance(exc, MAVKitError):
            raise
        raise MAVKitError(f"Input is neither a capture file nor hex: {exc}")

    chunks = [(r, r.frame) for r in records] if records is not None else [(None, raw)]
    index = 0
    for record, data in chunks:
        for frame, verdict in split_frames(data, catalog):
            info = describe_frame(frame, verdict, catalog, signing, pinned)
            if args.machine:
                if record is not None:
                    info = {"record_time_us": record.timestamp_us, "direction": record.direction.name, **info}
                _machine([{"frame": index, **info}])
            else:
                _emit(_dump_lines(index, info, record))
            index += 1
    return EXIT_OK


# keygen
def cmd_keygen(args):
    key = keygen(args.entropy)
    store_key(key, args.out, use_keyring=args.keyring)
    if args.machine:
        _machine([{"path": args.out, "fingerprint": key.fingerprint}])
    else:
        _emit([f"path: {args.out}", f"fingerprint: {key.fingerprint}"])
    return EXIT_OK


# Shared link and signing setup
def _signing(args, clock):
    if not getattr(args, "signed", False):
        return None
    return MAV_SigningContext(load_key(args.key), clock)


def _open_link(args, role, clock):
    """Open the link named by --udp or --tcp. The vehicle binds and listens,
    the ground station connects."""
    if args.udp is not None:
        address = parse_hostport(args.udp)
        if role == "vehicle":
            return open_udp(address, clock=clock)
        return open_udp(("127.0.0.1", 0), remote=address, clock=clock)
    address = parse_hostport(args.tcp)
    if role == "vehicle":
        server = open_tcp(address, listen=True, clock=clock)
        logger.info(f"Waiting for a ground station on tcp {address[0]}:{address[1]}")
        server.accept(timeout=None)
        return server
    return open_tcp(address, clock=clock)


def _wall_clock():
    """Simulated clock started at the current instant and advanced in step
    with the wall clock, so signing timestamps agree with other hosts"""
    return MAV_SimClock(datetime.now(timezone.utc))


class _SimSession:
    """Vehicle and ground station on an in-process link"""

    def __init__(self, args):
        self.clock = MAV_SimClock()
        config = SimLinkConfig(
            drop_probability=getattr(args, "drop", 0.0),
            corrupt_probability=getattr(args, "corrupt", 0.0),
            rng_seed=args.seed,
        )
        self.link = MAV_SimLink(config, self.clock)
        scenario = mav_vehicle.load_scenario(args.scenario) if getattr(args, "scenario", None) else None
        self.params = mav_vehicle.SimParams()
        self.vehicle = mav_vehicle.MAV_Vehicle(
            self.link.vehicle_end, self.params, self.clock, _signing(args, self.clock), scenario=scenario
        )
        self.gcs = MAV_GroundStation(
            self.link.gcs_end, self.clock, _signing(args, self.clock), detectors=_detectors(args)
        )
        self.actors = [self.vehicle, self.gcs]
        self.scheduler = MAV_Scheduler(self.clock, self.actors, dt=self.params.dt)

    def pump(self):
        self.scheduler.step()


def _detectors(args):
    path = getattr(args, "detectors", None)
    return MAV_Detectors(DetectorConfig.from_file(path) if path else None)


# sim
def _vehicle_lines(vehicle):
    lines = [f"t={e.time:.2f} {e.kind} {e.detail}".rstrip() for e in vehicle.events]
    s = vehicle.state
    lat, lon, alt = s.position
    lines += [
        f"mode: {s.mode.name}",
        f"armed: {'yes' if s.armed else 'no'}",
        f"position: {lat} {lon} {alt}",
        f"relative_alt_mm: {s.relative_alt}",
        f"battery_pct: {s.battery_pct:.1f}",
        f"mission_log: {' '.join(str(seq) for seq in s.mission_log)}",
        f"mission_complete: {'yes' if s.mission_complete else 'no'}",
        f"failsafe: {s.failsafe or 'none'}",
        f"errors_comm: {s.errors_comm}",
    ]
    return lines


def _vehicle_record(vehicle):
    snap = vehicle.snapshot()
    return {
        "time": round(snap.time, 2),
        "mode": snap.mode.name,
        "armed": snap.armed,
        "position": list(snap.position),
        "relative_alt": snap.relative_alt,
        "battery_pct": round(snap.battery_pct, 2),
        "mission_log": list(vehicle.state.mission_log),
        "mission_complete": snap.mission_complete,
        "failsafe": snap.failsafe,
        "crashed": snap.crashed,
        "events": [f"{e.kind} {e.detail}".rstrip() for e in vehicle.events],
    }


def cmd_sim(args):
    if args.udp is None and args.tcp is None:
        return _sim_loopback(args)

    clock = _wall_clock()
    scenario = mav_vehicle.load_scenario(args.scenario) if args.scenario else None
    link = _open_link(args, "vehicle", clock)
    writer = CaptureWriter(args.capture) if args.capture else None
    if writer is not None:
        link.attach_capture(writer, Direction.TO_GCS)
    vehicle = mav_vehicle.MAV_Vehicle(link, mav_vehicle.SimParams(), clock, _signing(args, clock), scenario=scenario)
    logger.info(f"Vehicle {vehicle.sysid} running")
    try:
        while args.duration is None or clock.elapsed < args.duration:
            vehicle.run(1.0, realtime=True)
    except KeyboardInterrupt:
        pass
    finally:
        link.close()
        if writer is not None:
            writer.close()
    if args.machine:
        _machine([_vehicle_record(vehicle)])
    else:
        _emit(_vehicle_lines(vehicle))
    return EXIT_OK


def _sim_loopback(args):
    """Fly the square mission against the simulator on an in-process link"""
    session = _SimSession(args)
    writer = CaptureWriter(args.capture) if args.capture else None
    if writer is not None:
        session.link.vehicle_end.attach_capture(writer, Direction.TO_GCS)
    gcs = session.gcs
    operator = MissionOperator(gcs, mission_script(gcs, square_mission(session.params)))
    session.scheduler.actors.append(operator)
    try:
        session.scheduler.run_until(lambda: session.vehicle.state.mission_complete, args.duration or 120.0)
    finally:
        if writer is not None:
            writer.close()
    if args.machine:
        _machine([_vehicle_record(session.vehicle)])
    else:
        _emit(_vehicle_lines(session.vehicle))
    return EXIT_OK if operator.failed is None else EXIT_RUNTIME


# gcs
def _status_lines(status):
    lines = [f"request: {status.name}", f"status: {status.status}"]
    if hasattr(status, "confirmations"):
        lines.append(f"confirmations: {' '.join(str(c) for c in status.confirmations)}")
        result = status.result
        lines.append(f"result: {getattr(result, 'name', result) if result is not None else 'none'}")
    if hasattr(status, "acked"):
        lines.append(f"acked: {' '.join(str(s) for s in status.acked)}")
    lines.extend(f"error: {e}" for e in status.errors)
    return lines


def _status_record(status):
    record = {"request": status.name, "status": status.status, "errors": status.errors}
    if hasattr(status, "confirmations"):
        record["confirmations"] = status.confirmations
        record["result"] = getattr(status.result, "name", status.result)
    if hasattr(status, "acked"):
        record["acked"] = status.acked
    return record


def _view_records(gcs, now):
    records = []
    for view in gcs.views.values():
        pos = view.position
        records.append(
            {
                "time": round(now, 2),
                "sysid": view.sysid,
                "alive": view.alive,
                "mode": view.mode.name,
                "armed": view.armed,
                "lat": None if pos is None else pos.lat,
                "lon": None if pos is None else pos.lon,
                "relative_alt": None if pos is None else pos.relative_alt,
                "battery_pct": view.battery_pct,
                "received": view.link.received,
                "lost": view.link.lost,
                "drop_ratio": view.drop_ratio,
            }
        )
    return records


def cmd_gcs(args):
    if args.sim:
        session = _SimSession(args)
        gcs, pump, clock = session.gcs, session.pump, session.clock
        link = None
    else:
        clock = _wall_clock()
        link = _open_link(args, "gcs", clock)
        gcs = MAV_GroundStation(link, clock, _signing(args, clock), detectors=_detectors(args))

        def pump():
            clock.advance(0.02)
            gcs.step()
            time.sleep(0.02)

    writer = CaptureWriter(args.capture) if args.capture else None
    if writer is not None:
        (link if link is not None else session.link.gcs_end).attach_capture(writer, Direction.TO_VEHICLE)
    try:
        return _gcs_action(args, gcs, pump, clock)
    except KeyboardInterrupt:
        return EXIT_OK
    finally:
        if link is not None:
            link.close()
        if writer is not None:
            writer.close()


def _gcs_action(args, gcs, pump, clock):
    # Hear from the vehicle before commanding it
    deadline = clock.elapsed + args.connect_timeout
    while not gcs.view.alive and clock.elapsed < deadline:
        pump()
    if not gcs.view.alive:
        logger.error(f"No heartbeat from system {gcs.target_system} within {args.connect_timeout} s")
        return EXIT_RUNTIME

    if args.action == "watch":
        return _watch(args, gcs, pump, clock)

    if args.action == "cmd":
        request = {
            "arm": gcs.arm,
            "disarm": gcs.disarm,
            "land": gcs.land,
            "get_home": gcs.get_home,
            "takeoff": lambda: gcs.takeoff(args.alt),
            "mode": lambda: gcs.set_mode(FlightMode[args.mode.upper()]),
        }[args.name]
        status = request()
    else:
        status = gcs.upload_mission(load_mission(args.file, gcs.target_system))
    gcs.wait(status, pump, timeout=args.timeout)
    if args.machine:
        _machine([_status_record(status)])
    else:
        _emit(_status_lines(status))
    return EXIT_OK if status == MAV_Status.ACCEPTED else EXIT_RUNTIME


def _watch(args, gcs, pump, clock):
    end = None if args.duration is None else clock.elapsed + args.duration
    next_report = clock.elapsed
    alerts_seen = 0
    while end is None or clock.elapsed < end:
        pump()
        for alert in gcs.alerts[alerts_seen:]:
            print(f"alert: {alert}")
        alerts_seen = len(gcs.alerts)
        if clock.elapsed >= next_report:
            next_report += args.interval
            if args.machine:
                print(pd.DataFrame(_view_records(gcs, clock.elapsed)).to_json(orient="records", lines=True).strip())
            else:
                print(gcs)
    return EXIT_OK


# attack
def cmd_attack(args):
    if args.scenario is not None:
        base = AttackScenario.from_file(args.scenario)
    elif args.matrix:
        base = None
    else:
        raise _UsageError("attack needs --scenario FILE or --matrix")
    seed = args.seed if args.seed is not None else (base.rng_seed if base is not None else 1)

    if args.matrix:
        matrix = score_matrix(matrix_scenarios(seed, base=base))
        summary = matrix.summary()
        if args.summary:
            with open(args.summary, "w") as f:
                f.write(summary)
        if args.machine:
            print(summary.strip())
        else:
            print(matrix)
            for report in matrix.mismatches:
                print(f"mismatch: {report.attack.value} signing={'on' if report.signing else 'off'}")
            print(f"all_passed: {'yes' if matrix.all_passed else 'no'}")
        return EXIT_OK if matrix.all_passed else EXIT_MISMATCH

    report = run_scenario(base.with_seed(seed))
    summary = pd.DataFrame([report.to_dict()]).to_json(orient="records", lines=True)
    if args.summary:
        with open(args.summary, "w") as f:
            f.write(summary)
    if args.machine:
        print(summary.strip())
    else:
        _emit(report.lines())
        for alert in report.alerts:
            print(f"alert: {alert}")
    return EXIT_OK


# catalog
def cmd_catalog(args):
    catalog = default_catalog()
    records = [
        {
            "msgid": d.msgid,
            "name": d.name,
            "len": d.payload_len,
            "crc_seed": d.crc_seed,
            "fields": " ".join(f"{f.type}:{f.name}" for f in d.fields),
        }
        for d in catalog
    ]
    if args.machine:
        print(pd.DataFrame(records).to_json(orient="records", lines=True).strip())
    else:
        _emit(f"{r['name']}: msgid={r['msgid']} len={r['len']} crc_seed={r['crc_seed']}" for r in records)
    return EXIT_OK


class _UsageError(Exception):
    pass


def _add_link_options(parser, sim_flag):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--udp", metavar="HOST:PORT", help="UDP address")
    group.add_argument("--tcp", metavar="HOST:PORT", help="TCP address")
    if sim_flag:
        group.add_argument("--sim", action="store_true", help="talk to an in-process simulated vehicle")
    parser.add_argument("--signed", action="store_true", help="sign outgoing and require signed incoming frames")
    parser.add_argument("--key", metavar="FILE", help=f"signing key file (default ${KEYFILE_ENV})")
    parser.add_argument("--seed", type=int, default=1, help="seed of the in-process link")
    parser.add_argument("--capture", metavar="PATH", help="record traffic to a capture file")
    parser.add_argument("--detectors", metavar="FILE", help="detector thresholds, key=value")


def build_parser():
    common = _ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    common.add_argument("--machine", action="store_true", help="JSON lines output")

    parser = _ArgumentParser(prog="mavkit", description="MAVLink toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_ArgumentParser)
    sub.required = True

    p = sub.add_parser("mavdump", parents=[common], help="decode frames from hex or a capture file")
    p.add_argument("input", nargs="?", help="capture file, hex string, or - for hex on stdin")
    p.add_argument("--key", metavar="FILE", help="verify signatures with this key")
    p.set_defaults(func=cmd_mavdump)

    p = sub.add_parser("keygen", parents=[common], help="generate a signing key file")
    p.add_argument("out", help="key file to write")
    p.add_argument("--keyring", action="store_true", help="also store the key in the system keyring")
    p.add_argument("--entropy", default=None, help="derive the key from this text (reproducible, for tests)")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("sim", parents=[common], help="run the vehicle simulator")
    _add_link_options(p, sim_flag=False)
    p.add_argument("--scenario", metavar="FILE", help="timed battery, GPS and wind events")
    p.add_argument("--duration", type=float, default=None, help="simulated seconds to run")
    p.add_argument("--drop", type=float, default=0.0, help="drop probability of the in-process link")
    p.add_argument("--corrupt", type=float, default=0.0, help="corruption probability of the in-process link")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("gcs", parents=[common], help="ground station commands")
    _add_link_options(p, sim_flag=True)
    p.add_argument("--timeout", type=float, default=30.0, help="seconds to wait for a request")
    p.add_argument("--connect-timeout", type=float, default=10.0, help="seconds to wait for a heartbeat")
    actions = p.add_subparsers(dest="action", metavar="ACTION", parser_class=_ArgumentParser)
    actions.required = True
    c = actions.add_parser("cmd", help="send one command")
    c.add_argument("name", choices=["arm", "disarm", "takeoff", "land", "mode", "get_home"])
    c.add_argument("mode", nargs="?", help="flight mode for 'mode'")
    c.add_argument("--alt", type=float, default=10.0, help="takeoff altitude above home, m")
    m = actions.add_parser("mission", help="mission transfer")
    m.add_argument("op", choices=["upload"])
    m.add_argument("file", help="mission file: seq frame x y z per line")
    w = actions.add_parser("watch", help="print vehicle state and alerts")
    w.add_argument("--duration", type=float, default=None, help="seconds to watch")
    w.add_argument("--interval", type=float, default=1.0, help="seconds between reports")
    p.set_defaults(func=cmd_gcs)

    p = sub.add_parser("attack", parents=[common], help="run attack scenarios")
    p.add_argument("--scenario", metavar="FILE", help="scenario file, key=value")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--matrix", action="store_true", help="run every attack with signing off and on")
    p.add_argument("--summary", metavar="PATH", help="write the machine readable summary here")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("catalog", parents=[common], help="list message descriptors and CRC seeds")
    p.set_defaults(func=cmd_catalog)
    return parser


def _configure_logging(verbose):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    if args.command == "gcs" and args.udp is None and args.tcp is None and not args.sim:
        args.udp = f"127.0.0.1:{DEFAULT_PORT}"
    if args.command == "gcs" and args.action == "cmd" and args.name == "mode":
        if args.mode is None or args.mode.upper() not in FlightMode.__members__:
            parser.error(f"mode needs one of {', '.join(m.name for m in FlightMode if m.value >= 0)}")
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.error(str(exc))
    except (MAVKitError, OSError) as exc:
        logger.error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
