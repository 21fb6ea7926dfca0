"""The `mavkit` package is a desk-scale toolkit for the MAVLink 1.0 and 2.0
protocols: it frames and parses messages, signs and verifies them, moves them
over UDP, TCP or an in-process simulated link, and provides a simulated
copter and a ground station to talk to each other. A scripted adversary runs
the classic protocol attacks against the pair and scores which of them
message signing defeats.

The package is split into the following main classes:

1. MAV_Parser

Streaming frame parser. Bytes can be fed in chunks of any size; frames are
emitted with a checksum verdict and the parser resynchronises on the next
start byte after garbage or a damaged frame. `serialize`, `FrameV1` and
`FrameV2` build frames the other way.

2. MAV_Catalog

The message definitions (HEARTBEAT, SYS_STATUS, SYSTEM_TIME,
GLOBAL_POSITION, MISSION_ITEM, COMMAND_LONG and COMMAND_ACK) with their
field layouts and CRC seeds, loaded from `data/common.msgdef`. Messages are
built with `message` and decoded with `decode`.

3. MAV_SigningContext

MAVLink 2.0 message signing: a 48 bit truncated SHA-256 tag over a shared
32 byte key, with per-stream timestamps that reject replayed and stale
frames. `keygen`, `store_key` and `load_key` manage key files, and the
system keyring when the optional `keyring` package is installed.

4. MAV_UDPLink, MAV_TCPLink and MAV_SimLink

Transports sharing one interface. The simulated link drops, corrupts and
delays frames from a seeded generator, and gives an attacker taps and
interceptors on the wire. Links can record a capture file that `mavkit
mavdump` reads back.

5. MAV_Vehicle

A simulated copter with STABILIZE, ALT_HOLD, LOITER, GUIDED, AUTO, RTL and
LAND modes, arming checks, missions, telemetry, and battery, link-loss and
geofence failsafes.

6. MAV_GroundStation

Supervises vehicles from their heartbeats and telemetry, sends commands with
retries, uploads missions item by item and runs a small rule-based intrusion
detector (`MAV_Detectors`).

7. AttackScenario, run_scenario and score_matrix

The threat harness: eavesdropping, replay, tampering, position spoofing,
command injection, flooding and jamming against a vehicle and ground station
flying a mission, with and without signing.

Note that all class names have an alias that excludes the `MAV_` part, so for
example, `MAV_Vehicle` becomes `Vehicle`.
"""

from .api_status import MAV_Status, Status
from .mav_catalog import Catalog, FlightMode, MAV_Catalog, MAV_Message, Message, default_catalog
from .mav_clock import MAV_Scheduler, MAV_SimClock, MAV_SystemClock, Scheduler, SimClock, SystemClock
from .mav_frame import FrameV1, FrameV2, MAV_Parser, Parser, serialize
from .mav_gcs import GCS, GroundStation, MAV_Detectors, MAV_GroundStation, Detectors
from .mav_link import Link, MAV_SimLink, MAV_TCPLink, MAV_UDPLink, SimLink, TCPLink, UDPLink
from .mav_signing import MAV_SigningContext, SigningContext, keygen, load_key, store_key
from .mav_threats import AttackScenario, Scenario, run_scenario, score_matrix
from .mav_vehicle import MAV_Vehicle, SimParams, Vehicle
from .version import version as __version__
