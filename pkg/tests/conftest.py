import numpy as np
import pytest

from mavkit.mav_catalog import default_catalog
from mavkit.mav_clock import MAV_Scheduler, MAV_SimClock
from mavkit.mav_gcs import MAV_GroundStation
from mavkit.mav_link import MAV_SimLink, SimLinkConfig
from mavkit.mav_signing import MAV_SigningContext, keygen
from mavkit.mav_vehicle import MAV_Vehicle, SimParams


@pytest.fixture
def catalog():
    return default_catalog()


@pytest.fixture
def rng():
    return np.random.default_rng(1)


@pytest.fixture
def clock():
    return MAV_SimClock()


@pytest.fixture
def key():
    return keygen(b"mavkit test key")


@pytest.fixture
def heartbeat(catalog):
    return catalog.message(
        "HEARTBEAT", type=2, autopilot=3, base_mode=128 | 16 | 4, custom_mode=10, system_status=4, mavlink_version=3
    )


class SimRig:
    """Vehicle and ground station on one simulated link, stepped together"""

    def __init__(self, clock, config=None, params=None, signing_key=None, scenario=None):
        self.clock = clock
        self.params = params if params is not None else SimParams()
        self.link = MAV_SimLink(config if config is not None else SimLinkConfig(), clock)
        vehicle_signing = gcs_signing = None
        if signing_key is not None:
            vehicle_signing = MAV_SigningContext(signing_key, clock)
            gcs_signing = MAV_SigningContext(signing_key, clock)
        self.vehicle = MAV_Vehicle(self.link.vehicle_end, self.params, clock, vehicle_signing, scenario=scenario)
        self.gcs = MAV_GroundStation(self.link.gcs_end, clock, gcs_signing, target_system=self.params.sysid)
        self.scheduler = MAV_Scheduler(clock, [self.vehicle, self.gcs], dt=self.params.dt)

    def pump(self):
        self.scheduler.step()

    def wait(self, status, timeout=30.0):
        return self.gcs.wait(status, self.pump, timeout)

    def run_until(self, predicate, timeout):
        return self.scheduler.run_until(predicate, timeout)


@pytest.fixture
def rig(clock):
    return SimRig(clock)


@pytest.fixture
def signed_rig(clock, key):
    return SimRig(clock, signing_key=key)
