"""Clocks and the MAVLink 2.0 signing timestamp.

Two clock sources are provided. `MAV_SystemClock` follows the host wall clock.
`MAV_SimClock` is driven explicitly by the simulator and threat harness so
that every run is independent of wall time.
"""

import time
from datetime import datetime, timedelta, timezone

from .api_common import MAVAPI_Baseclass, convert_to_dt

# Signing timestamps count 10 microsecond units from this instant
SIGNING_EPOCH = datetime(2015, 1, 1, tzinfo=timezone.utc)
TIMESTAMP_UNIT = timedelta(microseconds=10)
TIMESTAMP_MASK = (1 << 48) - 1
UNITS_PER_SECOND = 100000

# Start instant of simulated clocks unless told otherwise
DEFAULT_SIM_START = "2024-01-01 00:00:00"


def timestamp_now(clock):
    """Signing timestamp of the clock's current instant: 10 microsecond units
    since 2015-01-01 00:00:00 UTC, truncated to 48 bits"""
    return timestamp_from_datetime(clock.now())


def timestamp_from_datetime(dt):
    delta = convert_to_dt(dt) - SIGNING_EPOCH
    return (delta // TIMESTAMP_UNIT) & TIMESTAMP_MASK


def datetime_from_timestamp(timestamp):
    """Inverse of `timestamp_from_datetime` for timestamps within 48 bits"""
    return SIGNING_EPOCH + timestamp * TIMESTAMP_UNIT


class MAV_SystemClock(MAVAPI_Baseclass):
    """Wall clock of the host"""

    _attributes = ["utctime"]

    @property
    def utctime(self):
        return self.now()

    def now(self):
        return datetime.now(timezone.utc)

    def monotonic_us(self):
        return time.monotonic_ns() // 1000


class MAV_SimClock(MAVAPI_Baseclass):
    """A clock that only moves when `advance` is called.

    Time is kept as integer microseconds since `start` so that stepping at
    50 Hz accumulates no rounding error.

    Parameters
    ----------
    start : datetime or str
        UTC instant at simulated time zero.
    """

    _parameters = ["start"]
    _attributes = ["elapsed", "utctime"]

    def __init__(self, start=DEFAULT_SIM_START):
        self.start = convert_to_dt(start)
        self._us = 0

    @property
    def elapsed(self):
        """Simulated seconds since start"""
        return self._us / 1e6

    @property
    def utctime(self):
        return self.now()

    def now(self):
        return self.start + timedelta(microseconds=self._us)

    def monotonic_us(self):
        return self._us

    def advance(self, seconds):
        """Move time forward. Returns the new elapsed time in seconds."""
        if seconds < 0:
            raise ValueError("Simulated time cannot go backwards")
        self._us += int(round(seconds * 1e6))
        return self.elapsed

    def advance_to(self, seconds):
        """Move time forward to an absolute elapsed time"""
        target = int(round(seconds * 1e6))
        if target < self._us:
            raise ValueError(f"Simulated time is already past {seconds} s")
        self._us = target
        return self.elapsed


class MAV_Scheduler(MAVAPI_Baseclass):
    """Steps a fixed list of actors in order on a shared simulated clock.

    Each tick advances the clock by `dt`, then calls `step()` on every actor
    in the order given. Nothing depends on wall time, so a run is fully
    determined by its inputs.
    """

    _parameters = ["dt"]
    _attributes = ["ticks", "elapsed"]

    def __init__(self, clock, actors, dt=0.02):
        self.clock = clock
        self.actors = list(actors)
        self.dt = dt
        self.ticks = 0

    @property
    def elapsed(self):
        return self.clock.elapsed

    def step(self):
        self.clock.advance(self.dt)
        for actor in self.actors:
            actor.step()
        self.ticks += 1

    def run(self, duration):
        """Run for `duration` simulated seconds"""
        for _ in range(int(round(duration / self.dt))):
            self.step()

    def run_until(self, predicate, timeout):
        """Step until `predicate()` is true or `timeout` simulated seconds
        pass. Returns the final value of the predicate."""
        deadline = self.clock.elapsed + timeout
        while not predicate():
            if self.clock.elapsed >= deadline:
                return False
            self.step()
        return True


# Aliases
SystemClock = MAV_SystemClock
SimClock = MAV_SimClock
Scheduler = MAV_Scheduler
