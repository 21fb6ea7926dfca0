from datetime import date, datetime, timedelta, timezone

import pytest

from mavkit.api_common import ScenarioInvalid, convert_to_dt, parse_hostport, read_keyvalue_file
from mavkit.api_status import MAV_Status
from mavkit.mav_catalog import FlightMode
from mavkit.mav_clock import MAV_Scheduler, MAV_SimClock
from mavkit.mav_gcs import VehicleView

UTC = timezone.utc


class TestConvertToDt:
    @pytest.mark.parametrize(
        "value",
        [
            "2024-01-01 00:00:00",
            "2024-01-01T00:00:00+00:00",
            datetime(2024, 1, 1),
            datetime(2024, 1, 1, 2, tzinfo=timezone(timedelta(hours=2))),
            date(2024, 1, 1),
            1704067200,
        ],
    )
    def test_formats(self, value):
        assert convert_to_dt(value) == datetime(2024, 1, 1, tzinfo=UTC)

    def test_none(self):
        assert convert_to_dt(None) is None

    def test_bad_string(self):
        with pytest.raises(ValueError):
            convert_to_dt("yesterday")

    def test_bad_type(self):
        with pytest.raises(TypeError):
            convert_to_dt([2024])

    def test_naive_iso_warns(self):
        with pytest.warns(UserWarning):
            assert convert_to_dt("2024-01-01T00:00:00") == datetime(2024, 1, 1, tzinfo=UTC)


class TestHostPort:
    def test_parse(self):
        assert parse_hostport("10.0.0.2:14550") == ("10.0.0.2", 14550)
        assert parse_hostport(":14550") == ("127.0.0.1", 14550)

    @pytest.mark.parametrize("value", ["14550", "host:", "host:99999", "a:b"])
    def test_bad(self, value):
        with pytest.raises(ValueError):
            parse_hostport(value)


class TestKeyValueFile:
    def test_read(self, tmp_path):
        path = tmp_path / "values.conf"
        path.write_text("# header\n\nattack = Replay  # inline\nseed=3\n")
        assert read_keyvalue_file(path) == {"attack": "Replay", "seed": "3"}

    def test_missing_equals(self, tmp_path):
        path = tmp_path / "values.conf"
        path.write_text("attack Replay\n")
        with pytest.raises(ScenarioInvalid, match=":1:"):
            read_keyvalue_file(path)


class TestStatus:
    def test_lifecycle(self):
        status = MAV_Status("ARM_DISARM", began=1.0)
        assert status == "Pending" and not status.done and not status
        assert status.resolve(MAV_Status.ACCEPTED, 1.5)
        assert status and status.done and status.completed == 1.5
        assert not status.resolve(MAV_Status.TIMEOUT, 2.0)
        assert status == "Accepted"

    def test_messages_are_deduplicated(self):
        status = MAV_Status("LAND")
        status.error("refused")
        status.error("refused")
        status.warning("slow")
        assert status.errors == ["refused"] and status.warnings == ["slow"]


class TestRendering:
    def test_table_and_repr(self):
        clock = MAV_SimClock()
        clock.advance(1.5)
        assert "elapsed" in str(clock) and "1.5" in str(clock)
        assert repr(clock).startswith("MAV_SimClock(start=")

    def test_html(self):
        html = MAV_Scheduler(MAV_SimClock(), [], dt=0.02)._repr_html_()
        assert html.startswith("<table>") and "ticks" in html

    def test_api_data_reports_enum_names(self):
        view = VehicleView(3)
        view.mode = FlightMode.LOITER
        data = view.api_data
        assert data["sysid"] == 3
        assert data["mode"] == "LOITER"
        assert data["alive"] is False


class TestSimClock:
    def test_advance(self):
        clock = MAV_SimClock("2024-06-01 12:00:00")
        for _ in range(50):
            clock.advance(0.02)
        assert clock.monotonic_us() == 1000000
        assert clock.now() == datetime(2024, 6, 1, 12, 0, 1, tzinfo=UTC)

    def test_no_going_back(self):
        clock = MAV_SimClock()
        clock.advance(2)
        with pytest.raises(ValueError):
            clock.advance(-1)
        with pytest.raises(ValueError):
            clock.advance_to(1)

    def test_scheduler_order(self):
        clock = MAV_SimClock()
        calls = []

        class Actor:
            def __init__(self, name):
                self.name = name

            def step(self):
                calls.append((self.name, clock.elapsed))

        scheduler = MAV_Scheduler(clock, [Actor("a"), Actor("b")], dt=0.5)
        scheduler.run(1.0)
        assert calls == [("a", 0.5), ("b", 0.5), ("a", 1.0), ("b", 1.0)]
        assert scheduler.ticks == 2
        assert scheduler.run_until(lambda: clock.elapsed >= 2.0, 10)
        assert not scheduler.run_until(lambda: False, 1.0)
