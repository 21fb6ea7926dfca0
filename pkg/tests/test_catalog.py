import numpy as np
import pytest

from mavkit.api_common import ArityMismatch, CatalogSyntaxError, LengthMismatch, TypeMismatch, UnknownMessage
from mavkit.mav_catalog import (
    FIELD_TYPES,
    MAV_AUTOPILOT,
    MAV_CMD,
    MAV_MODE_FLAG,
    MAV_STATE,
    MAV_TYPE,
    FlightMode,
    MAV_Catalog,
    absolute_alt_from_relative,
    base_mode_for,
    decode_base_mode,
    decode_payload,
    encode_payload,
    flight_mode_from_custom,
    gps_raw_to_degrees,
)
from mavkit.mav_crc import crc_x25


def _random_values(descriptor, rng):
    values = []
    for f in descriptor.fields:
        _code, _width, is_int, lo, hi = FIELD_TYPES[f.type]
        if is_int:
            values.append(int(rng.integers(lo, hi, endpoint=True, dtype=np.uint64 if f.type == "u64" else np.int64)))
        else:
            values.append(float(rng.normal(0, 1e6)))
    return values


class TestShippedCatalog:
    def test_message_set(self, catalog):
        assert catalog.msgids == [0, 1, 2, 33, 39, 76, 77]
        assert len(catalog) == 7

    def test_lookup_by_id_and_name(self, catalog):
        assert catalog[33] is catalog["GLOBAL_POSITION"]
        assert "HEARTBEAT" in catalog and 0 in catalog
        with pytest.raises(UnknownMessage):
            catalog[4242]
        assert catalog.crc_seed(4242) is None

    def test_command_long_has_eleven_fields(self, catalog):
        assert len(catalog["COMMAND_LONG"].fields) == 11

    def test_payload_lengths(self, catalog):
        assert catalog["HEARTBEAT"].payload_len == 9
        assert all(d.payload_len <= 255 for d in catalog)

    def test_seed_comes_from_canonical_string(self, catalog):
        for d in catalog:
            assert d.crc_seed == crc_x25(d.canonical.encode("ascii")) & 0xFF


class TestEnumerations:
    def test_values(self):
        assert MAV_TYPE.QUADROTOR == 2 and MAV_TYPE.HELICOPTER == 4 and MAV_TYPE.FIXED_WING == 1
        assert (MAV_AUTOPILOT.GENERIC, MAV_AUTOPILOT.ARDUPILOTMEGA, MAV_AUTOPILOT.PX4) == (0, 3, 12)
        assert [int(f) for f in MAV_MODE_FLAG] == [1, 2, 4, 8, 16, 32, 64, 128]
        assert [int(s) for s in MAV_STATE] == list(range(9))
        assert (MAV_CMD.LAND, MAV_CMD.TAKEOFF, MAV_CMD.SET_HOME, MAV_CMD.ARM_DISARM, MAV_CMD.GET_HOME) == (
            21,
            22,
            179,
            400,
            410,
        )

    def test_custom_modes(self):
        assert FlightMode.MANUAL == FlightMode.STABILIZE == 0
        expected = {"ALT_HOLD": 2, "GUIDED": 4, "LOITER": 5, "LAND": 9, "AUTO": 10, "RTL": 11}
        assert {name: int(FlightMode[name]) for name in expected} == expected


class TestEncodeDecode:
    def test_all_zero_heartbeat(self, catalog):
        descriptor = catalog["HEARTBEAT"]
        payload = encode_payload(descriptor, [0] * 6)
        assert payload == bytes(descriptor.payload_len)
        assert decode_payload(descriptor, payload) == (0,) * 6

    def test_command_offset(self, catalog):
        descriptor = catalog["COMMAND_LONG"]
        payload = catalog.message("COMMAND_LONG", command=22, param7=10.0).encode()
        offset = descriptor.offset_of("command")
        assert offset == 2
        assert payload[offset : offset + 2] == bytes([0x16, 0x00])

    def test_random_round_trip(self, catalog):
        rng = np.random.default_rng(5)
        for descriptor in catalog:
            for _ in range(1000):
                values = tuple(_random_values(descriptor, rng))
                assert decode_payload(descriptor, encode_payload(descriptor, values)) == values

    def test_arity(self, catalog):
        with pytest.raises(ArityMismatch):
            encode_payload(catalog["HEARTBEAT"], [0] * 5)

    def test_type(self, catalog):
        descriptor = catalog["HEARTBEAT"]
        with pytest.raises(TypeMismatch):
            encode_payload(descriptor, [0, 0, 0, "x", 0, 0])
        with pytest.raises(TypeMismatch):
            encode_payload(descriptor, [256, 0, 0, 0, 0, 0])

    def test_truncated_payload(self, catalog):
        descriptor = catalog["GLOBAL_POSITION"]
        with pytest.raises(LengthMismatch):
            decode_payload(descriptor, bytes(descriptor.payload_len - 1))

    def test_message_attributes_and_replace(self, catalog, heartbeat):
        assert heartbeat.custom_mode == 10
        changed = heartbeat.replace(custom_mode=11)
        assert changed.custom_mode == 11 and heartbeat.custom_mode == 10
        with pytest.raises(TypeError):
            heartbeat.replace(nope=1)


class TestValidation:
    def test_system_status_range(self, catalog, heartbeat):
        assert heartbeat.validate()
        assert not heartbeat.replace(system_status=9).validate()

    def test_battery_remaining(self, catalog):
        assert catalog.message("SYS_STATUS", battery_remaining=-1).validate()
        msg = catalog.message("SYS_STATUS", battery_remaining=101)
        assert not msg.validate()
        assert "battery_remaining" in msg.errors[0]

    def test_latitude_bound(self, catalog):
        assert not catalog.message("GLOBAL_POSITION", lat=900000001).validate()


class TestHelpers:
    @pytest.mark.parametrize(
        "raw, degrees", [(246877300, 24.68773), (0, 0.0), (467218500, 46.72185), (-246877300, -24.68773)]
    )
    def test_gps_raw_to_degrees(self, raw, degrees):
        assert gps_raw_to_degrees(raw) == pytest.approx(degrees, abs=1e-9)

    def test_absolute_alt(self):
        assert absolute_alt_from_relative(612, 10) == 622
        assert absolute_alt_from_relative(612, 0) == 612
        assert absolute_alt_from_relative(37.5, -37.5) == 0

    def test_decode_base_mode(self):
        assert decode_base_mode(132) == {MAV_MODE_FLAG.ARMED, MAV_MODE_FLAG.AUTO}
        assert decode_base_mode(0) == set()
        assert decode_base_mode(255) == set(MAV_MODE_FLAG)
        assert MAV_MODE_FLAG.RESERVED in decode_base_mode(1)

    @pytest.mark.parametrize("custom, mode", [(11, FlightMode.RTL), (5, FlightMode.LOITER), (99, FlightMode.UNKNOWN)])
    def test_flight_mode_from_custom(self, custom, mode):
        assert flight_mode_from_custom(custom) is mode

    def test_base_mode_for(self):
        assert base_mode_for(FlightMode.AUTO, True) & 0x84 == 0x84
        assert not base_mode_for(FlightMode.AUTO, False) & MAV_MODE_FLAG.ARMED


class TestCatalogFile:
    def test_parse(self):
        catalog = MAV_Catalog.from_text("msg 5 PING  # test\nfield u32 count\nfield float64 value m\n")
        assert catalog["PING"].payload_len == 12
        assert catalog["PING"].fields[1].unit == "m"

    @pytest.mark.parametrize(
        "text, lineno",
        [
            ("msg 1 A\nfield u7 x\n", 2),
            ("field u8 x\n", 1),
            ("msg x A\n", 1),
            ("\n\nmsg 1 A\nbogus\n", 4),
        ],
    )
    def test_syntax_errors_carry_line(self, text, lineno):
        with pytest.raises(CatalogSyntaxError) as info:
            MAV_Catalog.from_text(text)
        assert info.value.lineno == lineno

    def test_duplicate_msgid(self):
        with pytest.raises(CatalogSyntaxError):
            MAV_Catalog.from_text("msg 1 A\nfield u8 x\nmsg 1 B\nfield u8 y\n")

    def test_load(self, tmp_path):
        path = tmp_path / "small.msgdef"
        path.write_text("msg 0 HEARTBEAT\nfield u8 type\n")
        assert MAV_Catalog.load(path).msgids == [0]
