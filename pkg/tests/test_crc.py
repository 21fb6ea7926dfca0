import numpy as np

from mavkit.mav_crc import CRC_INIT, crc_accumulate, crc_x25, crc_x25_bitwise


class TestCheckValue:
    """Known answers of CRC-16/MCRF4XX"""

    def test_check_string(self):
        assert crc_x25(b"123456789") == 0x6F91
        assert crc_x25_bitwise(b"123456789") == 0x6F91

    def test_empty_input_is_initial_value(self):
        assert crc_x25(b"") == CRC_INIT == 0xFFFF

    def test_accumulate_matches_whole_buffer(self):
        crc = CRC_INIT
        for byte in b"123456789":
            crc = crc_accumulate(byte, crc)
        assert crc == 0x6F91

    def test_continuation(self):
        assert crc_x25(b"6789", crc_x25(b"12345")) == crc_x25(b"123456789")


class TestTableMatchesBitwise:
    def test_random_buffers(self):
        rng = np.random.default_rng(25)
        for _ in range(10000):
            data = rng.bytes(int(rng.integers(0, 301)))
            assert crc_x25(data) == crc_x25_bitwise(data)

    def test_result_is_16_bit(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            assert 0 <= crc_x25(rng.bytes(300)) <= 0xFFFF
