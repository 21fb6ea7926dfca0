"""X.25 (CRC-16/MCRF4XX) checksum used by the MAVLink frame trailer.

Reflected polynomial 0x1021 (0x8408 in reflected form), initial value 0xFFFF,
no final XOR. Two implementations are kept: `crc_x25_bitwise` is the
reference, `crc_x25` is the table driven version used on the hot path.
"""

CRC_INIT = 0xFFFF
CRC_POLY = 0x1021
CRC_POLY_REV = 0x8408


def crc_x25_bitwise(data, crc=CRC_INIT):
    """Bit by bit X.25 CRC of `data`, starting from accumulator `crc`"""
    for byte in data:
        crc ^= byte
        for _ in range(8):
            if crc & 0x0001:
                crc = (crc >> 1) ^ CRC_POLY_REV
            else:
                crc >>= 1
    return crc & 0xFFFF


def _make_table():
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            if crc & 0x0001:
                crc = (crc >> 1) ^ CRC_POLY_REV
            else:
                crc >>= 1
        table.append(crc)
    return tuple(table)


CRC_TABLE = _make_table()


def crc_accumulate(byte, crc):
    """Fold a single byte into the accumulator"""
    return (crc >> 8) ^ CRC_TABLE[(crc ^ byte) & 0xFF]


def crc_x25(data, crc=CRC_INIT):
    """Table driven X.25 CRC of `data`.

    Parameters
    ----------
    data : bytes-like
        Bytes to checksum.
    crc : int, optional
        Accumulator to continue from, by default the initial value 0xFFFF.

    Returns
    -------
    int
        16 bit checksum. An empty input returns `crc` untouched.
    """
    table = CRC_TABLE
    for byte in data:
        crc = (crc >> 8) ^ table[(crc ^ byte) & 0xFF]
    return crc
