"""CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no final xor)."""

import binascii

CRC16_INIT = 0xFFFF


def crc16_ccitt(data, init=CRC16_INIT):
    """Return the CRC-16/CCITT-FALSE of ``data``.

    ``binascii.crc_hqx`` implements the same MSB-first 0x1021 register;
    seeding it with 0xFFFF gives the CCITT-FALSE variant (check value
    0x29B1 for ``b"123456789"``).
    """
    return binascii.crc_hqx(data, init)
