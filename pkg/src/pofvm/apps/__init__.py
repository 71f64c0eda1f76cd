"""Bundled applications and the packets used to exercise them."""

from __future__ import annotations

import struct
from importlib import resources

from ..asm import assemble
from ..bits import internet_checksum
from ..isa import Program
from ..perf import CostReport

L3_APP = "l3_ipv4.pof"

# Shared per-packet receive/parse/transmit cost, charged in both modes.
# Equals the interpreter Table-2 row minus the app's worst-path interpreter
# cost (see perf.fit_framework); tests pin the equality.
L3_FRAMEWORK = CostReport(457, 93)


def app_source(name: str = L3_APP) -> str:
    return resources.files(__package__).joinpath(name).read_text()


def load_app(name: str = L3_APP) -> Program:
    return assemble(app_source(name), name)


def ipv4_frame(dip: str = "10.1.2.3", sip: str = "192.168.1.10", ttl: int = 64, proto: int = 17,
               payload: int = 30, ethertype: int = 0x0800, ihl: int = 5) -> bytes:
    """Ethernet + IPv4 frame with a valid header checksum."""
    def addr(text: str) -> bytes:
        return bytes(int(x) for x in text.split("."))

    opts = bytes(4 * (ihl - 5)) if ihl > 5 else b""
    hdr = bytearray(struct.pack(">BBHHHBBH4s4s", 0x40 | ihl, 0, 20 + len(opts) + payload, 0x1234, 0x4000,
                                ttl, proto, 0, addr(sip), addr(dip)) + opts)
    hdr[10:12] = struct.pack(">H", internet_checksum(hdr))
    eth = bytes.fromhex("0200000000aa" "0200000000bb") + struct.pack(">H", ethertype)
    return eth + bytes(hdr) + bytes(range(payload))


GOLDEN_PORT = 1
GOLDEN_PACKET = ipv4_frame()
