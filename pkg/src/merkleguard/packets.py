"""In-simulator wire messages.

Control sizes follow the RFC 3561 fixed layouts; probe and attestation sizes
are chosen so that every leaf costs its 20 bytes on the air.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .merkle import DIGEST_SIZE

RREQ_BYTES = 24
RREP_BYTES = 20
RERR_BYTES = 12
HELLO_BYTES = 20
PROBE_BYTES = 16
ATTESTATION_HEADER_BYTES = 16
NODE_ID_BYTES = 4


@dataclass(frozen=True, slots=True)
class Rreq:
    origin: int
    rreq_id: int
    destination: int
    dest_seq: int
    hop_count: int
    origin_seq: int = 0
    # nodes the originator refuses to route through (its blacklist)
    avoid: frozenset[int] = frozenset()

    @property
    def size_bits(self) -> int:
        return 8 * (RREQ_BYTES + NODE_ID_BYTES * len(self.avoid))


@dataclass(frozen=True, slots=True)
class Rrep:
    destination: int
    dest_seq: int
    hop_count: int
    origin: int
    forged: bool = False  # bookkeeping only; honest nodes never read it

    @property
    def size_bits(self) -> int:
        return 8 * RREP_BYTES


@dataclass(frozen=True, slots=True)
class Rerr:
    unreachable_destination: int
    origin_of_report: int

    @property
    def size_bits(self) -> int:
        return 8 * RERR_BYTES


@dataclass(frozen=True, slots=True)
class Hello:
    origin: int
    seq: int

    @property
    def size_bits(self) -> int:
        return 8 * HELLO_BYTES


@dataclass(frozen=True, slots=True)
class Data:
    packet_id: int
    flow_id: int
    source: int
    destination: int
    size_bits: int
    created: float
    route_id: int = -1
    round: int = -1


@dataclass(frozen=True, slots=True)
class Probe:
    route_id: int
    round: int
    source: int
    destination: int

    @property
    def size_bits(self) -> int:
        return 8 * PROBE_BYTES


@dataclass(frozen=True, slots=True)
class Attestation:
    route_id: int
    round: int
    source: int
    destination: int
    leaves: tuple[bytes, ...] = field(default_factory=tuple)
    delivered_count: int = 0

    @property
    def size_bits(self) -> int:
        return 8 * (ATTESTATION_HEADER_BYTES + DIGEST_SIZE * len(self.leaves))

    def prepend(self, leaf: bytes) -> "Attestation":
        return Attestation(self.route_id, self.round, self.source, self.destination,
                           (leaf, *self.leaves), self.delivered_count)


Packet = Union[Rreq, Rrep, Rerr, Hello, Data, Probe, Attestation]
CONTROL_TYPES = (Rreq, Rrep, Rerr, Hello)
DEFENSE_TYPES = (Probe, Attestation)
