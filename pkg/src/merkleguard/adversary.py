"""Black hole and gray hole behaviours layered over an AODV node."""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .merkle import HashFn, leaf_value, sha1
from .packets import Attestation, Data, Probe, Rrep, Rreq

FORGED_SEQ_DEFAULT = 2 ** 31


class AttackKind(enum.Enum):
    NONE = "none"
    INTERNAL_BLACK_HOLE = "internal-black-hole"
    EXTERNAL_BLACK_HOLE = "external-black-hole"
    GRAY_HOLE = "gray-hole"


class DefenseHandling(enum.Enum):
    """What an attacker does with probe/attestation traffic it should relay."""

    DROP = "drop"
    RELAY = "relay"
    FORGE = "forge"


class Decision(enum.Enum):
    FORWARD = "forward"
    DROP = "drop"


class CollusionRefused(PermissionError):
    pass


@dataclass(frozen=True)
class AttackProfile:
    kind: AttackKind = AttackKind.NONE
    colluders: frozenset[int] = frozenset()
    gray_drop_fraction: float = 0.0
    defense_packets: DefenseHandling = DefenseHandling.DROP
    forged_seq: int = FORGED_SEQ_DEFAULT
    # minimum spacing between forged RREPs sent to one victim for one destination
    forge_holdoff: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.gray_drop_fraction <= 1.0:
            raise ValueError("gray_drop_fraction must lie in [0, 1]")
        if not 0 <= self.forged_seq < 2 ** 32:
            raise ValueError("forged_seq must fit in 32 bits")

    @property
    def drops_data(self) -> bool:
        return self.kind in (AttackKind.INTERNAL_BLACK_HOLE, AttackKind.EXTERNAL_BLACK_HOLE,
                             AttackKind.GRAY_HOLE)


class Adversary:
    """Attack state for one malicious node.

    ``distance`` gives the attacker's view of who is nearest among the route
    members it has overheard; forged replies go to that member.
    """

    def __init__(self, node_id: int, profile: AttackProfile, secret: bytes, rng: random.Random,
                 distance: Optional[Callable[[int, int], float]] = None, h: HashFn = sha1):
        if profile.colluders and node_id not in profile.colluders:
            raise ValueError(f"colluder set of node {node_id} must include itself")
        self.node_id = node_id
        self.profile = profile
        self.secret = secret
        self.rng = rng
        self.distance = distance
        self.h = h
        self.known_secrets: dict[int, bytes] = {node_id: secret}
        self._forged_for: set[tuple[int, int]] = set()
        self._route_members: dict[tuple[int, int], set[int]] = {}
        self._last_forge: dict[tuple[int, int], float] = {}
        self.forged_rreps = 0
        self.dropped: dict[str, int] = {}

    @property
    def kind(self) -> AttackKind:
        return self.profile.kind

    @property
    def promiscuous(self) -> bool:
        return self.kind is AttackKind.EXTERNAL_BLACK_HOLE

    def _forge(self, destination: int, origin: int) -> Rrep:
        self.forged_rreps += 1
        return Rrep(destination=destination, dest_seq=self.profile.forged_seq, hop_count=1,
                    origin=origin, forged=True)

    def observe_and_forge_rrep(self, observed: Rreq | Data, heard_from: int,
                               now: float = 0.0) -> Optional[Rrep]:
        """Forge a winning RREP for the destination named in an overheard message.

        The returned reply is meant for ``heard_from``.  Returns None when the
        attacker is not an external black hole or has nothing to gain.
        """
        if self.kind is not AttackKind.EXTERNAL_BLACK_HOLE:
            return None
        if isinstance(observed, Rreq):
            if self.node_id in (observed.origin, observed.destination):
                return None
            key = (observed.origin, observed.rreq_id)
            if key in self._forged_for:
                return None
            self._forged_for.add(key)
            return self._forge(observed.destination, observed.origin)

        if self.node_id in (observed.source, observed.destination):
            return None
        flow = (observed.source, observed.destination)
        members = self._route_members.setdefault(flow, set())
        members.add(heard_from)
        if self.distance is not None:
            target = min(members, key=lambda m: (self.distance(self.node_id, m), m))
            if target != heard_from:
                return None
        last = self._last_forge.get((heard_from, observed.destination))
        if last is not None and now - last < self.profile.forge_holdoff:
            return None
        self._last_forge[(heard_from, observed.destination)] = now
        return self._forge(observed.destination, observed.source)

    def adversarial_forward(self, packet) -> Decision:
        kind = self.kind
        if kind is AttackKind.NONE:
            return Decision.FORWARD
        if isinstance(packet, Data):
            if kind is AttackKind.GRAY_HOLE:
                drop = self.rng.random() < self.profile.gray_drop_fraction
            else:
                drop = True
            if drop:
                self.dropped["data"] = self.dropped.get("data", 0) + 1
                return Decision.DROP
            return Decision.FORWARD
        if isinstance(packet, (Probe, Attestation)):
            if kind is not AttackKind.GRAY_HOLE and self.profile.defense_packets is DefenseHandling.DROP:
                self.dropped["defense"] = self.dropped.get("defense", 0) + 1
                return Decision.DROP
        return Decision.FORWARD

    def collude_share_secret(self, peer: int) -> tuple[int, bytes]:
        """Disclose this node's secret to a fellow colluder."""
        if peer == self.node_id or peer not in self.profile.colluders:
            raise CollusionRefused(f"node {self.node_id} refuses to disclose its secret to {peer}")
        return self.node_id, self.secret

    def learn_secret(self, owner: int, secret: bytes) -> None:
        if owner not in self.profile.colluders:
            raise CollusionRefused(f"node {owner} is not a colluder of {self.node_id}")
        self.known_secrets[owner] = secret

    def producible_leaves(self) -> dict[int, bytes]:
        return {n: leaf_value(n, s, self.h) for n, s in self.known_secrets.items()}

    def forge_attestation(self, probe: Probe, claimed_count: int = 0) -> Attestation:
        """Answer a probe without forwarding it, claiming to sit next to the destination."""
        leaves = self.producible_leaves()
        own = leaves[self.node_id]
        dest = leaves.get(probe.destination)
        if dest is None:
            dest = self.h(self.rng.randbytes(24))
        return Attestation(probe.route_id, probe.round, probe.source, probe.destination,
                           (own, dest), delivered_count=claimed_count)
