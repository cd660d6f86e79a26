"""Forwarding verification: per-route roots, probe/attestation rounds, verdicts.

A trusted dealer hands the source the root folded over the leaves of every
route member.  Every ``probe_interval_packets`` data packets the source sends a
probe down the route; the destination answers with its leaf and the number of
round packets it received, and each relay prepends its own leaf on the way
back.  The source refolds ``[own leaf] + leaves`` and compares with the root.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

from .merkle import Digest, HashFn, RouteProof, fold_root, sha1, verify_route_proof
from .packets import Attestation, Probe


class RouteTooShort(ValueError):
    pass


@dataclass
class RoundState:
    round: int
    sent: int
    timer: object = None


@dataclass
class RouteSecurityContext:
    route_id: int
    route: tuple[int, ...]
    expected_root: Digest
    probe_interval_packets: int = 10
    timeout: float = 2.0
    round_counter: int = 0
    sent_this_round: int = 0
    outstanding: dict[int, RoundState] = field(default_factory=dict)

    @property
    def source(self) -> int:
        return self.route[0]

    @property
    def destination(self) -> int:
        return self.route[-1]

    @property
    def next_hop(self) -> int:
        return self.route[1]


class Outcome(enum.Enum):
    VERIFIED = "Verified"
    BLACK_HOLE_SUSPECTED = "BlackHoleSuspected"
    GRAY_HOLE_SUSPECTED = "GrayHoleSuspected"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    suspect: Optional[int] = None
    route: tuple[int, ...] = ()
    reason: str = ""

    @property
    def verified(self) -> bool:
        return self.outcome is Outcome.VERIFIED


@dataclass(frozen=True)
class Detection:
    time: float
    detector: int
    suspect: int
    outcome: Outcome
    reason: str
    route: tuple[int, ...]


class BlackList:
    """Grow-only set of excluded nodes, with the time each was added."""

    def __init__(self):
        self._added: dict[int, float] = {}

    def add(self, node: int, time: float) -> bool:
        if node in self._added:
            return False
        self._added[node] = time
        return True

    def __contains__(self, node: object) -> bool:
        return node in self._added

    def __iter__(self):
        return iter(sorted(self._added))

    def __len__(self) -> int:
        return len(self._added)

    def added_at(self, node: int) -> float:
        return self._added[node]

    @property
    def entries(self) -> frozenset[int]:
        return frozenset(self._added)


def initialize_route_security(route: Sequence[int], dealer_view: Mapping[int, Digest],
                              route_id: int = 0, probe_interval_packets: int = 10,
                              timeout: float = 2.0, h: HashFn = sha1) -> RouteSecurityContext:
    route = tuple(route)
    if len(route) < 2:
        raise RouteTooShort("route must have at least a source and a destination")
    if probe_interval_packets < 1:
        raise ValueError("probe interval must be at least one packet")
    if timeout <= 0:
        raise ValueError("probe timeout must be positive")
    root = fold_root([dealer_view[n] for n in route], h)
    return RouteSecurityContext(route_id, route, root, probe_interval_packets, timeout)


def maybe_initiate_probe(ctx: RouteSecurityContext, packets_sent_this_round: int) -> Optional[Probe]:
    if packets_sent_this_round < ctx.probe_interval_packets:
        return None
    return Probe(ctx.route_id, ctx.round_counter, ctx.source, ctx.destination)


def handle_probe_at_destination(own_leaf: Digest, probe: Probe, delivered_count: int) -> Attestation:
    return Attestation(probe.route_id, probe.round, probe.source, probe.destination,
                       (own_leaf,), delivered_count)


def relay_attestation(own_leaf: Digest, msg: Attestation, on_route: bool) -> Optional[Attestation]:
    if not on_route:
        return None
    return msg.prepend(own_leaf)


def check_round(ctx: RouteSecurityContext, own_leaf: Digest, received: Optional[Attestation],
                sent_count: int, gray_threshold: float = 0.2, h: HashFn = sha1) -> Verdict:
    if received is None:
        return Verdict(Outcome.BLACK_HOLE_SUSPECTED, ctx.next_hop, ctx.route, "timeout")
    if not verify_route_proof(own_leaf, RouteProof(tuple(received.leaves)), ctx.expected_root, h):
        return Verdict(Outcome.BLACK_HOLE_SUSPECTED, ctx.next_hop, ctx.route, "root mismatch")
    if sent_count > 0 and received.delivered_count / sent_count < 1.0 - gray_threshold:
        return Verdict(Outcome.GRAY_HOLE_SUSPECTED, ctx.next_hop, ctx.route,
                       f"delivered {received.delivered_count}/{sent_count}")
    return Verdict(Outcome.VERIFIED, None, ctx.route)


class Defender(Protocol):
    blacklist: BlackList

    def invalidate(self, destination: int) -> bool: ...

    def restart_route_discovery(self, destination: int): ...


def apply_verdict(node: Defender, verdict: Verdict, now: float) -> Optional[int]:
    """Blacklist the suspect, drop the route and rediscover.  No-op for Verified."""
    if verdict.verified or verdict.suspect is None:
        return None
    node.blacklist.add(verdict.suspect, now)
    destination = verdict.route[-1]
    node.invalidate(destination)
    node.restart_route_discovery(destination)
    return verdict.suspect
