"""AODV route discovery and maintenance for one node.

The router talks to the rest of the world only through a ``Link`` object
(send, broadcast, timers, clock), so it can be driven by the simulator or by a
test double.  Subclasses hook into route changes and pending traffic.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable, Container, Optional, Protocol

from .packets import Hello, Rerr, Rrep, Rreq

log = logging.getLogger(__name__)

SEQ_MOD = 2 ** 32


class SelfRouteError(ValueError):
    pass


class Link(Protocol):
    @property
    def now(self) -> float: ...

    def broadcast(self, sender: int, packet) -> int: ...

    def unicast(self, sender: int, receiver: int, packet) -> bool: ...

    def set_timer(self, delay: float, action: Callable[[], None], label: str = ""): ...


@dataclass
class AodvParams:
    hello_interval: float = 1.0
    allowed_hello_loss: int = 2
    route_expiry: float = 10.0
    # "larger than" for intermediate replies; RFC 3561 uses >=
    strict_freshness: bool = True
    rreq_wait: float = 1.0
    rreq_retries: int = 2


@dataclass
class RoutingTableEntry:
    destination: int
    next_hop: int
    seq_number: int
    hop_count: int
    valid: bool
    expiry: float

    def rank(self) -> tuple[int, int]:
        # higher is better: fresher sequence number, then fewer hops
        return (self.seq_number, -self.hop_count)


class RreqAction(enum.Enum):
    REBROADCAST = "rebroadcast"
    REPLY = "reply"
    DROP = "drop"


class AodvRouter:
    def __init__(self, node_id: int, link: Link, params: Optional[AodvParams] = None,
                 blacklist: Container[int] = frozenset()):
        self.node_id = node_id
        self.link = link
        self.params = params or AodvParams()
        self.blacklist = blacklist
        self.seq = 1
        self.rreq_id = 0
        self.table: dict[int, RoutingTableEntry] = {}
        self.seen_rreqs: set[tuple[int, int]] = set()
        self.rebroadcasts: dict[tuple[int, int], int] = {}
        self.last_heard: dict[int, float] = {}
        self.discovering: dict[int, tuple[int, int]] = {}
        self.counters = {
            "malformed_dropped": 0,
            "rrep_no_reverse": 0,
            "blacklisted_ignored": 0,
            "rreq_sent": 0,
            "rrep_sent": 0,
            "rerr_sent": 0,
            "hello_sent": 0,
        }

    # -- hooks ----------------------------------------------------------------

    def wants_route(self, destination: int) -> bool:
        """True when this node has traffic waiting for ``destination``."""
        return False

    def on_route_updated(self, destination: int, entry: RoutingTableEntry, msg: Rrep) -> None:
        pass

    def on_discovery_failed(self, destination: int) -> None:
        pass

    # -- table ------------------------------------------------------------------

    def next_hop(self, destination: int) -> Optional[int]:
        entry = self.table.get(destination)
        if entry is None or not entry.valid:
            return None
        if entry.expiry <= self.link.now:
            entry.valid = False
            return None
        if entry.next_hop in self.blacklist:
            return None
        return entry.next_hop

    def refresh(self, destination: int) -> None:
        entry = self.table.get(destination)
        if entry is not None and entry.valid and entry.expiry > self.link.now:
            entry.expiry = self.link.now + self.params.route_expiry

    def invalidate(self, destination: int) -> bool:
        entry = self.table.get(destination)
        if entry is None or not entry.valid:
            return False
        entry.valid = False
        return True

    def _usable(self, entry: Optional[RoutingTableEntry]) -> bool:
        return (entry is not None and entry.valid and entry.expiry > self.link.now
                and entry.next_hop not in self.blacklist)

    def _install(self, destination: int, next_hop: int, seq: int, hops: int) -> RoutingTableEntry:
        entry = RoutingTableEntry(destination, next_hop, seq, hops, True,
                                  self.link.now + self.params.route_expiry)
        self.table[destination] = entry
        return entry

    # -- discovery ----------------------------------------------------------------

    def originate_route_discovery(self, destination: int) -> Optional[Rreq]:
        """Broadcast an RREQ unless a route exists or a discovery is already running."""
        if destination == self.node_id:
            raise SelfRouteError("self-route")
        if self.next_hop(destination) is not None or destination in self.discovering:
            return None
        return self._send_rreq(destination, attempt=0)

    def restart_route_discovery(self, destination: int) -> Optional[Rreq]:
        self.discovering.pop(destination, None)
        return self.originate_route_discovery(destination)

    def _send_rreq(self, destination: int, attempt: int) -> Rreq:
        self.seq = (self.seq + 1) % SEQ_MOD
        self.rreq_id = (self.rreq_id + 1) % SEQ_MOD
        known = self.table.get(destination)
        msg = Rreq(origin=self.node_id, rreq_id=self.rreq_id, destination=destination,
                   dest_seq=known.seq_number if known else 0, hop_count=0,
                   origin_seq=self.seq, avoid=frozenset(self.blacklist))
        self.seen_rreqs.add((self.node_id, self.rreq_id))
        self.discovering[destination] = (self.rreq_id, attempt)
        self.counters["rreq_sent"] += 1
        self.link.broadcast(self.node_id, msg)
        rreq_id = self.rreq_id
        self.link.set_timer(self.params.rreq_wait,
                            lambda: self._discovery_timeout(destination, rreq_id),
                            f"rreq-wait {self.node_id}->{destination}")
        return msg

    def _discovery_timeout(self, destination: int, rreq_id: int) -> None:
        state = self.discovering.get(destination)
        if state is None or state[0] != rreq_id:
            return
        if self.next_hop(destination) is not None:
            del self.discovering[destination]
            return
        attempt = state[1]
        if attempt < self.params.rreq_retries and self.wants_route(destination):
            self._send_rreq(destination, attempt + 1)
        else:
            del self.discovering[destination]
            self.on_discovery_failed(destination)

    def _fresh_enough(self, held: int, requested: int) -> bool:
        if self.params.strict_freshness:
            return held > requested
        return held >= requested

    def handle_rreq(self, msg: Rreq, sender: int) -> RreqAction:
        if sender in self.blacklist or sender in msg.avoid:
            self.counters["blacklisted_ignored"] += 1
            return RreqAction.DROP
        key = (msg.origin, msg.rreq_id)
        if key in self.seen_rreqs:
            return RreqAction.DROP
        self.seen_rreqs.add(key)
        if msg.origin == self.node_id:
            return RreqAction.DROP

        hops = msg.hop_count + 1
        reverse = self.table.get(msg.origin)
        if (reverse is None or not reverse.valid or msg.origin_seq > reverse.seq_number
                or (msg.origin_seq == reverse.seq_number and hops < reverse.hop_count)):
            self._install(msg.origin, sender, msg.origin_seq, hops)
        else:
            self.refresh(msg.origin)

        if msg.destination == self.node_id:
            self.seq = (self.seq + 1) % SEQ_MOD
            reply = Rrep(destination=self.node_id, dest_seq=self.seq, hop_count=0, origin=msg.origin)
            self._send_rrep(sender, reply)
            return RreqAction.REPLY

        entry = self.table.get(msg.destination)
        if (self._usable(entry) and entry.next_hop not in msg.avoid
                and self._fresh_enough(entry.seq_number, msg.dest_seq)):
            reply = Rrep(destination=msg.destination, dest_seq=entry.seq_number,
                         hop_count=entry.hop_count, origin=msg.origin)
            self._send_rrep(sender, reply)
            return RreqAction.REPLY

        self.rebroadcasts[key] = self.rebroadcasts.get(key, 0) + 1
        self.link.broadcast(self.node_id, Rreq(
            origin=msg.origin, rreq_id=msg.rreq_id, destination=msg.destination,
            dest_seq=msg.dest_seq, hop_count=hops, origin_seq=msg.origin_seq, avoid=msg.avoid))
        return RreqAction.REBROADCAST

    def _send_rrep(self, to: int, msg: Rrep) -> None:
        self.counters["rrep_sent"] += 1
        self.link.unicast(self.node_id, to, msg)

    def handle_rrep(self, msg: Rrep, sender: int) -> bool:
        """Process an RREP; returns True if the forward route was adopted."""
        if sender in self.blacklist:
            self.counters["blacklisted_ignored"] += 1
            return False
        if msg.destination == self.node_id:
            self.counters["malformed_dropped"] += 1
            return False
        reverse_hop = None
        if msg.origin != self.node_id:
            reverse_hop = self.next_hop(msg.origin)
            if reverse_hop is None:
                self.counters["rrep_no_reverse"] += 1
                return False

        hops = msg.hop_count + 1
        current = self.table.get(msg.destination)
        adopted = False
        if (not self._usable(current) or msg.dest_seq > current.seq_number
                or (msg.dest_seq == current.seq_number and hops < current.hop_count)):
            entry = self._install(msg.destination, sender, msg.dest_seq, hops)
            adopted = True
            if self.discovering.get(msg.destination):
                del self.discovering[msg.destination]
            self.on_route_updated(msg.destination, entry, msg)

        if reverse_hop is not None:
            self.refresh(msg.origin)
            self._send_rrep(reverse_hop, Rrep(destination=msg.destination, dest_seq=msg.dest_seq,
                                              hop_count=hops, origin=msg.origin, forged=msg.forged))
        return adopted

    # -- maintenance -----------------------------------------------------------------

    def heard_from(self, neighbor: int) -> None:
        self.last_heard[neighbor] = self.link.now

    def hello_tick(self) -> list[int]:
        """Broadcast a Hello and return neighbors declared lost."""
        now = self.link.now
        self.counters["hello_sent"] += 1
        self.link.broadcast(self.node_id, Hello(self.node_id, self.seq))
        limit = self.params.allowed_hello_loss * self.params.hello_interval
        lost = sorted(n for n, t in self.last_heard.items() if now - t > limit)
        for n in lost:
            del self.last_heard[n]
            self.handle_link_break(n)
        return lost

    def handle_link_break(self, neighbor: int) -> list[int]:
        affected = sorted(d for d, e in self.table.items() if e.valid and e.next_hop == neighbor)
        for dest in affected:
            self.table[dest].valid = False
        for dest in affected:
            self.counters["rerr_sent"] += 1
            self.link.broadcast(self.node_id, Rerr(dest, self.node_id))
            if self.wants_route(dest):
                self.restart_route_discovery(dest)
        return affected

    def handle_rerr(self, msg: Rerr, sender: int) -> bool:
        dest = msg.unreachable_destination
        entry = self.table.get(dest)
        if entry is None or not entry.valid or entry.next_hop != sender:
            return False
        entry.valid = False
        if self.wants_route(dest):
            self.restart_route_discovery(dest)
        else:
            self.counters["rerr_sent"] += 1
            self.link.broadcast(self.node_id, msg)
        return True

    def handle_control(self, packet, sender: int) -> None:
        self.heard_from(sender)
        if isinstance(packet, Rreq):
            self.handle_rreq(packet, sender)
        elif isinstance(packet, Rrep):
            self.handle_rrep(packet, sender)
        elif isinstance(packet, Rerr):
            self.handle_rerr(packet, sender)
        elif isinstance(packet, Hello):
            pass
        else:
            self.counters["malformed_dropped"] += 1
