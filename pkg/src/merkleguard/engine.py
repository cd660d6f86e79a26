"""Deterministic discrete-event core: clock, event queue, unit-disk radio, traffic."""
from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Protocol

from .packets import Data


class SchedulingError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class EventKind(Enum):
    PACKET_DELIVERY = "PacketDelivery"
    TIMER_EXPIRY = "TimerExpiry"
    TRAFFIC_ARRIVAL = "TrafficArrival"
    LINK_TOGGLE = "LinkToggle"
    HELLO_TICK = "HelloTick"


@dataclass(eq=False)
class Event:
    time: float
    kind: EventKind
    action: Callable[[], None]
    label: str = ""
    payload: object = None
    seq: int = -1
    cancelled: bool = False

    def __lt__(self, other: "Event") -> bool:
        return (self.time, self.seq) < (other.time, other.seq)


class Simulator:
    """Single-threaded event loop.

    Events run in (time, scheduling order) order, so equal-time events keep the
    order in which they were scheduled.
    """

    def __init__(self, trace: bool = False):
        self.now = 0.0
        self._queue: list[Event] = []
        self._seq = 0
        self.trace_enabled = trace
        self.trace: list[tuple[float, int, str, str]] = []
        self.executed = 0

    def schedule(self, event: Event) -> Event:
        if event.time < self.now:
            raise SchedulingError(
                f"event {event.kind.value} at t={event.time!r} is before now={self.now!r}")
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def at(self, time: float, kind: EventKind, action: Callable[[], None], label: str = "",
           payload: object = None) -> Event:
        return self.schedule(Event(time, kind, action, label, payload))

    def after(self, delay: float, kind: EventKind, action: Callable[[], None], label: str = "") -> Event:
        return self.schedule(Event(self.now + delay, kind, action, label))

    @staticmethod
    def cancel(event: Optional[Event]) -> None:
        if event is not None:
            event.cancelled = True

    def pending(self) -> Iterable[Event]:
        return (e for e in self._queue if not e.cancelled)

    def run_until(self, t_end: float) -> list[tuple[float, int, str, str]]:
        """Execute every event with time <= t_end and leave the clock at t_end."""
        if t_end < 0:
            raise SchedulingError("t_end must be non-negative")
        start = len(self.trace)
        queue = self._queue
        while queue and queue[0].time <= t_end:
            event = heapq.heappop(queue)
            if event.cancelled:
                continue
            self.now = event.time
            if self.trace_enabled:
                self.trace.append((event.time, event.seq, event.kind.value, event.label))
            self.executed += 1
            event.action()
        self.now = max(self.now, t_end)
        return self.trace[start:]


@dataclass(frozen=True)
class LinkOverride:
    a: int
    b: int
    up: bool
    time: float


class Topology:
    """Static unit-disk graph plus time-stamped link up/down overrides."""

    def __init__(self, positions: dict[int, tuple[float, float]], radio_radius: float = 250.0,
                 overrides: Iterable[LinkOverride] = (), arena: tuple[float, float] = (1000.0, 1000.0)):
        self.positions = dict(positions)
        self.radio_radius = radio_radius
        self.arena = arena
        self.overrides = sorted(overrides, key=lambda o: o.time)
        ids = sorted(self.positions)
        self._base: dict[int, frozenset[int]] = {
            n: frozenset(m for m in ids if m != n and self.distance(n, m) <= radio_radius)
            for n in ids
        }

    def distance(self, a: int, b: int) -> float:
        (xa, ya), (xb, yb) = self.positions[a], self.positions[b]
        return math.hypot(xa - xb, ya - yb)

    def _override_state(self, a: int, b: int, time: float) -> Optional[bool]:
        state = None
        for o in self.overrides:
            if o.time > time:
                break
            if {o.a, o.b} == {a, b}:
                state = o.up
        return state

    def linked(self, a: int, b: int, time: float) -> bool:
        if a == b:
            return False
        state = self._override_state(a, b, time)
        if state is not None:
            return state
        return b in self._base[a]

    def neighbors(self, node: int, time: float) -> frozenset[int]:
        if not self.overrides:
            return self._base[node]
        return frozenset(m for m in self.positions if self.linked(node, m, time))

    def is_connected(self, time: float = 0.0) -> bool:
        ids = list(self.positions)
        if not ids:
            return True
        seen = {ids[0]}
        stack = [ids[0]]
        while stack:
            n = stack.pop()
            for m in self.neighbors(n, time):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return len(seen) == len(ids)


class Receiver(Protocol):
    node_id: int
    promiscuous: bool

    def receive(self, packet, sender: int) -> None: ...

    def overhear(self, packet, sender: int, receiver: int) -> None: ...


class Radio:
    """Shared medium.  Each sender serializes its own transmissions (FIFO);
    there is no contention between senders and no corruption."""

    def __init__(self, sim: Simulator, topology: Topology, link_rate: float = 1e6,
                 processing_delay: float = 0.001,
                 on_transmit: Optional[Callable[[int, object, float], None]] = None):
        if link_rate <= 0:
            raise ConfigError("link_rate must be positive")
        if processing_delay < 0:
            raise ConfigError("processing_delay must be non-negative")
        self.sim = sim
        self.topology = topology
        self.link_rate = link_rate
        self.processing_delay = processing_delay
        self.on_transmit = on_transmit
        self.nodes: dict[int, Receiver] = {}
        self._busy_until: dict[int, float] = {}
        self.lost = 0
        self.lost_data = 0
        self.transmissions = 0

    def attach(self, node: Receiver) -> None:
        self.nodes[node.node_id] = node

    def _air(self, sender: int, packet) -> float:
        start = max(self.sim.now, self._busy_until.get(sender, 0.0))
        end = start + packet.size_bits / self.link_rate
        self._busy_until[sender] = end
        self.transmissions += 1
        if self.on_transmit is not None:
            self.on_transmit(sender, packet, start)
        return end + self.processing_delay

    def broadcast(self, sender: int, packet) -> int:
        neighbors = sorted(self.topology.neighbors(sender, self.sim.now))
        arrival = self._air(sender, packet)
        for n in neighbors:
            self._deliver(arrival, self.nodes[n], packet, sender)
        return len(neighbors)

    def unicast(self, sender: int, receiver: int, packet) -> bool:
        neighbors = self.topology.neighbors(sender, self.sim.now)
        arrival = self._air(sender, packet)
        if receiver not in neighbors:
            self.lost += 1
            if isinstance(packet, Data):
                self.lost_data += 1
            return False
        self._deliver(arrival, self.nodes[receiver], packet, sender)
        for n in sorted(neighbors):
            if n != receiver and self.nodes[n].promiscuous:
                node = self.nodes[n]
                self.sim.at(arrival, EventKind.PACKET_DELIVERY,
                            lambda node=node: node.overhear(packet, sender, receiver),
                            f"overhear {sender}->{receiver}@{n}")
        return True

    def _deliver(self, time: float, node: Receiver, packet, sender: int) -> None:
        self.sim.at(time, EventKind.PACKET_DELIVERY, lambda: node.receive(packet, sender),
                    f"{type(packet).__name__} {sender}->{node.node_id}", payload=packet)


@dataclass
class TrafficSource:
    source: int
    destination: int
    rng: random.Random = field(repr=False)
    mean_interarrival: float = 1.0
    mean_size_bits: float = 1024.0

    def __post_init__(self):
        if not self.mean_interarrival > 0:
            raise ConfigError("mean inter-arrival must be positive")
        if not self.mean_size_bits > 0:
            raise ConfigError("mean packet size must be positive")
        if self.source == self.destination:
            raise ConfigError("flow source and destination must differ")

    def next_interarrival(self) -> float:
        return self.rng.expovariate(1.0 / self.mean_interarrival)

    def next_size_bits(self) -> int:
        return max(1, math.ceil(self.rng.expovariate(1.0 / self.mean_size_bits)))
