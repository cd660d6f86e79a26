"""Wires routers, attackers, the defense and the radio into one runnable scenario."""
from __future__ import annotations

import dataclasses
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .adversary import (Adversary, AttackKind, AttackProfile, Decision, DefenseHandling)
from .aodv import AodvParams, AodvRouter, RoutingTableEntry
from .engine import EventKind, LinkOverride, Radio, Simulator, Topology, TrafficSource
from .merkle import HASHES, SECRET_SIZE, leaf_value
from .metrics import MetricsSeries
from .packets import Attestation, Data, Probe, Rerr, Rrep, Rreq
from .scenario import DefenseConfig, ScenarioConfig, resolve_positions
from .verification import (BlackList, Detection, Outcome, RoundState, RouteSecurityContext, Verdict,
                           apply_verdict, check_round, handle_probe_at_destination,
                           initialize_route_security, maybe_initiate_probe, relay_attestation)

log = logging.getLogger(__name__)


class _NodeLink:
    """Adapter giving a router its clock, radio and timers."""

    def __init__(self, sim: Simulator, radio: Radio):
        self.sim = sim
        self.radio = radio

    @property
    def now(self) -> float:
        return self.sim.now

    def broadcast(self, sender: int, packet) -> int:
        return self.radio.broadcast(sender, packet)

    def unicast(self, sender: int, receiver: int, packet) -> bool:
        return self.radio.unicast(sender, receiver, packet)

    def set_timer(self, delay: float, action, label: str = ""):
        return self.sim.after(delay, EventKind.TIMER_EXPIRY, action, label)


class SimNode(AodvRouter):
    def __init__(self, node_id: int, world: "Simulation", params: AodvParams, secret: bytes,
                 adversary: Optional[Adversary] = None):
        super().__init__(node_id, world.link, params, blacklist=BlackList())
        self.world = world
        self.secret = secret
        self.leaf = leaf_value(node_id, secret, world.h)
        self.adversary = adversary
        self.promiscuous = adversary is not None and adversary.promiscuous
        self.flow_destinations: set[int] = set()
        self.pending: dict[int, list[Data]] = defaultdict(list)
        self.contexts: dict[int, RouteSecurityContext] = {}
        self.contexts_by_id: dict[int, RouteSecurityContext] = {}
        self.route_ids = 0
        self.probe_members: dict[tuple[int, int], tuple[int, int]] = {}
        self.round_receipts: Counter = Counter()
        self.defense_counters = Counter()

    # -- AODV hooks ---------------------------------------------------------------

    def wants_route(self, destination: int) -> bool:
        return destination in self.flow_destinations or bool(self.pending.get(destination))

    def on_route_updated(self, destination: int, entry: RoutingTableEntry, msg: Rrep) -> None:
        if destination in self.flow_destinations and msg.forged:
            self.world.note_insertion(self.node_id, destination, entry.next_hop)
        queued = self.pending.pop(destination, None)
        if queued:
            # _send_data re-queues if the route vanished meanwhile
            for p in queued:
                self._send_data(p)

    def on_discovery_failed(self, destination: int) -> None:
        for p in self.pending.pop(destination, []):
            self.world.data_lost(p, "no-route")

    # -- radio entry points ------------------------------------------------------------

    def receive(self, packet, sender: int) -> None:
        self.heard_from(sender)
        if isinstance(packet, Data):
            self._on_data(packet, sender)
        elif isinstance(packet, Probe):
            self._on_probe(packet, sender)
        elif isinstance(packet, Attestation):
            self._on_attestation(packet, sender)
        else:
            if self.adversary is not None and isinstance(packet, Rreq):
                forged = self.adversary.observe_and_forge_rrep(packet, sender, self.link.now)
                if forged is not None:
                    self._send_rrep(sender, forged)
            self.handle_control(packet, sender)

    def overhear(self, packet, sender: int, receiver: int) -> None:
        if self.adversary is None or not isinstance(packet, Data):
            return
        forged = self.adversary.observe_and_forge_rrep(packet, sender, self.link.now)
        if forged is not None:
            self._send_rrep(sender, forged)

    # -- data path ----------------------------------------------------------------

    def originate_data(self, packet: Data) -> None:
        self.world.data_sent(packet)
        if self.next_hop(packet.destination) is not None:
            self._send_data(packet)
        else:
            self.pending[packet.destination].append(packet)
            self.originate_route_discovery(packet.destination)

    def _send_data(self, packet: Data) -> None:
        dest = packet.destination
        nh = self.next_hop(dest)
        if nh is None:
            self.pending[dest].append(packet)
            self.originate_route_discovery(dest)
            return
        self.refresh(dest)
        ctx = self._security_context(dest) if self.world.defense.enabled else None
        if ctx is not None:
            packet = dataclasses.replace(packet, route_id=ctx.route_id, round=ctx.round_counter)
            ctx.sent_this_round += 1
        if not self.link.unicast(self.node_id, nh, packet):
            self.world.data_lost(packet, "radio")
        if ctx is not None:
            probe = maybe_initiate_probe(ctx, ctx.sent_this_round)
            if probe is not None:
                self._launch_probe(ctx, probe, nh)

    def _on_data(self, packet: Data, sender: int) -> None:
        if packet.destination == self.node_id:
            self.refresh(packet.source)
            self.round_receipts[(packet.source, packet.route_id, packet.round)] += 1
            self.world.data_delivered(packet)
            return
        if self.adversary is not None and self.adversary.adversarial_forward(packet) is Decision.DROP:
            self.round_receipts[(packet.source, packet.route_id, packet.round)] += 1
            self.world.data_dropped(packet, self.node_id)
            return
        nh = self.next_hop(packet.destination)
        if nh is None:
            self.world.data_lost(packet, "no-route")
            self.counters["rerr_sent"] += 1
            self.link.broadcast(self.node_id, Rerr(packet.destination, self.node_id))
            return
        self.refresh(packet.destination)
        self.refresh(packet.source)
        if not self.link.unicast(self.node_id, nh, packet):
            self.world.data_lost(packet, "radio")

    # -- verification: source side --------------------------------------------------------

    def _security_context(self, dest: int) -> RouteSecurityContext:
        route = self.world.dealer_route(self.node_id, dest)
        ctx = self.contexts.get(dest)
        if ctx is None or ctx.route != route:
            self.route_ids += 1
            d = self.world.defense
            ctx = initialize_route_security(route, self.world.dealer_leaves, self.route_ids,
                                            d.probe_interval, d.timeout, self.world.h)
            self.contexts[dest] = ctx
            self.contexts_by_id[ctx.route_id] = ctx
            self.world.note_route_security(self.node_id, ctx)
        return ctx

    def _launch_probe(self, ctx: RouteSecurityContext, probe: Probe, nh: int) -> None:
        dest, route_id, rnd = ctx.destination, ctx.route_id, probe.round
        state = RoundState(rnd, ctx.sent_this_round)
        state.timer = self.link.set_timer(ctx.timeout, lambda: self._round_timeout(route_id, rnd),
                                          f"probe-timeout {self.node_id}->{dest} r{rnd}")
        ctx.outstanding[rnd] = state
        ctx.round_counter += 1
        ctx.sent_this_round = 0
        self.defense_counters["probes_sent"] += 1
        self.link.unicast(self.node_id, nh, probe)

    def _round_timeout(self, route_id: int, rnd: int) -> None:
        # rounds of a superseded context are still judged against their own root
        ctx = self.contexts_by_id[route_id]
        state = ctx.outstanding.pop(rnd, None)
        if state is None:
            return
        verdict = check_round(ctx, self.leaf, None, state.sent, self.world.defense.gray_threshold,
                              self.world.h)
        self._conclude(ctx, verdict)

    def _attestation_at_source(self, att: Attestation) -> None:
        ctx = self.contexts_by_id.get(att.route_id)
        if ctx is None or ctx.destination != att.destination:
            self.defense_counters["stale_attestations"] += 1
            return
        state = ctx.outstanding.pop(att.round, None)
        if state is None:
            self.defense_counters["stale_attestations"] += 1
            return
        self.world.sim.cancel(state.timer)
        verdict = check_round(ctx, self.leaf, att, state.sent, self.world.defense.gray_threshold,
                              self.world.h)
        self._conclude(ctx, verdict)

    def _conclude(self, ctx: RouteSecurityContext, verdict: Verdict) -> None:
        self.world.record_verdict(self.node_id, verdict)
        if verdict.verified or verdict.suspect in self.blacklist:
            return
        if self.contexts.get(ctx.destination) is ctx:
            del self.contexts[ctx.destination]
        suspect = apply_verdict(self, verdict, self.link.now)
        if suspect is not None:
            self.world.record_detection(Detection(self.link.now, self.node_id, suspect,
                                                  verdict.outcome, verdict.reason, verdict.route))

    # -- verification: relays and destination ------------------------------------------------

    def _on_probe(self, probe: Probe, sender: int) -> None:
        if probe.destination == self.node_id:
            count = self.round_receipts.pop((probe.source, probe.route_id, probe.round), 0)
            att = handle_probe_at_destination(self.leaf, probe, count)
            self.defense_counters["attestations_sent"] += 1
            self.link.unicast(self.node_id, sender, att)
            return
        adv = self.adversary
        if adv is not None and adv.profile.drops_data:
            if adv.profile.defense_packets is DefenseHandling.FORGE and adv.kind is not AttackKind.GRAY_HOLE:
                claimed = self.round_receipts.pop((probe.source, probe.route_id, probe.round), 0)
                self.defense_counters["attestations_forged"] += 1
                self.link.unicast(self.node_id, sender, adv.forge_attestation(probe, claimed))
                return
            if adv.adversarial_forward(probe) is Decision.DROP:
                return
        nh = self.next_hop(probe.destination)
        if nh is None:
            self.defense_counters["probes_unroutable"] += 1
            return
        self.probe_members[(probe.source, probe.route_id)] = (sender, probe.source)
        self.link.unicast(self.node_id, nh, probe)

    def _on_attestation(self, att: Attestation, sender: int) -> None:
        if att.source == self.node_id:
            self._attestation_at_source(att)
            return
        if self.adversary is not None and self.adversary.adversarial_forward(att) is Decision.DROP:
            return
        member = self.probe_members.get((att.source, att.route_id))
        out = relay_attestation(self.leaf, att, on_route=member is not None and member[1] == att.source)
        if out is None:
            self.defense_counters["attestations_off_route"] += 1
            return
        self.link.unicast(self.node_id, member[0], out)


@dataclass
class PacketRecord:
    packet_id: int
    flow_id: int
    created: float
    fate: str = "pending"
    done: Optional[float] = None
    where: Optional[int] = None


@dataclass
class RunResult:
    config: ScenarioConfig
    seed: int
    metrics: MetricsSeries
    packets: dict[int, PacketRecord]
    detections: list[Detection]
    blacklists: dict[int, dict[int, float]]
    insertions: list[tuple[float, int, int, int]]
    verdicts: Counter
    counters: dict[str, int]
    attackers: frozenset[int]
    final_routes: dict[tuple[int, int], tuple[int, ...]]
    trace: list = field(default_factory=list)
    # (time, source, verdict) for every concluded round, in order
    verdict_log: list[tuple[float, int, Verdict]] = field(default_factory=list)

    @property
    def sent(self) -> int:
        return len(self.packets)

    @property
    def delivered(self) -> int:
        return sum(1 for p in self.packets.values() if p.fate == "delivered")

    def delivery_ratio(self, start: float = 0.0, end: Optional[float] = None) -> float:
        window = [p for p in self.packets.values()
                  if p.created >= start and (end is None or p.created < end)]
        if not window:
            return float("nan")
        return sum(p.fate == "delivered" for p in window) / len(window)

    def first_insertion(self) -> Optional[float]:
        return self.insertions[0][0] if self.insertions else None

    def detection_time(self, suspect: int) -> Optional[float]:
        times = [d.time for d in self.detections if d.suspect == suspect]
        return min(times) if times else None


class Simulation:
    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None, trace: bool = False):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.h = HASHES[config.hash]
        self.defense: DefenseConfig = config.defense
        self.sim = Simulator(trace=trace)
        positions = resolve_positions(config, self.seed)
        overrides = [LinkOverride(e.a, e.b, e.state == "up", e.time) for e in config.link_events]
        self.topology = Topology(positions, config.radio.radius, overrides,
                                 (config.arena_size, config.arena_size))
        self.metrics = MetricsSeries(config.duration, config.bin_width)
        self.radio = Radio(self.sim, self.topology, config.radio.link_rate,
                           config.radio.processing_delay, on_transmit=self._on_transmit)
        self.link = _NodeLink(self.sim, self.radio)

        secrets_rng = self._rng("secrets")
        secrets = {i: secrets_rng.randbytes(SECRET_SIZE) for i in range(config.nodes)}
        self.dealer_leaves = {i: leaf_value(i, s, self.h) for i, s in secrets.items()}

        profiles = {a.node: a for a in config.attackers}
        params = AodvParams(**config.aodv.model_dump())
        self.nodes: dict[int, SimNode] = {}
        for i in range(config.nodes):
            adversary = None
            a = profiles.get(i)
            if a is not None and a.kind != "none":
                colluders = frozenset(a.colluders) | ({i} if a.colluders else set())
                profile = AttackProfile(AttackKind(a.kind), colluders, a.gray_drop_fraction,
                                        DefenseHandling(a.defense_packets), a.forged_seq,
                                        a.forge_holdoff)
                adversary = Adversary(i, profile, secrets[i], self._rng(f"adversary:{i}"),
                                      self.topology.distance, self.h)
            node = SimNode(i, self, params, secrets[i], adversary)
            self.nodes[i] = node
            self.radio.attach(node)
        self.attackers = frozenset(n for n, node in self.nodes.items() if node.adversary is not None)
        for n in sorted(self.attackers):
            adv = self.nodes[n].adversary
            for peer in sorted(adv.profile.colluders - {n}):
                owner, secret = adv.collude_share_secret(peer)
                self.nodes[peer].adversary.learn_secret(owner, secret)

        self.packets: dict[int, PacketRecord] = {}
        self.detections: list[Detection] = []
        self.insertions: list[tuple[float, int, int, int]] = []
        self.verdicts: Counter = Counter()
        self.verdict_log: list[tuple[float, int, Verdict]] = []
        self.security_log: list[tuple[float, int, RouteSecurityContext]] = []
        self._packet_ids = 0
        self._schedule_traffic()
        self._schedule_hellos()
        for e in config.link_events:
            self.sim.at(e.time, EventKind.LINK_TOGGLE, lambda: None, f"link {e.a}-{e.b} {e.state}")

    def _rng(self, stream: str) -> random.Random:
        return random.Random(f"{self.seed}:{stream}")

    # -- scheduling ------------------------------------------------------------------

    def _schedule_traffic(self) -> None:
        for flow_id, f in enumerate(self.config.flows):
            src = TrafficSource(f.source, f.destination, self._rng(f"traffic:{flow_id}"),
                                f.mean_interarrival, f.mean_size_bits)
            self.nodes[f.source].flow_destinations.add(f.destination)
            self._next_arrival(flow_id, src, f.start)

    def _next_arrival(self, flow_id: int, src: TrafficSource, base: float) -> None:
        t = base + src.next_interarrival()
        if t > self.config.duration:
            return
        size = src.next_size_bits()
        self.sim.at(t, EventKind.TRAFFIC_ARRIVAL, lambda: self._arrival(flow_id, src, size),
                    f"traffic {flow_id}")

    def _arrival(self, flow_id: int, src: TrafficSource, size: int) -> None:
        self._packet_ids += 1
        packet = Data(self._packet_ids, flow_id, src.source, src.destination, size, self.sim.now)
        self.nodes[src.source].originate_data(packet)
        self._next_arrival(flow_id, src, self.sim.now)

    def _schedule_hellos(self) -> None:
        rng = self._rng("hello")
        interval = self.config.aodv.hello_interval
        for i in sorted(self.nodes):
            self._hello(i, rng.uniform(0, interval), interval)

    def _hello(self, node: int, t: float, interval: float) -> None:
        if t > self.config.duration:
            return

        def tick():
            self.nodes[node].hello_tick()
            self._hello(node, self.sim.now + interval, interval)

        self.sim.at(t, EventKind.HELLO_TICK, tick, f"hello {node}")

    # -- dealer oracle ------------------------------------------------------------------

    def dealer_route(self, source: int, destination: int) -> tuple[int, ...]:
        """The route as the routing tables claim it, walked from the source.

        A hop that has no onward route (a forging attacker) is taken at its word
        and joined straight to the destination.
        """
        path = [source]
        cur = source
        while cur != destination:
            nh = self.nodes[cur].next_hop(destination)
            if nh is None or nh in path:
                break
            path.append(nh)
            cur = nh
        if path[-1] != destination:
            path.append(destination)
        return tuple(path)

    # -- accounting ----------------------------------------------------------------------

    def _on_transmit(self, sender: int, packet, start: float) -> None:
        self.metrics.record_load(packet.size_bits, start)

    def data_sent(self, p: Data) -> None:
        self.packets[p.packet_id] = PacketRecord(p.packet_id, p.flow_id, p.created)
        self.metrics.record_sent(self.sim.now)

    def _finish(self, p: Data, fate: str, where: Optional[int] = None) -> None:
        rec = self.packets[p.packet_id]
        if rec.fate != "pending":
            raise RuntimeError(f"packet {p.packet_id} finished twice ({rec.fate}, {fate})")
        rec.fate, rec.done, rec.where = fate, self.sim.now, where

    def data_delivered(self, p: Data) -> None:
        self._finish(p, "delivered")
        self.metrics.record_received(self.sim.now)
        self.metrics.record_delay(p.created, self.sim.now)

    def data_dropped(self, p: Data, by: int) -> None:
        self._finish(p, "dropped", by)

    def data_lost(self, p: Data, reason: str) -> None:
        self._finish(p, f"lost:{reason}")

    def note_insertion(self, source: int, destination: int, next_hop: int) -> None:
        self.insertions.append((self.sim.now, source, destination, next_hop))

    def note_route_security(self, source: int, ctx: RouteSecurityContext) -> None:
        self.security_log.append((self.sim.now, source, ctx))

    def record_verdict(self, source: int, verdict: Verdict) -> None:
        self.verdicts[verdict.outcome.value] += 1
        self.verdict_log.append((self.sim.now, source, verdict))

    def record_detection(self, detection: Detection) -> None:
        log.info("t=%.3f node %d blacklists %d (%s, %s)", detection.time, detection.detector,
                 detection.suspect, detection.outcome.value, detection.reason)
        self.detections.append(detection)

    def in_flight(self) -> int:
        """Data packets still buffered at a source or travelling on a link."""
        queued = sum(len(q) for node in self.nodes.values() for q in node.pending.values())
        travelling = sum(1 for e in self.sim.pending()
                         if e.kind is EventKind.PACKET_DELIVERY and isinstance(e.payload, Data))
        return queued + travelling

    # -- run --------------------------------------------------------------------------------

    def run(self) -> RunResult:
        self.sim.run_until(self.config.duration)
        counters: Counter = Counter()
        for node in self.nodes.values():
            counters.update(node.counters)
            counters.update(node.defense_counters)
        fates = Counter(p.fate.split(":")[0] for p in self.packets.values())
        counters.update({
            "data_sent": len(self.packets),
            "data_delivered": fates["delivered"],
            "data_dropped": fates["dropped"],
            "data_lost": fates["lost"],
            "data_in_flight": self.in_flight(),
            "radio_lost": self.radio.lost,
            "transmissions": self.radio.transmissions,
            "forged_rreps": sum(n.adversary.forged_rreps for n in self.nodes.values() if n.adversary),
        })
        blacklists = {n: {s: node.blacklist.added_at(s) for s in node.blacklist}
                      for n, node in self.nodes.items() if len(node.blacklist)}
        final_routes = {(f.source, f.destination): self.dealer_route(f.source, f.destination)
                        for f in self.config.flows
                        if self.nodes[f.source].next_hop(f.destination) is not None}
        return RunResult(self.config, self.seed, self.metrics, self.packets, self.detections,
                         blacklists, self.insertions, self.verdicts, dict(counters), self.attackers,
                         final_routes, list(self.sim.trace), list(self.verdict_log))


def run_scenario(config: ScenarioConfig, seed: Optional[int] = None, trace: bool = False) -> RunResult:
    return Simulation(config, seed, trace).run()
