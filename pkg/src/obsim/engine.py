"""Discrete-event OBS simulation kernel.

One run is single-threaded over a total event order ``(time, sequence)``.
Data bursts never become events of their own until delivery: a BHP reserves
the burst's future crossing interval on each output link as it is processed.
"""

from __future__ import annotations

import heapq
import logging

import numpy as np

from . import kernels
from .config import SimConfig
from .decision import (
    Action,
    RETRANSMIT,
    DROP,
    build_route_sets,
    decision_threshold,
    rebuild_routing_table,
    resolve_contention,
)
from .metrics import SimMetrics
from .protocol import (
    Ack,
    Bhp,
    Nack,
    NackReason,
    offset_sufficient,
    offset_time,
    predict_hops,
    schedule_retransmission,
)
from .statistics import KnowledgeBase, make_meters, network_aggregates
from .topology import load_topology

log = logging.getLogger(__name__)

# event kinds
BURST_ARRIVAL, BHP_AT_NODE, BURST_AT_NODE, ACK_AT_NODE, NACK_AT_NODE, RETRANSMIT_TIMER, \
    PERIODIC_UPDATE, END_OF_RUN = range(8)

PENDING, DELIVERED, LOST = 0, 1, 2

_CHUNK = 4096


# ---------------------------------------------------------------------------
# traffic
# ---------------------------------------------------------------------------

def active_generators(config, topo, rng):
    nodes = list(range(topo.node_count))
    if config.generators == "all":
        return nodes
    k = max(1, int(round(config.generator_fraction * topo.node_count)))
    return sorted(int(n) for n in rng.choice(topo.node_count, size=k, replace=False))


def generator_rate(config, topo, n_generators):
    """Bursts per second offered by each generator."""
    total_bits = config.load * topo.capacity()
    return total_bits / (config.effective_burst_size * 8.0) / n_generators


def generate_traffic(config, topo, rng, generators=None):
    """Yield ``(time, src, dst, size_bytes)`` in time order, forever.

    Each generator is an independent Poisson source of equal rate; the merged
    stream is drawn at the summed rate with sources marked uniformly.
    Destinations are uniform over the other nodes.
    """
    if config.load <= 0:
        return
    if generators is None:
        generators = active_generators(config, topo, rng)
    gens = np.asarray(generators, dtype=np.int64)
    total_rate = generator_rate(config, topo, len(gens)) * len(gens)
    mean = config.effective_burst_size
    n = topo.node_count
    t = 0.0
    while True:
        gaps = rng.exponential(1.0 / total_rate, _CHUNK)
        times = t + np.cumsum(gaps)
        srcs = gens[rng.integers(len(gens), size=_CHUNK)]
        dsts = rng.integers(n - 1, size=_CHUNK)
        dsts += dsts >= srcs
        if config.burst_size_dist == "constant":
            sizes = np.full(_CHUNK, mean)
        else:
            # a zero-length burst cannot be scheduled; one byte is the floor
            sizes = np.maximum(rng.exponential(mean, _CHUNK), 1.0)
        t = float(times[-1])
        yield from zip(times.tolist(), srcs.tolist(), dsts.tolist(), sizes.tolist())


# ---------------------------------------------------------------------------
# channel reservation
# ---------------------------------------------------------------------------

class ChannelSchedule:
    """Reservation intervals per directed link and data channel."""

    def __init__(self, topo, capacity=8, horizon=False, audit=False):
        self.horizon = horizon
        self.tables = []
        for u, v in topo.directed_links():
            c = topo.link(u, v).data_channels
            self.tables.append([np.zeros((c, capacity)), np.zeros((c, capacity)),
                                np.zeros(c, dtype=np.int64)])
        self.audit = [] if audit else None

    def try_reserve(self, link, start, duration, now=-np.inf):
        """First-fit channel index for ``[start, start + duration)``, or ``None``."""
        if not duration > 0:
            raise ValueError("duration must be > 0")
        tab = self.tables[link]
        end = start + duration
        while True:
            ch = kernels.first_fit(tab[0], tab[1], tab[2], start, end, now, self.horizon)
            if ch != kernels.GROW:
                break
            cap = tab[0].shape[1]
            tab[0] = np.concatenate([tab[0], np.zeros_like(tab[0])], axis=1)
            tab[1] = np.concatenate([tab[1], np.zeros_like(tab[1])], axis=1)
            log.debug("link %d schedule grown to %d slots", link, 2 * cap)
        if ch == kernels.CONTENTION:
            return None
        if self.audit is not None:
            self.audit.append((link, int(ch), start, end, now))
        return int(ch)


def try_reserve(schedule, link, start, duration):
    return schedule.try_reserve(link, start, duration)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("kb", "table", "sp_th", "seen_version")

    def __init__(self, kb):
        self.kb = kb
        self.table = None
        self.sp_th = 0.0
        self.seen_version = -1


class _Burst:
    __slots__ = ("src", "dst", "size", "t_gen", "counted", "state")

    def __init__(self, src, dst, size, t_gen, counted):
        self.src = src
        self.dst = dst
        self.size = size
        self.t_gen = t_gen
        self.counted = counted
        self.state = PENDING


class Simulation:
    """Single run of one :class:`SimConfig`.

    ``trace`` is any callable ``(time, kind, burst_id, node, detail)``;
    ``audit=True`` keeps every channel reservation for post-run checks.
    ``arrivals`` replaces the Poisson generators with a fixed, time-ordered
    iterable of ``(time, src, dst, size_bytes)``.
    """

    def __init__(self, config, trace=None, audit=False, topology=None, arrivals=None):
        config.validate()
        self.config = config
        self.topo = topology if topology is not None else load_topology(config.topology)
        self.policy = config.policy
        self.dp_w = config.dp_weights
        self.th_w = config.threshold_weights
        self.offset_p = config.offset_params
        self.trace = trace
        self.arrivals = arrivals
        self.warmup = config.effective_warmup

        topo = self.topo
        self.route_sets = build_route_sets(topo, config.xi)
        self.meters = make_meters(topo, config.stats_window)
        dlinks = topo.directed_links()
        self._meter_by_id = [self.meters[l] for l in dlinks]
        self._rate = [topo.link(u, v).channel_rate for u, v in dlinks]
        self._prop = [topo.link(u, v).prop_delay for u, v in dlinks]
        self._lid = {l: i for i, l in enumerate(dlinks)}
        self.schedule = ChannelSchedule(topo, horizon=config.scheduling == "horizon", audit=audit)
        self.nodes = [_Node(KnowledgeBase(n, topo)) for n in range(topo.node_count)]

        seeds = np.random.SeedSequence(config.seed).spawn(3)
        self._traffic_rng = np.random.default_rng(seeds[0])
        self._retx_rng = np.random.default_rng(seeds[1])
        placement_rng = np.random.default_rng(seeds[2])
        self.generators = active_generators(config, topo, placement_rng)

        self.metrics = SimMetrics(scheme=self.policy.variant.value, topology=topo.name,
                                  load=config.load, seed=config.seed)
        self.bursts = {}
        self._heap = []
        self._seq = 0
        self.now = 0.0
        self._handlers = {
            BURST_ARRIVAL: self._on_burst_arrival,
            BHP_AT_NODE: self._on_bhp,
            BURST_AT_NODE: self._on_burst_at_node,
            ACK_AT_NODE: self._on_control,
            NACK_AT_NODE: self._on_control,
            RETRANSMIT_TIMER: self._on_retransmit_timer,
            PERIODIC_UPDATE: self._on_periodic_update,
        }

    # -- event queue ---------------------------------------------------------

    def _push(self, t, kind, payload=None):
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, payload))

    def _log(self, kind, burst_id, node, detail=""):
        self.trace(self.now, kind, burst_id, node, detail)

    # -- main loop -----------------------------------------------------------

    def run(self):
        cfg = self.config
        for n in range(self.topo.node_count):
            self.periodic_update(n)
        if cfg.duration <= 0:
            return self.metrics
        self._push(cfg.duration, END_OF_RUN)
        if self.arrivals is not None:
            self._traffic = iter(self.arrivals)
        else:
            self._traffic = generate_traffic(cfg, self.topo, self._traffic_rng, self.generators)
        self._next_arrival()
        self._push(cfg.update_period, PERIODIC_UPDATE)

        heap = self._heap
        handlers = self._handlers
        pop = heapq.heappop
        while heap:
            t, _, kind, payload = pop(heap)
            if kind == END_OF_RUN:
                self.now = t
                break
            self.now = t
            handlers[kind](payload)

        m = self.metrics
        m.bursts_in_flight = sum(1 for b in self.bursts.values() if b.counted and b.state == PENDING)
        return m

    def _next_arrival(self):
        for arrival in self._traffic:
            if arrival[0] < self.now:
                raise ValueError(f"arrival at {arrival[0]} precedes current time {self.now}")
            self._push(arrival[0], BURST_ARRIVAL, arrival)
            return

    # -- node state ----------------------------------------------------------

    def periodic_update(self, n):
        """Refresh node ``n``'s routing table and threshold from its kb."""
        node = self.nodes[n]
        if node.kb.version == node.seen_version and node.table is not None:
            return
        node.table = rebuild_routing_table(n, node.kb, self.route_sets[n], self.dp_w)
        if self.config.pinned_threshold is not None:
            node.sp_th = self.config.pinned_threshold
        else:
            node.sp_th = decision_threshold(*network_aggregates(node.kb), self.th_w)
        node.seen_version = node.kb.version

    def _on_periodic_update(self, _):
        for n in range(self.topo.node_count):
            self.periodic_update(n)
        nxt = self.now + self.config.update_period
        if nxt < self.config.duration:
            self._push(nxt, PERIODIC_UPDATE)

    # -- ingress -------------------------------------------------------------

    def _on_burst_arrival(self, arrival):
        t, src, dst, size = arrival
        burst_id = len(self.bursts)
        counted = t >= self.warmup
        self.bursts[burst_id] = _Burst(src, dst, size, t, counted)
        if counted:
            self.metrics.bursts_generated += 1
        if self.trace:
            self._log("GEN", burst_id, src, f"dst={dst} size={size:.3f} counted={int(counted)}")
        self._emit(burst_id, 0, 0)
        self._next_arrival()

    def _emit(self, burst_id, retransmissions, deflections):
        b = self.bursts[burst_id]
        node = self.nodes[b.src]
        shortest = self.route_sets[b.src].shortest(b.dst)
        if self.policy.adaptive_offset:
            hops = predict_hops(node.table, b.dst, node.sp_th)
        else:
            hops = len(shortest) - 1
        offset = offset_time(self.offset_p, hops)
        bhp = Bhp(burst_id, b.src, b.dst, b.size, offset, [b.src], retransmissions, deflections,
                  planned=shortest, offset=offset, sent_at=self.now)
        if b.counted:
            self.metrics.offset_samples.append(offset)
        if self.trace:
            self._log("SEND", burst_id, b.src, f"attempt={retransmissions} offset={offset:.9f} hops={hops}")
        self._handle_bhp(b.src, bhp)

    def _on_retransmit_timer(self, payload):
        burst_id, retransmissions, deflections = payload
        self._emit(burst_id, retransmissions, deflections)

    # -- forwarding ----------------------------------------------------------

    def _on_bhp(self, payload):
        node, bhp = payload
        self._handle_bhp(node, bhp)

    def _reserve(self, u, v, start, size):
        lid = self._lid[(u, v)]
        duration = size * 8.0 / self._rate[lid]
        ch = self.schedule.try_reserve(lid, start, duration, self.now)
        meter = self._meter_by_id[lid]
        meter.record_offer(self.now, ch is None)
        if ch is None:
            return False
        meter.record_reservation(start, duration)
        return True

    def _handle_bhp(self, node, bhp):
        cfg = self.config
        b = self.bursts[bhp.burst_id]
        now = self.now

        if node == bhp.dst:
            prev = bhp.route_taken[-2]
            lid = self._lid[(prev, node)]
            arrive = now + bhp.offset_remaining
            done = arrive + bhp.burst_size * 8.0 / self._rate[lid]
            self._push(done, BURST_AT_NODE, bhp.burst_id)
            link, stats = (prev, node), self.meters[(prev, node)].snapshot(now)
            if self.trace:
                self._log("ACK", bhp.burst_id, node, f"link={prev}-{node}")
            self._start_control(ACK_AT_NODE, Ack(bhp.burst_id, (link, stats)), bhp)
            return

        can_retx = self.policy.retransmits and bhp.retransmission_count < cfg.n_ret
        remaining = len(bhp.planned) - 1
        if not offset_sufficient(bhp, remaining, self.offset_p):
            prev = bhp.route_taken[-2]
            decision = RETRANSMIT if can_retx else DROP
            self._fail(node, bhp, NackReason.OFFSET_INSUFFICIENT, (prev, node), decision, untried=-1)
            return

        start = now + bhp.offset_remaining
        primary = bhp.planned[1]
        if self._reserve(node, primary, start, bhp.burst_size):
            self._forward(node, bhp, bhp.planned)
            return

        if b.counted:
            self.metrics.contentions += 1
        n_state = self.nodes[node]
        tried = {primary}
        visited = set(bhp.route_taken)
        while True:
            decision = resolve_contention(self.policy, n_state.table, bhp.dst, tried, visited,
                                          n_state.sp_th, can_retx, bhp.deflection_count)
            if decision.action is not Action.DEFLECT:
                untried = self._count_untried(n_state.table, bhp.dst, tried, visited) if self.trace else -1
                self._fail(node, bhp, NackReason.CONTENTION, (node, primary), decision, untried)
                return
            nh = decision.route[1]
            if self._reserve(node, nh, start, bhp.burst_size):
                bhp.deflection_count += 1
                if b.counted:
                    self.metrics.deflections += 1
                if self.trace:
                    self._log("DEFLECT", bhp.burst_id, node,
                              f"via={nh} route={'-'.join(map(str, decision.route))}")
                self._forward(node, bhp, decision.route)
                return
            if self.trace:
                self._log("DEFLECT_BUSY", bhp.burst_id, node, f"via={nh}")
            tried.add(nh)

    @staticmethod
    def _count_untried(table, dst, tried, visited):
        hops = set()
        for e in table.iter_entries(dst):
            if e.next_hop not in tried and visited.isdisjoint(e.route[1:]):
                hops.add(e.next_hop)
        return len(hops)

    def _forward(self, node, bhp, route):
        nxt = route[1]
        bhp.planned = route[1:]
        bhp.route_taken.append(nxt)
        bhp.offset_remaining -= self.offset_p.t_p
        arrive = self.now + self.offset_p.t_p + self._prop[self._lid[(node, nxt)]]
        self._push(arrive, BHP_AT_NODE, (nxt, bhp))

    def _fail(self, node, bhp, reason, link, decision, untried):
        b = self.bursts[bhp.burst_id]
        m = self.metrics
        if reason is NackReason.OFFSET_INSUFFICIENT and b.counted:
            m.offset_nacks += 1
        final = decision.action is Action.DROP
        if final:
            b.state = LOST
            if b.counted:
                m.bursts_lost += 1
        elif b.counted:
            m.retransmissions += 1
        if self.trace:
            kind = "DROP" if final else "RETRANSMIT"
            self._log(kind, bhp.burst_id, node,
                      f"reason={reason.value} link={link[0]}-{link[1]} untried={untried}")
        stats = self.meters[link].snapshot(self.now)
        self._start_control(NACK_AT_NODE, Nack(bhp.burst_id, reason, (link, stats), final), bhp)

    # -- reverse-path control messages ---------------------------------------

    def _start_control(self, kind, msg, bhp):
        path = bhp.route_taken[::-1]
        self._control_step(kind, msg, path, 0, bhp)

    def _on_control(self, payload):
        kind, msg, path, idx, bhp = payload
        self._control_step(kind, msg, path, idx, bhp)

    def _control_step(self, kind, msg, path, idx, bhp):
        node = path[idx]
        link, stats = msg.piggyback
        self.nodes[node].kb.ingest(link, stats)
        if idx + 1 < len(path):
            nxt = path[idx + 1]
            arrive = self.now + self._prop[self._lid[(node, nxt)]]
            self._push(arrive, kind, (kind, msg, path, idx + 1, bhp))
            return
        # reached the ingress
        if kind == NACK_AT_NODE and not msg.final:
            t = schedule_retransmission(self.now, self._retx_rng, self.config.n_ret,
                                        bhp.retransmission_count, self.config.retx_idle_max)
            if t is None:  # the deciding node already checked the budget
                b = self.bursts[msg.burst_id]
                b.state = LOST
                if b.counted:
                    self.metrics.bursts_lost += 1
                return
            self._push(t, RETRANSMIT_TIMER, (msg.burst_id, bhp.retransmission_count + 1, bhp.deflection_count))

    def _on_burst_at_node(self, burst_id):
        b = self.bursts[burst_id]
        b.state = DELIVERED
        if b.counted:
            self.metrics.bursts_delivered += 1
            self.metrics.delay_samples.append((burst_id, self.now - b.t_gen))
        if self.trace:
            self._log("DELIVER", burst_id, b.dst, f"delay={self.now - b.t_gen:.9f}")


def run(config, trace=None, audit=False):
    """Run one simulation and return its :class:`SimMetrics`."""
    return Simulation(config, trace=trace, audit=audit).run()
