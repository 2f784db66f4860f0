"""Deflect-or-retransmit decision maths, routing tables and scheme policies."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kernels import route_success_batch
from .topology import enumerate_routes

_TOL = 1e-9


@dataclass(frozen=True)
class DpWeights:
    """Link dropping-probability weights; must sum to one."""

    alpha_blr: float = 0.5
    alpha_u: float = 0.5

    def __post_init__(self):
        for name in ("alpha_blr", "alpha_u"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if abs(self.alpha_blr + self.alpha_u - 1.0) > _TOL:
            raise ValueError(f"alpha_blr + alpha_u must equal 1, got {self.alpha_blr + self.alpha_u}")


@dataclass(frozen=True)
class ThresholdWeights:
    """Decision-threshold weights; the sum may not exceed one."""

    beta_blr: float = 0.4
    beta_u: float = 0.2

    def __post_init__(self):
        for name in ("beta_blr", "beta_u"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.beta_blr + self.beta_u > 1.0 + _TOL:
            raise ValueError(f"beta_blr + beta_u must be <= 1, got {self.beta_blr + self.beta_u}")


def dropping_probability(stats, w):
    return w.alpha_blr * stats.blr + w.alpha_u * stats.utilization


def route_success_probability(kb, route, w):
    """Product of per-link success probabilities; unknown links count as (0, 0)."""
    sp = 1.0
    for u, v in zip(route, route[1:]):
        i = kb.topo.link_id(u, v)
        dp = w.alpha_blr * kb.blr[i] + w.alpha_u * kb.utilization[i]
        sp *= 1.0 - dp
    return float(sp)


def route_cost(kb, route, w):
    return 1.0 - route_success_probability(kb, route, w)


def decision_threshold(blr_topo, u_topo, w):
    return w.beta_blr * blr_topo + w.beta_u * u_topo


def deflection_allowed(sp, sp_th):
    return sp >= sp_th


# ---------------------------------------------------------------------------
# route sets and routing tables
# ---------------------------------------------------------------------------

class RouteSet:
    """All xi-bounded routes leaving one node, flattened for the SP kernel.

    ``rank`` is a route's position in its destination's (hops, node sequence)
    order, so rank 0 is the shortest path.
    """

    def __init__(self, topo, node, xi):
        self.node = node
        self.xi = xi
        routes, dsts, ranks = [], [], []
        for dst in range(topo.node_count):
            if dst == node:
                continue
            for r, route in enumerate(enumerate_routes(topo, node, dst, xi)):
                routes.append(route)
                dsts.append(dst)
                ranks.append(r)
        self.routes = routes
        self.dst = np.asarray(dsts, dtype=np.int64)
        self.rank = np.asarray(ranks, dtype=np.int64)
        self.lengths = np.asarray([len(r) - 1 for r in routes], dtype=np.int64)
        width = int(self.lengths.max()) if routes else 1
        pad = topo.directed_link_count
        self.links = np.full((len(routes), width), pad, dtype=np.int64)
        for i, route in enumerate(routes):
            for j, (u, v) in enumerate(zip(route, route[1:])):
                self.links[i, j] = topo.link_id(u, v)
        # per-destination slices in static order (routes are appended by dst)
        self._static = {}
        start = 0
        for i in range(1, len(routes) + 1):
            if i == len(routes) or dsts[i] != dsts[start]:
                self._static[dsts[start]] = (start, i)
                start = i

    def __len__(self):
        return len(self.routes)

    def static_slice(self, dst):
        return self._static[dst]

    def shortest(self, dst):
        return self.routes[self._static[dst][0]]


def build_route_sets(topo, xi):
    return [RouteSet(topo, n, xi) for n in range(topo.node_count)]


class RoutingEntry(NamedTuple):
    next_hop: int
    route: tuple
    cost: float
    sp: float


class RoutingTable:
    """Per-destination next-hop alternatives in ascending cost order.

    Equal costs fall back to the static order (shorter first, then node
    sequence).
    """

    def __init__(self, route_set, sp):
        self.route_set = route_set
        self.node = route_set.node
        self.sp = sp
        self.cost = 1.0 - sp
        rs = route_set
        self.order = np.lexsort((rs.rank, self.cost, rs.dst))
        self._slices = {}
        sorted_dst = rs.dst[self.order]
        for dst, (lo, hi) in rs._static.items():
            # the static slice width equals the destination's block width
            first = int(np.searchsorted(sorted_dst, dst, side="left"))
            self._slices[dst] = (first, first + (hi - lo))

    def destinations(self):
        return sorted(self._slices)

    def indices(self, dst):
        lo, hi = self._slices[dst]
        return self.order[lo:hi]

    def iter_entries(self, dst):
        rs = self.route_set
        for i in self.indices(dst).tolist():
            route = rs.routes[i]
            yield RoutingEntry(route[1], route, float(self.cost[i]), float(self.sp[i]))

    def entries(self, dst):
        return list(self.iter_entries(dst))

    def static_entries(self, dst):
        """Alternatives by hop count then node sequence, ignoring cost."""
        rs = self.route_set
        lo, hi = rs.static_slice(dst)
        return [RoutingEntry(rs.routes[i][1], rs.routes[i], float(self.cost[i]), float(self.sp[i]))
                for i in range(lo, hi)]

    def best(self, dst):
        i = int(self.indices(dst)[0])
        route = self.route_set.routes[i]
        return RoutingEntry(route[1], route, float(self.cost[i]), float(self.sp[i]))


def link_dropping_probabilities(kb, w):
    return w.alpha_blr * kb.blr + w.alpha_u * kb.utilization


def rebuild_routing_table(node, kb, route_set, w):
    if route_set.node != node:
        raise ValueError(f"route set belongs to node {route_set.node}, not {node}")
    dp = link_dropping_probabilities(kb, w)
    sp = route_success_batch(dp, route_set.links, route_set.lengths)
    return RoutingTable(route_set, sp)


# ---------------------------------------------------------------------------
# contention resolution
# ---------------------------------------------------------------------------

class Scheme(str, enum.Enum):
    AHDR = "ahdr"
    MLHDR = "mlhdr"
    RETRANSMIT_ONLY = "retransmit"
    DEFLECT_ONLY = "deflect"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"retransmit_only": "retransmit", "deflect_only": "deflect"}
        key = aliases.get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown scheme {value!r}; expected one of {[m.value for m in cls]}")


@dataclass(frozen=True)
class SchemePolicy:
    variant: Scheme = Scheme.AHDR
    max_deflections_per_burst: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variant", Scheme.parse(self.variant))
        if self.max_deflections_per_burst < 0:
            raise ValueError("max_deflections_per_burst must be >= 0")

    @property
    def retransmits(self):
        return self.variant is not Scheme.DEFLECT_ONLY

    @property
    def adaptive_offset(self):
        return self.variant is Scheme.AHDR


class Action(str, enum.Enum):
    DEFLECT = "deflect"
    RETRANSMIT = "retransmit"
    DROP = "drop"


@dataclass(frozen=True)
class Decision:
    action: Action
    route: tuple | None = None

    @property
    def next_hop(self):
        return self.route[1] if self.route else None


RETRANSMIT = Decision(Action.RETRANSMIT)
DROP = Decision(Action.DROP)


def _usable(entry, tried, visited):
    return entry.next_hop not in tried and visited.isdisjoint(entry.route[1:])


def resolve_contention(policy, table, dst, tried, visited, sp_th, can_retransmit,
                       deflections_so_far=0):
    """Pick Deflect / Retransmit / Drop after the primary port is contended.

    ``tried`` holds next hops already attempted at this node (the contended
    primary included); ``visited`` holds nodes already on the burst's path, so
    deflections stay loop-free.
    """
    fallback = RETRANSMIT if can_retransmit and policy.retransmits else DROP
    variant = policy.variant

    if variant is Scheme.RETRANSMIT_ONLY:
        return fallback

    if variant is Scheme.MLHDR:
        if deflections_so_far >= policy.max_deflections_per_burst:
            return fallback
        for entry in table.static_entries(dst):
            if _usable(entry, tried, visited):
                return Decision(Action.DEFLECT, entry.route)
        return fallback

    for entry in table.iter_entries(dst):
        if not _usable(entry, tried, visited):
            continue
        if variant is Scheme.DEFLECT_ONLY or deflection_allowed(entry.sp, sp_th):
            return Decision(Action.DEFLECT, entry.route)
        # cost order means every later alternative has an SP at most this one
        return fallback
    return fallback
