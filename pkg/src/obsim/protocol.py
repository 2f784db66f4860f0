"""Control-plane messages, offset-time arithmetic and retransmission timing."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

from .decision import deflection_allowed

# absolute slack for float drift when offsets are decremented hop by hop
OFFSET_EPS = 1e-12

DEFAULT_RETX_IDLE_MAX = 0.05


@dataclass(frozen=True)
class OffsetParams:
    t_conf: float = 10e-6
    t_p: float = 10e-6

    def __post_init__(self):
        if self.t_conf < 0 or self.t_p < 0:
            raise ValueError("t_conf and t_p must be >= 0")


@dataclass(slots=True)
class Bhp:
    burst_id: int
    src: int
    dst: int
    burst_size: float
    offset_remaining: float
    route_taken: list
    retransmission_count: int = 0
    deflection_count: int = 0
    planned: tuple = ()  # remaining planned route, starting at the current node
    offset: float = 0.0  # offset chosen at the ingress for this attempt
    sent_at: float = 0.0

    @property
    def node(self):
        return self.route_taken[-1]


class NackReason(str, enum.Enum):
    CONTENTION = "contention"
    OFFSET_INSUFFICIENT = "offset"


class Ack(NamedTuple):
    burst_id: int
    piggyback: tuple  # ((u, v), LinkStats)


class Nack(NamedTuple):
    burst_id: int
    reason: NackReason
    piggyback: tuple
    final: bool = False  # burst given up; the ingress frees its copy


def offset_time(p, n_hops):
    """Minimum offset for a route of ``n_hops`` hops."""
    return p.t_conf + n_hops * p.t_p


def predict_hops(table, dst, sp_th):
    """Hop count the ingress should provision offset for.

    The best (lowest-cost) route other than the shortest path wins when its
    success probability clears the threshold; otherwise the shortest path.
    """
    shortest = table.route_set.shortest(dst)
    for entry in table.iter_entries(dst):
        if entry.route == shortest:
            continue
        if deflection_allowed(entry.sp, sp_th):
            return len(entry.route) - 1
        break
    return len(shortest) - 1


def offset_sufficient(bhp, remaining_hops, p):
    if remaining_hops < 0:
        raise ValueError("remaining_hops must be >= 0")
    return bhp.offset_remaining >= offset_time(p, remaining_hops) - OFFSET_EPS


def schedule_retransmission(now, rng, n_ret, count, idle_max=DEFAULT_RETX_IDLE_MAX):
    """Retransmission time, or ``None`` once ``n_ret`` attempts are spent.

    The idle wait is uniform on ``[0, idle_max)``.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count >= n_ret:
        return None
    return now + rng.uniform(0.0, idle_max)


@dataclass
class TraceLog:
    """Newline-delimited control-event log: ``time type burst_id node detail``."""

    sink: object = None
    lines: list = field(default_factory=list)
    keep: bool = True

    def __call__(self, t, kind, burst_id, node, detail=""):
        line = f"{t:.12f} {kind} {burst_id} {node} {detail}".rstrip()
        if self.keep:
            self.lines.append(line)
        if self.sink is not None:
            self.sink.write(line + "\n")
