"""Per-link BLR/utilisation meters and per-node knowledge bases.

Meters live on the upstream node of each directed link. Their snapshots ride
on ACK/NACK messages, and every node the message passes through ingests them
into its own :class:`KnowledgeBase`.
"""

from __future__ import annotations

import csv
import logging
from collections import deque
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 1.0


class LinkStats(NamedTuple):
    blr: float
    utilization: float
    as_of: float


class LinkMeter:
    """Sliding-window counters for one directed link.

    The window covers ``(now - window, now]``. An empty window reports
    ``blr = 0`` and ``utilization = 0``.
    """

    __slots__ = ("window", "data_channels", "_offers", "_dropped", "_resv", "_last_t")

    def __init__(self, data_channels=4, window=DEFAULT_WINDOW):
        if window <= 0:
            raise ValueError("window must be positive")
        self.window = float(window)
        self.data_channels = int(data_channels)
        self._offers = deque()
        self._dropped = 0
        self._resv = deque()
        self._last_t = 0.0

    def _expire(self, now):
        cutoff = now - self.window
        offers = self._offers
        while offers and offers[0][0] <= cutoff:
            _, dropped = offers.popleft()
            self._dropped -= dropped
        resv = self._resv
        while resv and resv[0][1] <= cutoff:
            resv.popleft()

    @property
    def bursts_offered(self):
        return len(self._offers)

    @property
    def bursts_dropped(self):
        return self._dropped

    def record_offer(self, t, dropped):
        if t < self._last_t:
            raise ValueError(f"offer at {t} precedes previous event at {self._last_t}")
        self._last_t = t
        self._offers.append((t, 1 if dropped else 0))
        if dropped:
            self._dropped += 1
        self._expire(t)

    def record_reservation(self, start, duration):
        if duration < 0:
            raise ValueError("duration must be >= 0")
        if duration > 0:
            self._resv.append((start, start + duration))

    def reserved_time(self, now):
        """Channel-seconds reserved inside the current window."""
        lo = now - self.window
        total = 0.0
        for s, e in self._resv:
            a = s if s > lo else lo
            b = e if e < now else now
            if b > a:
                total += b - a
        return total

    def snapshot(self, now):
        self._expire(now)
        offered = len(self._offers)
        blr = self._dropped / offered if offered else 0.0
        util = self.reserved_time(now) / (self.window * self.data_channels)
        return LinkStats(min(max(blr, 0.0), 1.0), min(max(util, 0.0), 1.0), float(now))


def make_meters(topo, window=DEFAULT_WINDOW):
    """One meter per directed link, keyed by ``(u, v)``."""
    return {(u, v): LinkMeter(topo.link(u, v).data_channels, window) for u, v in topo.directed_links()}


def piggyback_for_nack(node, next_node, meters, now):
    """Stats of the link where the failure happened (node -> next)."""
    link = (node, next_node)
    if link not in meters:
        raise KeyError(f"no link {node}->{next_node}")
    return link, meters[link].snapshot(now)


def piggyback_for_ack(dest, prev, meters, now):
    """Stats of the final link (prev -> dest) of a delivered burst."""
    link = (prev, dest)
    if link not in meters:
        raise KeyError(f"no link {prev}->{dest}")
    return link, meters[link].snapshot(now)


class KnowledgeBase:
    """One node's view of directed-link statistics.

    Dense arrays indexed by directed link id; unknown links read as (0, 0).
    """

    def __init__(self, owner, topo):
        self.owner = owner
        self.topo = topo
        n = topo.directed_link_count
        self.blr = np.zeros(n)
        self.utilization = np.zeros(n)
        self.as_of = np.full(n, -np.inf)
        self.known = np.zeros(n, dtype=bool)
        self.version = 0
        self.unknown_links = 0

    def __len__(self):
        return int(self.known.sum())

    def ingest(self, link, stats):
        """Keep ``stats`` unless the stored entry is strictly fresher."""
        if not self.topo.has_link(*link):
            self.unknown_links += 1
            log.warning("node %s ignored stats for unknown link %s", self.owner, link)
            return False
        i = self.topo.link_id(*link)
        if stats.as_of < self.as_of[i]:
            return False
        self.blr[i] = stats.blr
        self.utilization[i] = stats.utilization
        self.as_of[i] = stats.as_of
        self.known[i] = True
        self.version += 1
        return True

    def get(self, link):
        i = self.topo.link_id(*link)
        if not self.known[i]:
            return None
        return LinkStats(float(self.blr[i]), float(self.utilization[i]), float(self.as_of[i]))

    def items(self):
        links = self.topo.directed_links()
        for i in np.flatnonzero(self.known):
            yield links[i], LinkStats(float(self.blr[i]), float(self.utilization[i]), float(self.as_of[i]))

    def network_aggregates(self):
        return network_aggregates(self)

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["link_src", "link_dst", "blr", "utilization", "as_of"])
            for (u, v), s in self.items():
                w.writerow([u, v, repr(s.blr), repr(s.utilization), repr(s.as_of)])


def network_aggregates(kb):
    """Unweighted mean (BLR, utilisation) over known links; (0, 0) if none."""
    if not kb.known.any():
        return 0.0, 0.0
    return float(kb.blr[kb.known].mean()), float(kb.utilization[kb.known].mean())
