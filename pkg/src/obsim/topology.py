"""Network graph, built-in NSFNET / COST239 wiring, and loop-free route sets."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

Route = tuple  # tuple of node ids, source first

DEFAULT_LINK = {
    "data_channels": 4,
    "control_channels": 2,
    "channel_rate": 1e9,
    "prop_delay": 1e-3,
}

BUILTIN = ("nsfnet", "cost239")


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    data_channels: int = 4
    control_channels: int = 2
    channel_rate: float = 1e9
    prop_delay: float = 1e-3

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-loop on node {self.a}")
        if self.data_channels < 1 or self.control_channels < 1:
            raise TopologyError(f"link {self.a}-{self.b}: channel counts must be >= 1")
        if not self.channel_rate > 0:
            raise TopologyError(f"link {self.a}-{self.b}: channel_rate must be > 0")
        if self.prop_delay < 0:
            raise TopologyError(f"link {self.a}-{self.b}: prop_delay must be >= 0")

    @property
    def endpoints(self):
        return (self.a, self.b)


@dataclass
class Topology:
    """Undirected simple connected graph over nodes ``0..node_count-1``.

    Every undirected link ``i`` gives two directed links: ``2*i`` for
    ``(a, b)`` and ``2*i + 1`` for ``(b, a)``.
    """

    node_count: int
    links: list
    name: str = "custom"
    node_names: list | None = None
    adjacency: list = field(init=False, repr=False)
    _dindex: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise TopologyError("node_count must be positive")
        self.adjacency = [[] for _ in range(self.node_count)]
        self._dindex = {}
        for i, link in enumerate(self.links):
            for n in link.endpoints:
                if not 0 <= n < self.node_count:
                    raise TopologyError(f"link {link.endpoints} references unknown node {n}")
            if (link.a, link.b) in self._dindex:
                raise TopologyError(f"duplicate link {link.a}-{link.b}")
            self._dindex[(link.a, link.b)] = 2 * i
            self._dindex[(link.b, link.a)] = 2 * i + 1
            self.adjacency[link.a].append(link.b)
            self.adjacency[link.b].append(link.a)
        for nbrs in self.adjacency:
            nbrs.sort()
        if len(bfs_distances(self, 0)) != self.node_count:
            raise TopologyError("topology is not connected")

    @property
    def directed_link_count(self):
        return 2 * len(self.links)

    def has_link(self, u, v):
        return (u, v) in self._dindex

    def link_id(self, u, v):
        """Directed link index of ``(u, v)``."""
        try:
            return self._dindex[(u, v)]
        except KeyError:
            raise KeyError(f"no link {u}->{v}") from None

    def directed_links(self):
        """All directed links ``(u, v)`` in index order."""
        out = []
        for link in self.links:
            out.append((link.a, link.b))
            out.append((link.b, link.a))
        return out

    def link(self, u, v):
        return self.links[self.link_id(u, v) // 2]

    def degree(self, n):
        return len(self.adjacency[n])

    def capacity(self):
        """Total data capacity in bit/s, summed over directed links."""
        return sum(2 * l.data_channels * l.channel_rate for l in self.links)


def connectivity(topo):
    """Link count over the complete-graph link count, ``L / (N(N-1)/2)``."""
    n = topo.node_count
    if n < 2:
        raise TopologyError("connectivity needs at least two nodes")
    return len(topo.links) / (n * (n - 1) / 2)


def bfs_distances(topo, root):
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in topo.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def shortest_path(topo, src, dst):
    """Minimum-hop route; among equals, the lexicographically smallest."""
    if src == dst:
        raise TopologyError("shortest_path needs src != dst")
    dist = bfs_distances(topo, dst)
    if src not in dist:
        raise TopologyError(f"node {dst} unreachable from {src}")
    path = [src]
    node = src
    while node != dst:
        # adjacency is sorted, so the first closer neighbour is the smallest
        node = next(v for v in topo.adjacency[node] if dist.get(v, math.inf) == dist[node] - 1)
        path.append(node)
    return tuple(path)


def hop_count(route):
    return len(route) - 1


def max_route_hops(primary_hops, xi):
    # tolerance keeps e.g. 3 * 1.6666666666666667 from flooring to 4
    return int(math.floor(primary_hops * xi + 1e-9))


def enumerate_routes(topo, src, dst, xi):
    """All loop-free routes with ``hops <= shortest_hops * xi``.

    Sorted by hop count, then by node sequence; the shortest path comes first.
    """
    if src == dst:
        raise TopologyError("enumerate_routes needs src != dst")
    if xi < 1:
        raise TopologyError("xi must be >= 1")
    dist = bfs_distances(topo, dst)
    limit = max_route_hops(dist[src], xi)
    found = []
    path = [src]
    on_path = {src}

    def dfs(u):
        if u == dst:
            found.append(tuple(path))
            return
        for v in topo.adjacency[u]:
            if v in on_path or len(path) + dist[v] > limit:
                continue
            path.append(v)
            on_path.add(v)
            dfs(v)
            path.pop()
            on_path.discard(v)

    dfs(src)
    found.sort(key=lambda r: (len(r), r))
    return found


def _from_dict(data, name=None):
    defaults = dict(DEFAULT_LINK)
    defaults.update(data.get("defaults", {}))
    links = []
    for entry in data["links"]:
        if isinstance(entry, dict):
            a, b = entry["endpoints"]
            params = {k: entry[k] for k in DEFAULT_LINK if k in entry}
        else:
            a, b = entry[0], entry[1]
            params = dict(entry[2]) if len(entry) > 2 else {}
        kw = dict(defaults)
        kw.update(params)
        links.append(Link(int(a), int(b), int(kw["data_channels"]), int(kw["control_channels"]),
                          float(kw["channel_rate"]), float(kw["prop_delay"])))
    return Topology(int(data["nodes"]), links, name=name or data.get("name", "custom"),
                    node_names=data.get("node_names"))


def load_topology(spec):
    """Load a built-in topology by name or a JSON topology file by path.

    File layout::

        {"nodes": 4,
         "defaults": {"data_channels": 4, "prop_delay": 0.001},
         "links": [[0, 1], [1, 2, {"prop_delay": 0.002}],
                   {"endpoints": [2, 3], "data_channels": 8}]}
    """
    if isinstance(spec, Topology):
        return spec
    key = str(spec).lower()
    if key in BUILTIN:
        text = resources.files("obsim.data").joinpath(f"{key}.json").read_text()
        return _from_dict(json.loads(text), name=key)
    path = Path(spec)
    if not path.exists():
        raise TopologyError(f"unknown topology {spec!r}: not a built-in name or readable file")
    return _from_dict(json.loads(path.read_text()), name=path.stem)


def build_nsfnet():
    """14-node, 21-link NSFNET."""
    return load_topology("nsfnet")


def build_cost239():
    """11-node, 26-link COST239 pan-European network."""
    return load_topology("cost239")


def from_edges(node_count, edges, **link_kw):
    """Convenience constructor for tests and ad-hoc graphs."""
    return Topology(node_count, [Link(a, b, **link_kw) for a, b in edges])
