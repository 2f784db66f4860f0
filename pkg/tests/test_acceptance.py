"""Acceptance criteria 1-12 at their stated tolerances.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts, so a failing criterion shows up both in the summary and as a failure.

Desk scale: mean burst sizes are 32x the defaults (12.8 MB NSFNET, 128 MB
COST239) so a 60 s run holds a few thousand bursts per seed.
"""

import itertools
import os
import random
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest
from conftest import ACCEPTANCE, parse_trace

from obsim import analysis
from obsim.config import SimConfig
from obsim.decision import (
    DpWeights,
    RouteSet,
    ThresholdWeights,
    decision_threshold,
    deflection_allowed,
    dropping_probability,
    rebuild_routing_table,
    route_cost,
    route_success_probability,
)
from obsim.engine import ChannelSchedule, run
from obsim.protocol import OffsetParams, offset_time, predict_hops
from obsim.statistics import KnowledgeBase, LinkStats
from obsim.topology import (
    build_cost239,
    build_nsfnet,
    connectivity,
    enumerate_routes,
    from_edges,
)

BURST_SCALE = 32
DESK_SEEDS = list(range(1, 11))
DESK_DURATION = 60.0
LOADS = [0.2, 0.5, 0.8]
TOPOLOGIES = ["nsfnet", "cost239"]
WORKERS = os.cpu_count() or 1


def record(num, ok, detail):
    ACCEPTANCE.append((num, bool(ok), detail))
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def desk_config(topology, **kw):
    base = SimConfig(topology=topology)
    return base.replace(mean_burst_size=base.effective_burst_size * BURST_SCALE, **kw)


# ---------------------------------------------------------------------------

def test_criterion_01_connectivity():
    c_ns = connectivity(build_nsfnet())
    c_cost = connectivity(build_cost239())
    ok = abs(c_ns - 0.23) <= 0.005 and abs(c_cost - 0.47) <= 0.005
    record(1, ok, f"C(nsfnet)={c_ns:.5f} C(cost239)={c_cost:.5f}")


def test_criterion_02_formula_suite():
    tol = 1e-12
    tri = from_edges(3, [(0, 1), (1, 2)])

    def kb(*entries):
        k = KnowledgeBase(0, tri)
        for link, b, u in entries:
            k.ingest(link, LinkStats(b, u, 0.0))
        return k

    w = DpWeights(0.5, 0.5)
    checks = [
        # link dropping probability
        ("dp zero stats", dropping_probability(LinkStats(0, 0, 0), DpWeights(0.3, 0.7)), 0.0),
        ("dp blr weight", dropping_probability(LinkStats(0.37, 0.9, 0), DpWeights(1, 0)), 0.37),
        ("dp half/half", dropping_probability(LinkStats(0.2, 0.4, 0), w), 0.3),
        # route success probability
        ("sp all zero", route_success_probability(kb(), (0, 1, 2), w), 1.0),
        ("sp one link", route_success_probability(kb(((0, 1), 0.1, 0.1)), (0, 1), w), 0.9),
        ("sp two links", route_success_probability(kb(((0, 1), 0.1, 0.1), ((1, 2), 0.2, 0.2)), (0, 1, 2), w), 0.72),
        # adaptive threshold
        ("th zero weights", decision_threshold(0.6, 0.9, ThresholdWeights(0, 0)), 0.0),
        ("th default", decision_threshold(0.5, 0.5, ThresholdWeights(0.4, 0.2)), 0.3),
        ("th anchor", decision_threshold(0.37, 0.0, ThresholdWeights(0.55, 0)), 0.2035),
        # deflection predicate
        ("da equal", deflection_allowed(0.2, 0.2), True),
        ("da above", deflection_allowed(0.9, 0.2), True),
        ("da below", deflection_allowed(0.1, 0.2), False),
        # route cost
        ("cost sp=1", route_cost(kb(), (0, 1, 2), w), 0.0),
        ("cost sp=.72", route_cost(kb(((0, 1), 0.1, 0.1), ((1, 2), 0.2, 0.2)), (0, 1, 2), w), 0.28),
        # offset time
        ("offset 0 hops", offset_time(OffsetParams(10e-6, 10e-6), 0), 10e-6),
        ("offset 3 hops", offset_time(OffsetParams(10e-6, 10e-6), 3), 40e-6),
        # deflection ratio
        ("ratio 0/10", analysis.deflection_ratio(analysis.SimMetrics(retransmissions=10)), 0.0),
        ("ratio 5/5", analysis.deflection_ratio(analysis.SimMetrics(deflections=5, retransmissions=5)), 0.5),
        ("ratio only defl", analysis.deflection_ratio(analysis.SimMetrics(deflections=4)), 1.0),
    ]
    # offset hop prediction: 1-hop shortest path, 2-hop and 4-hop alternatives
    topo = from_edges(5, [(0, 1), (0, 3), (1, 3), (1, 2), (2, 4), (3, 4)])
    k = KnowledgeBase(0, topo)
    k.ingest((1, 3), LinkStats(1.0, 1.0, 0.0))
    table = rebuild_routing_table(0, k, RouteSet(topo, 0, 5.0), w)
    path = from_edges(3, [(0, 1), (1, 2)])
    lone = rebuild_routing_table(0, KnowledgeBase(0, path), RouteSet(path, 0, 2.0), w)
    checks += [
        ("hops no alternative", predict_hops(lone, 2, 0.0), 2),
        ("hops alternative ok", predict_hops(table, 3, 0.2), 4),
        ("hops alternative low", predict_hops(table, 3, 1.5), 1),
    ]
    bad = [name for name, got, want in checks
           if (got != want if isinstance(want, (bool, int)) and not isinstance(want, float)
               else abs(got - want) > tol)]
    record(2, not bad, f"{len(checks) - len(bad)}/{len(checks)} formula examples exact" +
           (f"; failed {bad}" if bad else ""))


def test_criterion_03_routing_table_order():
    topo = build_nsfnet()
    links = topo.directed_links()
    route_sets = [RouteSet(topo, n, 2.0) for n in range(topo.node_count)]
    rng = random.Random(3)
    w = DpWeights(0.5, 0.5)
    bad = 0
    for trial in range(1000):
        node = rng.randrange(topo.node_count)
        kb = KnowledgeBase(node, topo)
        for link in links:
            if rng.random() < 0.7:
                kb.ingest(link, LinkStats(rng.random(), rng.random(), 0.0))
        table = rebuild_routing_table(node, kb, route_sets[node], w)
        for dst in table.destinations():
            got = table.entries(dst)
            indep = {e.route: route_cost(kb, e.route, w) for e in got}
            ref = sorted(indep, key=lambda r: (indep[r], len(r), r))
            got_costs = [indep[e.route] for e in got]
            ref_costs = [indep[r] for r in ref]
            # identical cost sequence (to rounding) and non-decreasing table costs
            if (any(abs(a - b) > 1e-12 for a, b in zip(got_costs, ref_costs))
                    or any(a.cost > b.cost for a, b in zip(got, got[1:]))):
                bad += 1
    record(3, bad == 0, f"1000 random knowledge bases, {bad} unsorted destination lists")


def _simple_paths(topo, src, dst):
    out = []

    def walk(path):
        if path[-1] == dst:
            out.append(tuple(path))
            return
        for v in topo.adjacency[path[-1]]:
            if v not in path:
                walk(path + [v])

    walk([src])
    return out


def test_criterion_04_route_enumeration_oracle():
    rng = random.Random(4)
    graphs = mismatches = checked = 0
    while graphs < 100:
        n = rng.randint(2, 8)
        edges = {(rng.randrange(v), v) for v in range(1, n)}
        edges |= {(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < 0.35}
        topo = from_edges(n, sorted(edges))
        graphs += 1
        for s, d in itertools.permutations(range(n), 2):
            paths = _simple_paths(topo, s, d)
            h = min(len(p) for p in paths) - 1
            for xi in ("1", "1.5", "2", "2.5", "4"):
                want = sorted((p for p in paths if len(p) - 1 <= h * Fraction(xi)),
                              key=lambda p: (len(p), p))
                checked += 1
                mismatches += enumerate_routes(topo, s, d, float(xi)) != want
    record(4, mismatches == 0, f"{graphs} graphs, {checked} (pair, xi) cases, {mismatches} mismatches")


def test_criterion_05_scheduler_oracle():
    topo = from_edges(3, [(0, 1), (1, 2)])
    sched = ChannelSchedule(topo)
    rng = np.random.default_rng(5)
    brute = {l: [[] for _ in range(4)] for l in range(topo.directed_link_count)}
    mismatches = 0
    for _ in range(10_000):
        link = int(rng.integers(topo.directed_link_count))
        start = float(rng.uniform(0, 50))
        dur = float(rng.exponential(0.5)) + 1e-9
        end = start + dur
        want = None
        for c, ivs in enumerate(brute[link]):
            if all(e <= start or s >= end for s, e in ivs):
                want = c
                break
        got = sched.try_reserve(link, start, dur)
        mismatches += got != want
        if want is not None:
            brute[link][want].append((start, end))
    record(5, mismatches == 0, f"10000 random reservations, {mismatches} disagreements with brute force")


def test_criterion_06_conservation_and_determinism():
    rng = random.Random(6)
    schemes = ["ahdr", "mlhdr", "retransmit", "deflect"]
    configs = []
    for i in range(20):
        topo = TOPOLOGIES[i % 2]
        configs.append(desk_config(topo, scheme=schemes[i % 4], load=round(rng.uniform(0.1, 0.9), 3),
                                   seed=rng.randrange(1, 10_000), duration=4.0))
    bad = []
    for cfg in configs:
        m1, m2 = run(cfg), run(cfg)
        csv1 = analysis.write_runs_csv([analysis.run_row(m1)])
        csv2 = analysis.write_runs_csv([analysis.run_row(m2)])
        if not (m1.conserved() and m2.conserved() and csv1 == csv2):
            bad.append((cfg.topology, cfg.scheme, cfg.load, cfg.seed))
    record(6, not bad, f"20 configs (2 topologies x 4 schemes), failures: {bad or 'none'}")


# ---------------------------------------------------------------------------
# criteria 7-9 share one desk-scale matrix
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_matrix():
    configs = [desk_config(t, scheme=s, load=l, seed=seed, duration=DESK_DURATION)
               for t in TOPOLOGIES for l in LOADS for s in ("ahdr", "mlhdr") for seed in DESK_SEEDS]
    t0 = time.perf_counter()
    rows = analysis.run_many(configs, workers=WORKERS)
    print(f"desk matrix: {len(rows)} runs in {time.perf_counter() - t0:.0f} s")
    cells = {}
    for r in rows:
        cells.setdefault((r["topology"], r["load"], r["scheme"]), []).append(r)
    return cells


def test_criterion_07_comparative_blr(desk_matrix):
    le_all, strict, parts = True, 0, []
    for t in TOPOLOGIES:
        for l in LOADS:
            a = statistics.fmean(r["blr"] for r in desk_matrix[(t, l, "ahdr")])
            m = statistics.fmean(r["blr"] for r in desk_matrix[(t, l, "mlhdr")])
            le_all &= a <= m
            strict += a < m
            parts.append(f"{t}@{l}: {a:.4f} vs {m:.4f}")
    record(7, le_all and strict >= 4,
           f"AHDR<=MLHDR everywhere={le_all}, strictly lower in {strict}/6 cells; " + "; ".join(parts))


@pytest.mark.parametrize("topology", TOPOLOGIES)
def test_criterion_08_low_load_deflection(desk_matrix, topology):
    rows = desk_matrix[(topology, 0.2, "ahdr")]
    d = sum(r["deflections"] for r in rows)
    x = sum(r["retransmissions"] for r in rows)
    ratio = d / (d + x) if d + x else 0.0
    per_seed = statistics.fmean(r["deflection_ratio"] for r in rows)
    record(8, ratio >= 0.8,
           f"{topology} load 0.2: deflection ratio {ratio:.3f} pooled ({per_seed:.3f} seed mean), needs >= 0.8")


def test_criterion_09_delay_sanity(desk_matrix):
    worst, parts = 0.0, []
    for t in TOPOLOGIES:
        for l in LOADS:
            a = statistics.fmean(r["mean_delay_s"] for r in desk_matrix[(t, l, "ahdr")])
            m = statistics.fmean(r["mean_delay_s"] for r in desk_matrix[(t, l, "mlhdr")])
            worst = max(worst, a / m)
            parts.append(f"{t}@{l}: {a * 1e3:.1f} vs {m * 1e3:.1f} ms")
    record(9, worst <= 1.5, f"max AHDR/MLHDR delay ratio {worst:.3f} (bound 1.5); " + "; ".join(parts))


# ---------------------------------------------------------------------------

def test_criterion_10_degenerate_modes():
    from obsim.protocol import TraceLog

    problems = []
    for topo in TOPOLOGIES:
        for seed in (1, 2):
            # always-deflect: a contention may only end in a NACK when no alternative is left
            cfg = desk_config(topo, load=0.5, seed=seed, duration=10.0, pinned_threshold=0.0)
            trace = TraceLog()
            run(cfg, trace=trace)
            fails = [d for _, k, _, _, d in parse_trace(trace.lines)
                     if k in ("RETRANSMIT", "DROP") and d["reason"] == "contention"]
            early = sum(1 for d in fails if d["untried"] != "0")
            if early:
                problems.append(f"{topo}/{seed}: {early} contention NACKs with alternatives left")
            # never-deflect equals pure retransmission
            hi = run(desk_config(topo, load=0.5, seed=seed, duration=10.0, pinned_threshold=1.5))
            rt = run(desk_config(topo, load=0.5, seed=seed, duration=10.0, scheme="retransmit"))
            if hi.deflections != 0 or analysis.blr(hi) != analysis.blr(rt):
                problems.append(f"{topo}/{seed}: sp_th>1 gave {hi.deflections} deflections, "
                                f"BLR {analysis.blr(hi)} vs {analysis.blr(rt)}")
    record(10, not problems, "; ".join(problems) or "sp_th=0 never NACKs with alternatives left; "
                                                    "sp_th>1 matches retransmit-only exactly")


def _exact_fit(points):
    pts = [(Fraction(x), Fraction(y)) for x, y in points]
    n = len(pts)
    sx, sy = sum(x for x, _ in pts), sum(y for _, y in pts)
    sxx = sum(x * x for x, _ in pts)
    sxy = sum(x * y for x, y in pts)
    syy = sum(y * y for _, y in pts)
    den = n * sxx - sx * sx
    slope = (n * sxy - sx * sy) / den
    intercept = (sy - slope * sx) / n
    vy = n * syy - sy * sy
    r2 = Fraction(1) if vy == 0 else (n * sxy - sx * sy) ** 2 / (den * vy)
    return float(slope), float(intercept), float(r2)


def test_criterion_11_regression_tool():
    rng = random.Random(11)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(2, 40)
        pts = [(rng.uniform(0, 1), rng.uniform(0, 1)) for _ in range(n)]
        fit = analysis.linear_fit(pts)
        want = _exact_fit(pts)
        worst = max(worst, *(abs(g - w) for g, w in zip((fit.slope, fit.intercept, fit.r_squared), want)))
    col_worst = 0.0
    for _ in range(200):
        a, b = rng.uniform(-3, 3), rng.uniform(-3, 3)
        pts = [(x, a * x + b) for x in (rng.uniform(-10, 10) for _ in range(rng.randint(2, 30)))]
        col_worst = max(col_worst, abs(analysis.linear_fit(pts).r_squared - 1.0))
    record(11, worst <= 1e-9 and col_worst <= 1e-9,
           f"max deviation from exact oracle {worst:.2e}; collinear |r2-1| max {col_worst:.2e}")


def test_criterion_12_threshold_sweep_shape():
    grid = [round(0.1 * i, 1) for i in range(11)]
    base = desk_config("nsfnet", duration=20.0)
    found, parts = False, []
    for load in (0.5, 0.7):
        res = analysis.threshold_sweep(base, load, grid, [1, 2, 3], workers=WORKERS)
        best = res.argmin()["pinned_threshold"]
        interior = best not in (grid[0], grid[-1])
        found |= interior
        curve = " ".join(f"{r['mean_blr']:.3f}" for r in res.table)
        parts.append(f"load {load}: argmin {best} ({'interior' if interior else 'endpoint'}) [{curve}]")
    record(12, found, "; ".join(parts))
