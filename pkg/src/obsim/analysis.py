"""Run metrics, CSV output, threshold/weight sweeps and the regression tool."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError
from .metrics import SimMetrics

__all__ = [
    "SimMetrics",
    "RegressionFit",
    "blr",
    "deflection_ratio",
    "mean_end_to_end_delay",
    "mean_offset",
    "linear_fit",
    "run_row",
    "RUN_COLUMNS",
    "write_runs_csv",
    "aggregate_rows",
    "compare",
    "threshold_sweep",
    "weight_sweep",
    "SweepResult",
]


class MetricsError(ValueError):
    pass


def blr(m):
    """Lost unique bursts over generated bursts."""
    if m.bursts_generated <= 0:
        raise MetricsError("BLR undefined: no bursts generated")
    return m.bursts_lost / m.bursts_generated


def deflection_ratio(m):
    total = m.deflections + m.retransmissions
    return m.deflections / total if total else 0.0


def mean_end_to_end_delay(m):
    if not m.delay_samples:
        raise MetricsError("no delivered bursts")
    return math.fsum(d for _, d in m.delay_samples) / len(m.delay_samples)


def mean_offset(m):
    if not m.offset_samples:
        raise MetricsError("no offset samples")
    return math.fsum(m.offset_samples) / len(m.offset_samples)


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float

    def __call__(self, x):
        return self.slope * x + self.intercept


def linear_fit(points):
    """Ordinary least squares line with the squared Pearson coefficient.

    A constant ``y`` is fitted exactly, so ``r_squared`` is reported as 1.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("linear_fit needs at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("linear_fit needs at least two distinct x values")
    sxy = float(dx @ dy)
    syy = float(dy @ dy)
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    r2 = 1.0 if syy == 0.0 else min(1.0, max(0.0, sxy * sxy / (sxx * syy)))
    return RegressionFit(slope, intercept, r2)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

RUN_COLUMNS = ["scheme", "topology", "load", "seed", "blr", "mean_delay_s", "deflection_ratio",
               "mean_offset_s", "deflections", "retransmissions", "generated", "delivered", "lost"]


def fmt(value):
    """Decimal text with at least 9 significant digits for floats."""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:#.12g}"
    return str(value)


def _safe(fn, m):
    try:
        return fn(m)
    except MetricsError:
        return float("nan")


def run_row(m):
    return {
        "scheme": m.scheme,
        "topology": m.topology,
        "load": float(m.load),
        "seed": m.seed,
        "blr": _safe(blr, m),
        "mean_delay_s": _safe(mean_end_to_end_delay, m),
        "deflection_ratio": deflection_ratio(m),
        "mean_offset_s": _safe(mean_offset, m),
        "deflections": m.deflections,
        "retransmissions": m.retransmissions,
        "generated": m.bursts_generated,
        "delivered": m.bursts_delivered,
        "lost": m.bursts_lost,
    }


def write_csv(rows, columns, fh=None):
    """Write rows to ``fh`` (or return the text when ``fh`` is None)."""
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue() if fh is None else None


def write_runs_csv(rows, fh=None):
    return write_csv(rows, RUN_COLUMNS, fh)


def aggregate_rows(rows):
    """Per-(scheme, topology, load) means of the numeric run columns."""
    groups = {}
    for r in rows:
        groups.setdefault((r["scheme"], r["topology"], r["load"]), []).append(r)
    out = []
    for (scheme, topo, load), rs in groups.items():
        agg = {"scheme": scheme, "topology": topo, "load": load, "seed": "mean"}
        for c in RUN_COLUMNS[4:]:
            vals = [float(r[c]) for r in rs if not math.isnan(float(r[c]))]
            agg[c] = math.fsum(vals) / len(vals) if vals else float("nan")
        out.append(agg)
    return out


# ---------------------------------------------------------------------------
# experiment fan-out
# ---------------------------------------------------------------------------

def _run_config(config):
    from .engine import run
    return run_row(run(config))


def run_many(configs, workers=1):
    """Run configs and return their rows in input order."""
    configs = list(configs)
    if workers <= 1 or len(configs) <= 1:
        return [_run_config(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_config, configs))


def compare(base, schemes, loads, seeds, workers=1):
    """Full factorial scheme x load x seed; returns (raw_rows, aggregate_rows)."""
    if not schemes or not loads or not seeds:
        raise ValueError("compare needs at least one scheme, load and seed")
    configs = [base.replace(scheme=s, load=l, seed=seed) for s in schemes for l in loads for seed in seeds]
    for c in configs:
        c.validate()
    raw = run_many(configs, workers)
    return raw, aggregate_rows(raw)


@dataclass
class SweepResult:
    columns: list
    raw: list  # one row per (grid point, seed)
    table: list  # one row per grid point: grid columns + mean_blr, std_blr, runs

    def argmin(self):
        best = min(self.table, key=lambda r: (r["mean_blr"], [r[c] for c in self.columns]))
        return {c: best[c] for c in self.columns}

    def to_csv(self, fh=None):
        return write_csv(self.table, self.columns + ["mean_blr", "std_blr", "runs"], fh)


def _sweep(base, points, columns, seeds, workers):
    configs = [base.replace(**dict(zip(columns, p)), seed=s) for p in points for s in seeds]
    raw_rows = run_many(configs, workers)
    raw, table = [], []
    it = iter(raw_rows)
    for p in points:
        blrs = []
        for s in seeds:
            row = next(it)
            raw.append({**dict(zip(columns, p)), "seed": s, "blr": row["blr"]})
            blrs.append(row["blr"])
        table.append({**dict(zip(columns, p)),
                      "mean_blr": math.fsum(blrs) / len(blrs),
                      "std_blr": statistics.stdev(blrs) if len(blrs) > 1 else 0.0,
                      "runs": len(blrs)})
    return SweepResult(list(columns), raw, table)


def threshold_sweep(base, load, thresholds, seeds, workers=1):
    """BLR versus a pinned decision threshold (adaptive threshold bypassed)."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("threshold grid is empty")
    if not seeds:
        raise ValueError("need at least one seed")
    base = base.replace(load=load, scheme="ahdr")
    for t in thresholds:
        base.replace(pinned_threshold=t).validate()
    return _sweep(base, [(t,) for t in thresholds], ["pinned_threshold"], list(seeds), workers)


def weight_sweep(base, grid, seeds, workers=1):
    """BLR over (beta_blr, beta_u) pairs with the adaptive threshold active."""
    grid = [(float(b), float(u)) for b, u in grid]
    if not grid:
        raise ValueError("weight grid is empty")
    if not seeds:
        raise ValueError("need at least one seed")
    for b, u in grid:
        if b < 0 or u < 0 or b + u > 1.0 + 1e-9:
            raise ConfigError("beta_u", f"grid point ({b}, {u}) violates beta_blr + beta_u <= 1")
    base = dataclasses.replace(base.replace(scheme="ahdr"), pinned_threshold=None)
    return _sweep(base, grid, ["beta_blr", "beta_u"], list(seeds), workers)
