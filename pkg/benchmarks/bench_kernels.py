"""Compare the numba kernels with their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N]

Also times one short end-to-end run under each backend by re-launching the
interpreter with ``OBSIM_DISABLE_NUMBA`` set, since the switch is read at
import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from obsim import kernels
from obsim.decision import RouteSet
from obsim.topology import build_cost239

E2E = (
    "import time; from obsim.config import SimConfig; from obsim.engine import run; "
    "cfg = SimConfig(topology='nsfnet', load=0.5, duration=10.0, mean_burst_size=12.8e6); "
    "run(cfg.replace(duration=0.2)); t = time.perf_counter(); m = run(cfg); "
    "print(f'{time.perf_counter() - t:.3f} {m.bursts_generated}')"
)


def bench(fn, args_fn, repeat):
    fn(*args_fn())  # warm-up / JIT compile
    t = timeit.Timer(lambda: fn(*args_fn())).repeat(repeat=repeat, number=1)
    return min(t)


def route_sp_case():
    topo = build_cost239()
    rs = RouteSet(topo, 0, 2.0)
    dp = np.random.default_rng(0).uniform(0, 0.5, topo.directed_link_count)
    return lambda: (dp, rs.links, rs.lengths), len(rs)


def first_fit_case(n_calls=2000):
    rng = np.random.default_rng(1)
    starts = np.cumsum(rng.exponential(0.002, n_calls))
    durs = rng.exponential(0.01, n_calls)

    def loop(fn):
        s, e, c = np.zeros((4, 64)), np.zeros((4, 64)), np.zeros(4, dtype=np.int64)
        for t, d in zip(starts.tolist(), durs.tolist()):
            if fn(s, e, c, t, t + d, t, False) == kernels.GROW:
                s = np.concatenate([s, np.zeros_like(s)], axis=1)
                e = np.concatenate([e, np.zeros_like(e)], axis=1)

    return loop, n_calls


def end_to_end(disable):
    env = dict(os.environ, OBSIM_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
    secs, bursts = out.stdout.split()
    return float(secs), int(bursts)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)

    if not kernels.HAVE_NUMBA:
        print("numba unavailable or disabled; only the numpy column is meaningful")

    args_fn, n_routes = route_sp_case()
    nb = bench(kernels._route_success_batch_nb, args_fn, args.repeat)
    npy = bench(kernels.route_success_batch_numpy, args_fn, args.repeat)
    print(f"route_success_batch ({n_routes} routes): numba {nb * 1e6:8.1f} us  numpy {npy * 1e6:8.1f} us")

    loop, n_calls = first_fit_case()
    nb = bench(loop, lambda: (kernels._first_fit_nb,), args.repeat)
    npy = bench(loop, lambda: (kernels.first_fit_numpy,), args.repeat)
    print(f"first_fit ({n_calls} calls):          numba {nb * 1e3:8.2f} ms  numpy {npy * 1e3:8.2f} ms")

    if not args.skip_e2e:
        t_nb, n = end_to_end(disable=False)
        t_np, _ = end_to_end(disable=True)
        print(f"end-to-end NSFNET 10 s ({n} bursts): numba {t_nb:.2f} s  numpy {t_np:.2f} s")


if __name__ == "__main__":
    main()
