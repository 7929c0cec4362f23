"""Compare the compiled codec kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times each kernel at a few model sizes and one full CQ run on the desk
problem, once per backend (the engine run re-imports in a subprocess with
CQGGADMM_PURE_PYTHON set accordingly).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cqggadmm import _kernels_py as py

try:
    from cqggadmm import _ckernels as ck
except ImportError:
    ck = None

ENGINE_SNIPPET = """
import time
from cqggadmm.compression import CensorPolicy
from cqggadmm.engine import RunConfig, run
from cqggadmm.kernels import BACKEND
from cqggadmm.objectives import generate_synthetic, make_objectives, partition_uniform
from cqggadmm.topology import generate_random_bipartite

topo = generate_random_bipartite(10, 10, 0.4, 0)
data, _ = generate_synthetic("linear", 1200, 50, 0.1, 0)
objs = make_objectives("linear", partition_uniform(data, 20))
cfg = RunConfig("cq_ggadmm", rho=5.0, max_iters=300, censor=CensorPolicy())
t0 = time.perf_counter()
run(cfg, topo, objs, keep_records=False)
print(BACKEND, time.perf_counter() - t0)
"""


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':18s} {'d':>7s} {'python us':>11s} {'cython us':>11s} {'speedup':>8s}")
    for d in (50, 1_000, 100_000):
        bits = 5
        levels = (1 << bits) - 1
        c = rng.uniform(0, levels, d)
        u = rng.random(d)
        codes = py.stochastic_round(c, u, levels)
        packed = py.pack_codes(codes, bits)
        cases = {
            "counter_uniforms": lambda m: m.counter_uniforms(1, 2, 3, d),
            "stochastic_round": lambda m: m.stochastic_round(c, u, levels),
            "pack_codes": lambda m: m.pack_codes(codes, bits),
            "unpack_codes": lambda m: m.unpack_codes(packed, d, bits),
        }
        for name, call in cases.items():
            t_py = _time(lambda: call(py), repeat) * 1e6
            if ck is None:
                print(f"{name:18s} {d:7d} {t_py:11.1f} {'n/a':>11s}")
                continue
            t_c = _time(lambda: call(ck), repeat) * 1e6
            print(f"{name:18s} {d:7d} {t_py:11.1f} {t_c:11.1f} {t_py / t_c:7.1f}x")


def bench_engine():
    print("\nCQ run, 300 iterations, N=20, d=50:")
    for pure in ("1", "0"):
        env = dict(os.environ, CQGGADMM_PURE_PYTHON=pure)
        out = subprocess.run(
            [sys.executable, "-c", ENGINE_SNIPPET], env=env, capture_output=True, text=True, check=True
        )
        backend, seconds = out.stdout.split()
        print(f"  {backend:7s} {float(seconds):.3f} s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    bench_kernels(args.repeat)
    bench_engine()


if __name__ == "__main__":
    main()
