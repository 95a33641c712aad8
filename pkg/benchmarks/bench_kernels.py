"""Compare the numba and numpy kernel backends.

Kernel timings call both tables directly in one process.  The end-to-end
timing (one forward + reverse pass of the unrolled loss) runs in two
subprocesses, one with GRAPHMFG_DISABLE_NUMBA=1, because the backend is
fixed at import.

    python benchmarks/bench_kernels.py [--sizes 11 31 61] [--repeat 20]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from graphmfg import DomainShape, build_lattice
from graphmfg import kernels

E2E = """
import time, numpy as np
from graphmfg import DomainShape, PotentialSpec, build_lattice, gaussian_density, value_and_grad
from graphmfg import kernels
g = build_lattice({rows}, {rows}, DomainShape.square(-3, 3))
mu0 = gaussian_density(g, (-1.2, -1.2), 0.2).rho
spec = PotentialSpec(lambda_K=0.5, terminal="L1", target=gaussian_density(g, (1.2, 1.2), 0.2).rho, lambda_G=5000)
s0 = 0.01 * g.coords[:, 0]
value_and_grad(s0, mu0, spec, g, 0.5, 5)  # compile / warm caches
t = time.perf_counter()
for _ in range({repeat}):
    value_and_grad(s0, mu0, spec, g, 0.5, 100)
print(kernels.BACKEND, (time.perf_counter() - t) / {repeat})
"""


def kernel_table(rows: int, repeat: int) -> list[tuple]:
    g = build_lattice(rows, rows, DomainShape.square(-3, 3))
    rng = np.random.default_rng(0)
    rho, s, gn = rng.random(g.n), rng.normal(size=g.n), rng.normal(size=g.n)
    args = (g.src, g.dst, g.w)
    calls = {
        "edge_energy": lambda K: K["edge_energy"](rho, s, *args),
        "edge_energy_vjp": lambda K: K["edge_energy_vjp"](1.0, rho, s, *args),
        "continuity": lambda K: K["continuity"](rho, s, *args),
        "continuity_vjp": lambda K: K["continuity_vjp"](gn, rho, s, *args),
        "hj_quadratic": lambda K: K["hj_quadratic"](s, *args),
        "hj_quadratic_vjp": lambda K: K["hj_quadratic_vjp"](gn, s, *args),
    }
    out = []
    for name, call in calls.items():
        call(kernels.NUMBA_KERNELS)  # trigger compilation outside the timing
        t_nb = min(timeit.repeat(lambda: call(kernels.NUMBA_KERNELS), number=repeat, repeat=3)) / repeat
        t_np = min(timeit.repeat(lambda: call(kernels.NUMPY_KERNELS), number=repeat, repeat=3)) / repeat
        out.append((rows, g.m, name, t_nb, t_np))
    return out


def end_to_end(rows: int, repeat: int) -> dict[str, float]:
    res = {}
    for flag in ("0", "1"):
        env = dict(os.environ, GRAPHMFG_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", E2E.format(rows=rows, repeat=repeat)],
                              env=env, capture_output=True, text=True, check=True)
        name, sec = proc.stdout.split()
        res[name] = float(sec)
    return res


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[11, 31, 61])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba unavailable or disabled; both tables are the numpy path")
    print(f"{'grid':>5} {'edges':>6} {'kernel':<18} {'numba us':>10} {'numpy us':>10} {'speedup':>8}")
    for rows in args.sizes:
        for r, m, name, t_nb, t_np in kernel_table(rows, args.repeat):
            print(f"{r:>5} {m:>6} {name:<18} {t_nb * 1e6:>10.1f} {t_np * 1e6:>10.1f} {t_np / t_nb:>8.2f}")
    print()
    print(f"{'grid':>5} {'numba ms':>10} {'numpy ms':>10}   (value_and_grad, M=100)")
    for rows in args.sizes:
        e = end_to_end(rows, max(1, args.repeat // 10))
        print(f"{rows:>5} {e.get('numba', float('nan')) * 1e3:>10.1f} {e['numpy'] * 1e3:>10.1f}")


if __name__ == "__main__":
    main()
