"""Time the numba kernels against their pure-numpy counterparts.

    python3 benchmarks/bench_kernels.py [--rows 5000] [--repeat 5]

Both backends are called directly, so ``E2ESO_NUMBA`` does not matter here.
The first jit call (compilation or cache load) is excluded from the timings.
"""
import argparse
import timeit

import numpy as np

from e2eso import _accel, kernels
from e2eso.decisions import GeneratorFleet


def tilt_inputs(rng, rows, m):
    P = rng.dirichlet(np.ones(m), size=rows)
    L = rng.normal(0, 3, size=(rows, m))
    return P, L


def bench(label, fn, args, repeat, number):
    fn(*args)  # warm up
    best = min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number
    return label, best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)

    cases = []
    for m, eps in ((11, 0.025), (11, 0.25), (20, 0.1)):
        P, L = tilt_inputs(rng, args.rows, m)
        cases.append((f"kl_tilt  m={m:<3d} eps={eps:<6}", kernels.kl_tilt_batch_jit,
                      kernels.kl_tilt_batch_np, (P, L, eps)))
    fleet = GeneratorFleet.reference()
    yhat = rng.uniform(-0.5, 4.5, args.rows * 10)
    cases.append((f"merit_order n={yhat.size}", kernels.merit_order_batch_jit,
                   kernels.merit_order_batch_np, (fleet.order, fleet.capacities, 4.0, yhat)))

    print(f"numba available: {_accel.NUMBA_AVAILABLE}   rows: {args.rows}")
    print(f"{'kernel':34s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for label, jit, np_fn, inputs in cases:
        _, tj = bench(label, jit, inputs, args.repeat, 3)
        _, tn = bench(label, np_fn, inputs, args.repeat, 3)
        print(f"{label:34s} {tj * 1e3:11.3f} {tn * 1e3:11.3f} {tn / tj:8.1f}x")


if __name__ == "__main__":
    main()
