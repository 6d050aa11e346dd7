"""Compare the compiled and numpy interpolation kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times the banded congruence on a full 257-point matrix at the default
interpolation order, then one complete round trip of a two-pulse network
with each backend selected in turn.
"""

import argparse
import time

import numpy as np

from cimtraj import _kernels_py, kernels
from cimtraj.channels import displace, homodyne_measure, psa_step
from cimtraj.config import RunConfig
from cimtraj.engine import round_params
from cimtraj.grid import DEFAULT_INTERP_ORDER, coherent_state, make_grid, squeezed_vacuum
from cimtraj.interp import lagrange_stencil


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_case(grid, order):
    rho = squeezed_vacuum(grid, 0.8, 1.0).values
    start, w = lagrange_stencil(grid, 0.97 * grid.x + 0.1, order)
    padded = np.pad(rho, order)
    shift = order
    return padded, start + shift, w


def round_case(grid):
    cfg = RunConfig()
    params = round_params(cfg, 40)
    rho = coherent_state(grid, 2.0)

    def one_round():
        r = psa_step(rho, params.psa)
        _, r = homodyne_measure(r, cfg.T, 0.3)
        displace(r, 0.01)

    return one_round


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    grid = make_grid()
    order = DEFAULT_INTERP_ORDER
    padded, start, w = kernel_case(grid, order)
    impls = {"python": _kernels_py}
    if kernels.BACKEND == "cython":
        from cimtraj import _kernels as compiled

        impls["cython"] = compiled
    else:
        print("compiled extension not available; timing the numpy fallback only")

    ref = kernels.banded_congruence(padded, start, w, start, w, impl=_kernels_py)
    print(f"banded congruence, n={grid.n_points}, order={order}")
    results = {}
    for name, impl in impls.items():
        out = kernels.banded_congruence(padded, start, w, start, w, impl=impl)
        err = float(np.abs(out - ref).max())
        t = best_of(lambda: kernels.banded_congruence(padded, start, w, start, w, impl=impl), args.repeat)
        results[name] = t
        print(f"  {name:7s} {t * 1e3:8.3f} ms   max |diff| vs numpy {err:.1e}")

    print("one round trip (PSA, measurement, displacement)")
    saved = kernels._impl
    try:
        for name, impl in impls.items():
            kernels._impl = impl
            run = round_case(grid)
            run()  # fill caches
            t = best_of(run, max(3, args.repeat // 4))
            print(f"  {name:7s} {t * 1e3:8.3f} ms")
    finally:
        kernels._impl = saved
    if "cython" in results:
        print(f"kernel speedup {results['python'] / results['cython']:.1f}x")


if __name__ == "__main__":
    main()
