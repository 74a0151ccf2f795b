"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_backends.py [--repeat 5] [--quick]

Each case is timed with ``timeit`` on both backends over identical inputs;
the table reports the best per-call time and the speedup.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from gpclogz import kernels
from gpclogz.ais import AisConfig, ais_for_data
from gpclogz.ep import ep_fit, reference_target
from gpclogz.linalg import KernelSpec, build_kernel
from gpclogz.mcmc import RmhmcConfig


def problem(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    y = np.where(X[:, 0] + 0.5 * rng.standard_normal(n) > 0, 1.0, -1.0)
    K = build_kernel(X, KernelSpec(1.0, 2.0, 1e-6))
    return y, K


def cases(quick: bool):
    sizes = (20, 100) if quick else (20, 100, 200)
    for n in sizes:
        y, K = problem(n)
        t = reference_target(y, K, ep_fit(y, K), beta=0.5)
        t.packed  # noqa: B018
        x = 0.5 * np.random.default_rng(1).standard_normal(n)
        noise = np.random.default_rng(2).standard_normal(n)

        yield f"metric N={n}", lambda be, t=t, x=x, n=n: be.Workspace(n).metric(t, x)
        yield f"rmhmc_step N={n} (L=10, f=5)", (
            lambda be, t=t, x=x, n=n, noise=noise: be.Workspace(n).rmhmc_step(t, x, noise, 0.5, 0.1, 10, 5))
        yield f"hmc_step N={n} (L=10)", (
            lambda be, t=t, x=x, n=n, noise=noise: be.Workspace(n).hmc_step(t, x, noise, 0.5, 0.1, 10, np.ones(n)))

        P = np.linalg.inv(K + np.eye(n))
        Z0 = np.tile(y, (200, 1))

        def sweeps(be, P=P, Z0=Z0, y=y):
            Z = Z0.copy()
            be.gibbs_sweeps(Z, P, y, np.ones(y.size, dtype=bool), 2, np.random.default_rng(3))

        yield f"gibbs 2 sweeps R=200 N={n}", sweeps

    y, K = problem(5)
    approx = ep_fit(y, K)
    cfg = AisConfig(b_count=50, runs=4, kernel="rmhmc", kernel_cfg=RmhmcConfig(0.1, 10, 5))
    yield "AIS-RMHMC N=5 (B=50, 4 runs)", lambda be: ais_for_data(y, K, cfg, 0, approx, backend=be.BACKEND)


def best_time(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="skip the largest sizes")
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    cy, py = kernels.get_backend("cython"), kernels.get_backend("python")
    print(f"{'case':34s} {'cython':>12s} {'python':>12s} {'speedup':>8s}")
    for name, fn in cases(args.quick):
        tc = best_time(lambda: fn(cy), args.repeat)
        tp = best_time(lambda: fn(py), args.repeat)
        print(f"{name:34s} {tc * 1e3:10.3f}ms {tp * 1e3:10.3f}ms {tp / tc:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
