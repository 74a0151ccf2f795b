"""Command-line entry point: ``gpclogz {bench,check-oracle,ep,sample}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bench as _bench
from . import kernels
from .data import DataError, load_dataset
from .ep import EpError, ep_fit
from .linalg import KernelSpec, build_kernel
from .mcmc import HmcConfig, RmhmcConfig, gibbs_chain, hmc_chain, latent_mean_from_z, rmhmc_chain
from .target import TemperedTarget

BENCH_EPILOG = """\
config file (YAML):
  kernel:      lengthscale (1.0), amplitude (1.0), jitter (1e-8 * amplitude^2)
  data:        one of  path: file.csv
                       synthetic: {n: 100, d: 2, separation: 2.0, seed: 0}
                       inputs: [[...], ...] with labels: [...]
  repetitions: 1       seed: 0
  methods:     a list of names, or a mapping name -> overrides
    ep               tol 1e-6, max_sweeps 200
    ais-hmc-q        b_count 100, beta_min 1e-4, runs 100, epsilon 0.1, l_max 10, mass 1.0
    ais-hmc-prior    same as ais-hmc-q
    ais-rmhmc-q      b_count 100, beta_min 1e-4, runs 100, epsilon 0.1, l_max 10, f_max 5
    ais-rmhmc-prior  same as ais-rmhmc-q
    rm               r_particles 1000, resample_threshold 0.9, sweeps_per_move 2,
                     order index, slice_move false

repetition r runs with seed (seed + r). Exit status is 1 if any method failed.
"""


def _common(p: argparse.ArgumentParser, out_default: str | None = None):
    p.add_argument("--seed", type=int, default=None, help="master seed (u64); default 0 or the config's")
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads inside a method")
    p.add_argument("--format", choices=("csv", "jsonl", "both"), default="both",
                   help="output format")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _kernel_args(p: argparse.ArgumentParser):
    p.add_argument("--lengthscale", type=float, default=1.0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--jitter", type=float, default=None, help="diagonal jitter (default 1e-8 * amplitude^2)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="gpclogz", description="Marginal likelihood estimators "
                                     "for Gaussian-process probit classification.")
    parser.add_argument("--backend", choices=("cython", "python"), default=None,
                        help=f"kernel backend (default: {kernels.BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run estimators from a config file", epilog=BENCH_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config", help="YAML config file")
    _common(p, out_default="bench_out")

    p = sub.add_parser("check-oracle", help="compare estimators with exact log Z for N <= 3",
                       formatter_class=fmt)
    p.add_argument("--n", type=int, default=2, choices=(1, 2, 3), help="number of data points")
    p.add_argument("--rho", type=float, default=0.8, help="off-diagonal of the unit-diagonal K")
    p.add_argument("--labels", default=None, help="comma-separated +1/-1 labels (default all +1)")
    p.add_argument("--quick", action="store_true", help="EP and RM only")
    _common(p)

    p = sub.add_parser("ep", help="fit EP and print its log Z", formatter_class=fmt)
    p.add_argument("data", help="CSV file f1,...,fD,label")
    _kernel_args(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-sweeps", type=int, default=200)
    _common(p)

    p = sub.add_parser("sample", help="draw posterior samples", formatter_class=fmt)
    p.add_argument("data", help="CSV file f1,...,fD,label")
    p.add_argument("--method", choices=("hmc", "rmhmc", "gibbs"), required=True)
    _kernel_args(p)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--l-max", type=int, default=10)
    p.add_argument("--f-max", type=int, default=5)
    _common(p)
    return parser


def _setup_logging(verbose: int):
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(args):
    ds = load_dataset(args.data)
    K = build_kernel(ds.inputs, KernelSpec(args.lengthscale, args.amplitude, args.jitter))
    return ds, K


def cmd_bench(args) -> int:
    cfg = _bench.BenchConfig.from_file(args.config, seed=args.seed)

    def show(rec):
        tag = f"ERROR {rec.error}" if rec.error else f"{rec.log_z:.6f}"
        print(f"{rec.method:16s} seed={rec.seed:<6d} t={rec.wall_time_s:9.3f}s  log Z = {tag}")

    records = list(_bench.iter_bench(cfg, threads=args.threads, on_record=show,
                                        backend=args.backend))
    summary = _bench.summarize(records)
    for s in summary:
        print(f"summary {s['method']:16s} mean={s['mean_log_z']:.6f} std={s['std_log_z']:.6f} "
              f"runs={s['n_runs']} errors={s['n_errors']}")
    if args.out:
        for p in _bench.write_outputs(records, summary, args.out, args.format, cfg):
            print(f"wrote {p}")
    errors = [r for r in records if r.error]
    for r in errors:
        print(f"error: {r.method} seed={r.seed}: {r.error}", file=sys.stderr)
    return 1 if errors else 0


def cmd_check_oracle(args) -> int:
    n = args.n
    K = np.full((n, n), args.rho)
    np.fill_diagonal(K, 1.0)
    y = np.ones(n) if args.labels is None else np.array([float(v) for v in args.labels.split(",")])
    if y.shape[0] != n:
        raise ValueError(f"--labels has {y.shape[0]} entries, expected {n}")
    methods = None
    if args.quick:
        methods = {k: v for k, v in _bench.ORACLE_SETTINGS.items() if k in ("ep", "rm")}
    rep = _bench.check_oracle(K, y, seed=args.seed or 0, methods=methods,
                              threads=args.threads, backend=args.backend)
    print(f"reference log Z (quadrature) = {rep['reference']:.9f}")
    print(f"closed form                  = {rep['closed_form']:.9f}")
    failed = False
    for row in rep["rows"]:
        if "error" in row:
            failed = True
            print(f"{row['method']:14s} ERROR {row['error']}")
        else:
            print(f"{row['method']:14s} log Z = {row['log_z']:.6f}  deviation = {row['deviation']:+.6f}"
                  f"  ({row['wall_time_s']:.2f}s)")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "oracle.json").write_text(json.dumps(rep, indent=2) + "\n")
    return 1 if failed else 0


def cmd_ep(args) -> int:
    ds, K = _load(args)
    a = ep_fit(ds.labels, K, tol=args.tol, max_sweeps=args.max_sweeps)
    print(f"n={ds.n} log Z (EP) = {a.log_z_ep:.9f} sweeps={a.iterations} converged={a.converged}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        out = {"log_z_ep": a.log_z_ep, "iterations": a.iterations, "converged": a.converged,
               "mu": a.mu.tolist(), "sigma_tilde": a.sigma_tilde.tolist()}
        (Path(args.out) / "ep.json").write_text(json.dumps(out, indent=2) + "\n")
    return 0 if a.converged else 1


def cmd_sample(args) -> int:
    ds, K = _load(args)
    seed = args.seed or 0
    total = args.burn_in + args.iterations
    if args.method == "gibbs":
        z = gibbs_chain(K, ds.labels, total, rng_seed=seed, backend=args.backend)[args.burn_in:]
        samples = z
        mean_x = latent_mean_from_z(K, z)
        print("gibbs on z; posterior mean of x via E[x | z]")
    else:
        target = TemperedTarget.from_prior(ds.labels, K, beta=1.0)
        x0 = np.zeros(ds.n)
        if args.method == "hmc":
            out = hmc_chain(target, x0, HmcConfig(args.epsilon, args.l_max), total, seed, args.backend)
        else:
            out = rmhmc_chain(target, x0, RmhmcConfig(args.epsilon, args.l_max, args.f_max), total,
                              seed, args.backend)
        samples = out.samples[args.burn_in:]
        mean_x = samples.mean(axis=0)
        print(f"{args.method}: acceptance rate {out.accept_rate:.3f}")
    print("posterior mean of x (first 10):", np.array2string(mean_x[:10], precision=4))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        np.savetxt(Path(args.out) / f"samples_{args.method}.csv", samples, delimiter=",")
    return 0


COMMANDS = {"bench": cmd_bench, "check-oracle": cmd_check_oracle, "ep": cmd_ep, "sample": cmd_sample}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a u64", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (_bench.ConfigError, DataError, EpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
