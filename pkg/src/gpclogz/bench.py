"""Benchmark harness: run registered estimators on one dataset and record (time, log Z) rows."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import oracle
from .ais import AisConfig, ais_for_data
from .data import Dataset, load_dataset, synthetic
from .ep import EpError, ep_fit
from .linalg import KernelSpec, build_kernel
from .mcmc import HmcConfig, RmhmcConfig
from .smc import RmConfig, rm_estimate

log = logging.getLogger(__name__)

CSV_COLUMNS = ("method", "seed", "n_data", "wall_time_s", "log_z", "config_digest")
SUMMARY_COLUMNS = ("method", "n_runs", "n_errors", "mean_log_z", "std_log_z", "mean_wall_time_s")

_AIS = {"b_count": 100, "beta_min": 1e-4, "runs": 100, "epsilon": 0.1, "l_max": 10}

METHOD_DEFAULTS: dict[str, dict] = {
    "ep": {"tol": 1e-6, "max_sweeps": 200},
    "ais-hmc-q": {**_AIS, "mass": 1.0},
    "ais-hmc-prior": {**_AIS, "mass": 1.0},
    "ais-rmhmc-q": {**_AIS, "f_max": 5},
    "ais-rmhmc-prior": {**_AIS, "f_max": 5},
    "rm": {"r_particles": 1000, "resample_threshold": 0.9, "sweeps_per_move": 2,
           "order": "index", "slice_move": False},
}

KERNEL_DEFAULTS = {"lengthscale": 1.0, "amplitude": 1.0, "jitter": None}
SYNTHETIC_DEFAULTS = {"n": 100, "d": 2, "separation": 2.0, "seed": 0}


class ConfigError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def _merge(defaults: dict, given: dict | None, where: str) -> dict:
    given = dict(given or {})
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


@dataclass(frozen=True)
class BenchConfig:
    kernel: dict
    data: dict
    methods: tuple
    repetitions: int = 1
    seed: int = 0

    @classmethod
    def from_mapping(cls, raw: dict, seed: int | None = None) -> BenchConfig:
        """Validate a parsed config; every error is raised before anything runs."""
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(raw) - {"kernel", "data", "methods", "repetitions", "seed"}
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        kernel = _merge(KERNEL_DEFAULTS, raw.get("kernel"), "kernel")
        try:
            KernelSpec(kernel["lengthscale"], kernel["amplitude"], kernel["jitter"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"kernel: {exc}") from None
        data = raw.get("data") or {}
        sources = [k for k in ("path", "synthetic", "inputs") if k in data]
        if len(sources) != 1:
            raise ConfigError("data needs exactly one of 'path', 'synthetic', 'inputs'")
        if "synthetic" in data:
            data = {"synthetic": _merge(SYNTHETIC_DEFAULTS, data["synthetic"], "data.synthetic")}
        elif "inputs" in data:
            if set(data) != {"inputs", "labels"}:
                raise ConfigError("inline data needs exactly 'inputs' and 'labels'")
        elif set(data) != {"path"}:
            raise ConfigError("data.path does not take extra keys")
        methods_raw = raw.get("methods")
        if not methods_raw:
            raise ConfigError("no methods configured")
        if isinstance(methods_raw, list):
            methods_raw = {m: {} for m in methods_raw}
        methods = []
        for name, params in methods_raw.items():
            if name not in METHOD_DEFAULTS:
                raise ConfigError(f"unknown method {name!r}; known: {sorted(METHOD_DEFAULTS)}")
            merged = _merge(METHOD_DEFAULTS[name], params, f"methods.{name}")
            try:
                _build_method_config(name, merged, n=1)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"methods.{name}: {exc}") from None
            methods.append((name, merged))
        reps = raw.get("repetitions", 1)
        if not isinstance(reps, int) or reps < 1:
            raise ConfigError("repetitions must be a positive integer")
        s = raw.get("seed", 0) if seed is None else seed
        if not isinstance(s, int) or s < 0:
            raise ConfigError("seed must be a non-negative integer")
        return cls(kernel=kernel, data=data, methods=tuple(methods), repetitions=reps, seed=s)

    @classmethod
    def from_file(cls, path, seed: int | None = None) -> BenchConfig:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        return cls.from_mapping(raw, seed=seed)

    def as_dict(self) -> dict:
        return {
            "kernel": self.kernel, "data": self.data,
            "methods": {name: params for name, params in self.methods},
            "repetitions": self.repetitions, "seed": self.seed,
        }

    def method_digest(self, name: str, params: dict) -> str:
        return digest({"kernel": self.kernel, "data": self.data, "method": name, "params": params})

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel["lengthscale"], self.kernel["amplitude"], self.kernel["jitter"])

    def dataset(self) -> Dataset:
        if "path" in self.data:
            return load_dataset(self.data["path"])
        if "synthetic" in self.data:
            s = self.data["synthetic"]
            return synthetic(s["n"], s["d"], s["separation"], s["seed"])
        X = np.atleast_2d(np.asarray(self.data["inputs"], dtype=float))
        if X.shape[0] == 1 and len(self.data["labels"]) > 1:
            X = X.T
        return Dataset(inputs=X, labels=np.asarray(self.data["labels"], dtype=float))


@dataclass
class RunRecord:
    method: str
    seed: int
    n_data: int
    wall_time_s: float
    log_z: float
    config_digest: str
    error: str | None = None
    config: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def csv_row(self) -> list:
        return [self.method, self.seed, self.n_data, repr(self.wall_time_s), repr(self.log_z),
                self.config_digest]


@dataclass
class Problem:
    """Data, kernel matrix and the shared EP fit (or the error it raised)."""

    y: np.ndarray
    K: np.ndarray
    approx: object = None
    ep_error: str | None = None
    ep_time_s: float = 0.0

    @classmethod
    def prepare(cls, y, K, fit_ep: bool = True, tol: float = 1e-6, max_sweeps: int = 200) -> Problem:
        prob = cls(y=np.asarray(y, dtype=float), K=np.asarray(K, dtype=float))
        if fit_ep:
            t0 = time.perf_counter()
            try:
                prob.approx = ep_fit(prob.y, prob.K, tol=tol, max_sweeps=max_sweeps)
            except (EpError, np.linalg.LinAlgError, ValueError) as exc:
                prob.ep_error = f"{type(exc).__name__}: {exc}"
            prob.ep_time_s = time.perf_counter() - t0
        return prob


def _build_method_config(name: str, p: dict, n: int):
    if name == "ep":
        if p["tol"] <= 0 or p["max_sweeps"] < 1:
            raise ValueError("tol must be positive and max_sweeps >= 1")
        return p
    if name == "rm":
        return RmConfig(p["r_particles"], p["resample_threshold"], p["sweeps_per_move"], 0,
                        p["order"], bool(p["slice_move"]))
    kernel = "hmc" if "-hmc-" in name else "rmhmc"
    if kernel == "hmc":
        mass = np.broadcast_to(np.asarray(p["mass"], dtype=float), (n,)) if np.ndim(p["mass"]) == 0 \
            else np.asarray(p["mass"], dtype=float)
        kcfg = HmcConfig(p["epsilon"], p["l_max"], mass)
    else:
        kcfg = RmhmcConfig(p["epsilon"], p["l_max"], p["f_max"])
    return AisConfig(p["b_count"], p["beta_min"], p["runs"], kernel, kcfg,
                     "ep_q" if name.endswith("-q") else "prior")


def run_method(name: str, params: dict, prob: Problem, seed: int, threads: int = 1,
               backend: str | None = None):
    """Run one estimator; returns ``(log_z, wall_time_s, extras)``. Errors propagate."""
    n = prob.y.shape[0]
    cfg = _build_method_config(name, params, n)
    if name == "ep":
        if prob.approx is None:
            raise EpError(prob.ep_error or "EP was not fitted")
        a = prob.approx
        return a.log_z_ep, prob.ep_time_s, {"iterations": a.iterations, "converged": a.converged}
    if name == "rm":
        cfg = RmConfig(cfg.r_particles, cfg.resample_threshold, cfg.sweeps_per_move, seed,
                       cfg.order, cfg.slice_move)
        t0 = time.perf_counter()
        lz, diag = rm_estimate(prob.y, prob.K, cfg, threads=threads, backend=backend)
        dt = time.perf_counter() - t0
        return lz, dt, {"n_resamples": diag.n_resamples}
    if cfg.anneal_from == "ep_q" and prob.approx is None:
        raise EpError(prob.ep_error or "EP was not fitted")
    t0 = time.perf_counter()
    res = ais_for_data(prob.y, prob.K, cfg, seed, prob.approx, threads=threads, backend=backend)
    dt = time.perf_counter() - t0
    if not math.isfinite(res.log_z):
        raise FloatingPointError("every AIS run produced a non-finite weight")
    return res.log_z, dt, {
        "ess": res.ess, "mean_accept": float(np.mean(res.per_beta_accept)),
        "n_failed_runs": res.n_failed, "ep_fit_time_s": prob.ep_time_s if cfg.anneal_from == "ep_q" else 0.0,
    }


def iter_bench(cfg: BenchConfig, threads: int = 1, on_record: Callable | None = None,
               backend: str | None = None):
    """Yield one :class:`RunRecord` per method and repetition; failures become NaN rows."""
    ds = cfg.dataset()
    K = build_kernel(ds.inputs, cfg.kernel_spec())
    need_ep = any(name == "ep" or name.endswith("-q") for name, _ in cfg.methods)
    ep_params = dict(cfg.methods).get("ep", METHOD_DEFAULTS["ep"])
    prob = Problem.prepare(ds.labels, K, fit_ep=need_ep, **ep_params)
    for rep in range(cfg.repetitions):
        seed = cfg.seed + rep
        for name, params in cfg.methods:
            rec = RunRecord(method=name, seed=seed, n_data=ds.n, wall_time_s=0.0, log_z=math.nan,
                            config_digest=cfg.method_digest(name, params), config=copy.deepcopy(params))
            try:
                rec.log_z, rec.wall_time_s, rec.extras = run_method(name, params, prob, seed, threads, backend)
            except Exception as exc:  # a failing method must not stop the benchmark
                log.error("%s (seed %d) failed: %s", name, seed, exc)
                rec.error = f"{type(exc).__name__}: {exc}"
            if on_record is not None:
                on_record(rec)
            yield rec


def summarize(records) -> list[dict]:
    out = []
    names = list(dict.fromkeys(r.method for r in records))
    for name in names:
        rs = [r for r in records if r.method == name]
        vals = np.array([r.log_z for r in rs if r.error is None])
        out.append({
            "method": name,
            "n_runs": len(rs),
            "n_errors": sum(r.error is not None for r in rs),
            "mean_log_z": float(np.mean(vals)) if vals.size else math.nan,
            "std_log_z": float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0 if vals.size else math.nan,
            "mean_wall_time_s": float(np.mean([r.wall_time_s for r in rs])),
        })
    return out


def write_outputs(records, summary, out_dir, fmt: str = "both", bench_cfg: BenchConfig | None = None):
    """Write ``runs.csv`` / ``runs.jsonl`` and a matching ``summary`` file into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        p = out / "runs.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in records:
                w.writerow(r.csv_row())
        written.append(p)
        p = out / "summary.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            for s in summary:
                w.writerow([s[c] for c in SUMMARY_COLUMNS])
        written.append(p)
    if fmt in ("jsonl", "both"):
        p = out / "runs.jsonl"
        with p.open("w") as fh:
            for r in records:
                fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")
            for s in summary:
                fh.write(json.dumps({"summary": True, **s}, sort_keys=True) + "\n")
        written.append(p)
    if bench_cfg is not None:
        p = out / "config.json"
        p.write_text(json.dumps(bench_cfg.as_dict(), indent=2, sort_keys=True) + "\n")
        written.append(p)
    return written


# ------------------------------------------------------------------ oracle check

ORACLE_SETTINGS = {
    "ep": {},
    "ais-hmc-q": {"b_count": 100, "runs": 500, "epsilon": 0.3},
    "ais-rmhmc-q": {"b_count": 100, "runs": 500, "epsilon": 0.5, "l_max": 5},
    "rm": {"r_particles": 10000},
}


def check_oracle(K, y, seed: int = 0, methods: dict | None = None, threads: int = 1,
                 backend: str | None = None) -> dict:
    """Compare every estimator with the quadrature log Z on a problem with N <= 3."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] > oracle.MAX_N:
        raise ValueError(f"check-oracle supports N <= {oracle.MAX_N}")
    ref = oracle.exact_log_z(K, y)
    closed = oracle.exact_log_z(K, y, method="closed")
    prob = Problem.prepare(y, K)
    rows = []
    for name, over in (methods or ORACLE_SETTINGS).items():
        params = _merge(METHOD_DEFAULTS[name], over, name)
        try:
            lz, dt, _ = run_method(name, params, prob, seed, threads, backend)
            rows.append({"method": name, "log_z": lz, "deviation": lz - ref, "wall_time_s": dt})
        except Exception as exc:
            rows.append({"method": name, "log_z": math.nan, "deviation": math.nan,
                         "wall_time_s": 0.0, "error": str(exc)})
    return {"reference": ref, "closed_form": closed, "rows": rows}
