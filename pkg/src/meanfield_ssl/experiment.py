"""Experiment sweeps over label rate, neighbor count and beta.

A run is described by a flat TOML file (see ``CONFIG_SCHEMA``). Work is
split into one task per (k, r_l, realization); tasks run on a process pool
and their rows are merged back into grid-major, realization-minor order, so
the CSV does not depend on the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from . import __version__
from .datasets import GENERATORS, Dataset, load_csv, sample_labeled
from .exceptions import ConfigError
from .graph import build_similarity, default_k
from .inference import SolveConfig, grf_solve, lgc_solve, make_fields, nmf_solve, predict
from .metrics import accuracy, ami
from .tuning import log_gamma_exact, resolve_gamma, solve_beta

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "CONFIG_SCHEMA",
    "WORKERS_ENV",
    "parse_grid",
    "load_config",
    "dump_config",
    "load_dataset",
    "derive_seed",
    "resolve_k",
    "run_experiment",
    "emit_csv",
    "read_csv",
    "write_outputs",
]

WORKERS_ENV = "MEANFIELD_SSL_WORKERS"
ALGORITHMS = ("grf", "lgc", "nmf")
BETA_MODES = ("fixed", "grid", "tuned")

# key -> (type description, default, help)
CONFIG_SCHEMA: dict[str, tuple[str, Any, str]] = {
    "dataset": ("str", "two_moons", "generator name (two_moons, three_clusters, five_gaussians) or 'csv'"),
    "dataset_count": ("int", 1000, "number of generated points"),
    "dataset_noise": ("float", 0.1, "two_moons noise standard deviation"),
    "dataset_seed": ("int", 0, "generator seed"),
    "csv_path": ("str", "", "dataset file when dataset = 'csv'"),
    "label_column": ("str|int", "label", "label column name or position for CSV input"),
    "algorithms": ("list[str]", ["grf", "lgc", "nmf"], "subset of grf, lgc, nmf"),
    "beta_mode": ("str", "tuned", "fixed | grid | tuned"),
    "beta": ("float", 1.0, "beta for beta_mode = 'fixed'"),
    "beta_grid": ("grid", "10^[-3:3:0.2]", "beta values for beta_mode = 'grid'"),
    "gammas": ("list[str|float]", ["full"], "targets for beta_mode = 'tuned': 'mid', 'full' or numbers"),
    "r_l": ("grid", "[0.02:0.2:0.02]", "label rates"),
    "k": ("grid|'log2'", "log2", "neighbor counts; 'log2' means ceil(log2 N)"),
    "realizations": ("int", 20, "labeled-set draws per grid point"),
    "seed": ("int", 0, "master seed"),
    "t_max": ("int", 10_000, "maximum sweeps"),
    "epsilon": ("float", 1e-3, "convergence threshold"),
    "alpha": ("float", 0.99, "LGC alpha"),
    "eval_set": ("str", "unlabeled", "nodes scored: unlabeled | all"),
    "output_dir": ("str", "results", "where CSV, config and plots are written"),
    "workers": ("int", 0, "process budget; 0 reads $" + WORKERS_ENV + " (default 1)"),
    "plots": ("bool", True, "write SVG summary plots"),
}

_GRID_RE = re.compile(r"^\s*(10\s*\^\s*)?\[\s*([^:\]]+):([^:\]]+):([^:\]]+)\]\s*$")


def parse_grid(spec) -> list[float]:
    """Expand ``[a:b:s]`` (inclusive arithmetic) or ``10^[a:b:s]`` (geometric).

    Numbers and lists pass through unchanged.
    """
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return [spec]
    if isinstance(spec, (list, tuple)):
        out = []
        for item in spec:
            out.extend(parse_grid(item))
        return out
    if not isinstance(spec, str):
        raise ConfigError(f"cannot read a grid from {spec!r}")
    m = _GRID_RE.match(spec)
    if m is None:
        try:
            return [float(spec)]
        except ValueError:
            raise ConfigError(f"malformed grid {spec!r}; expected [a:b:s] or 10^[a:b:s]") from None
    try:
        a, b, s = (float(x) for x in m.group(2, 3, 4))
    except ValueError:
        raise ConfigError(f"malformed grid {spec!r}") from None
    if s <= 0 or b < a:
        raise ConfigError(f"grid {spec!r} needs a positive step and a <= b")
    count = int(math.floor((b - a) / s + 1e-9)) + 1
    points = [round(a + i * s, 12) for i in range(count)]
    if m.group(1):
        return [float(10.0 ** p) for p in points]
    return points


@dataclass
class ExperimentConfig:
    dataset: str = "two_moons"
    dataset_count: int = 1000
    dataset_noise: float = 0.1
    dataset_seed: int = 0
    csv_path: str = ""
    label_column: Any = "label"
    algorithms: list = field(default_factory=lambda: ["grf", "lgc", "nmf"])
    beta_mode: str = "tuned"
    beta: float = 1.0
    beta_grid: Any = "10^[-3:3:0.2]"
    gammas: list = field(default_factory=lambda: ["full"])
    r_l: Any = "[0.02:0.2:0.02]"
    k: Any = "log2"
    realizations: int = 20
    seed: int = 0
    t_max: int = 10_000
    epsilon: float = 1e-3
    alpha: float = 0.99
    eval_set: str = "unlabeled"
    output_dir: str = "results"
    workers: int = 0
    plots: bool = True

    def validate(self) -> "ExperimentConfig":
        if self.dataset != "csv" and self.dataset not in GENERATORS:
            raise ConfigError(f"unknown dataset {self.dataset!r}; choose from {sorted(GENERATORS)} or 'csv'")
        if self.dataset == "csv" and not self.csv_path:
            raise ConfigError("dataset = 'csv' requires csv_path")
        algos = list(self.algorithms)
        if not algos or any(a not in ALGORITHMS for a in algos) or len(set(algos)) != len(algos):
            raise ConfigError(f"algorithms must be a non-empty duplicate-free subset of {ALGORITHMS}")
        if self.beta_mode not in BETA_MODES:
            raise ConfigError(f"beta_mode must be one of {BETA_MODES}")
        if self.beta_mode == "fixed" and not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ConfigError("beta must be finite and non-negative")
        if self.beta_mode == "grid":
            betas = self.beta_values()
            if not betas or min(betas) < 0:
                raise ConfigError("beta_grid must be non-empty and non-negative")
        if self.beta_mode == "tuned":
            if not self.gammas:
                raise ConfigError("gammas must be non-empty in tuned mode")
            for gm in self.gammas:
                try:
                    resolve_gamma(gm, 2)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
        rates = self.r_l_values()
        if not rates or any(not 0 < r <= 1 for r in rates):
            raise ConfigError("r_l grid must be non-empty with values in (0, 1]")
        if self.k != "log2":
            ks = parse_grid(self.k)
            if not ks or any(int(v) != v or v < 1 for v in ks):
                raise ConfigError("k grid must hold positive integers")
        for name in ("realizations", "t_max", "dataset_count"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.eval_set not in ("unlabeled", "all"):
            raise ConfigError("eval_set must be 'unlabeled' or 'all'")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        return self

    def r_l_values(self) -> list[float]:
        return [float(v) for v in parse_grid(self.r_l)]

    def beta_values(self) -> list[float]:
        return [float(v) for v in parse_grid(self.beta_grid)]

    def resolved_workers(self) -> int:
        if self.workers:
            return self.workers
        env = os.environ.get(WORKERS_ENV, "")
        try:
            return max(1, int(env)) if env else 1
        except ValueError:
            raise ConfigError(f"${WORKERS_ENV} must be an integer, got {env!r}") from None


def _coerce(key: str, value):
    kind = CONFIG_SCHEMA[key][0]
    try:
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
                raise ValueError
            return bool(value)
        if kind == "str":
            return str(value)
        if kind.startswith("list"):
            if isinstance(value, str):
                return [v.strip() for v in value.split(",") if v.strip()]
            return list(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from None
    return value


def _parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key, value


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a TOML config and apply ``key=value`` overrides, then validate."""
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomli.loads(path.read_text(encoding="utf-8"))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for item in overrides:
        key, value = _parse_override(item)
        data[key] = value
    unknown = sorted(set(data) - set(CONFIG_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {k: _coerce(k, v) for k, v in data.items()}
    return ExperimentConfig(**kwargs).validate()


def dump_config(cfg: ExperimentConfig, path, extra: dict | None = None) -> Path:
    """Write the fully-resolved configuration (plus run metadata) as TOML."""
    doc = dataclasses.asdict(cfg)
    doc["workers"] = cfg.resolved_workers()
    meta = {"version": __version__, "wall_time": "solver sweeps only; graph construction excluded"}
    if extra:
        meta.update(extra)
    doc["meta"] = meta
    path = Path(path)
    path.write_text(tomli_w.dumps(doc), encoding="utf-8")
    return path


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset == "csv":
        return load_csv(cfg.csv_path, cfg.label_column)
    if cfg.dataset == "two_moons":
        return GENERATORS["two_moons"](cfg.dataset_count, cfg.dataset_noise, cfg.dataset_seed)
    return GENERATORS[cfg.dataset](cfg.dataset_count, cfg.dataset_seed)


def derive_seed(master: int, dataset: str, r_l: float, realization: int) -> int:
    """Stable 64-bit seed for one labeled-set draw.

    Depends only on the master seed, the dataset name, the label rate and
    the realization index, so every k and beta at a given rate sees the
    same labeled sets and extending a grid leaves existing seeds alone.
    """
    key = f"{master}|{dataset}|{r_l!r}|{realization}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def resolve_k(cfg: ExperimentConfig, n_samples: int) -> list[int]:
    if cfg.k == "log2":
        return [default_k(n_samples)]
    return [int(v) for v in parse_grid(cfg.k)]


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    algorithm: str
    gamma: float
    beta: float
    r_l: float
    k: int
    realization: int
    seed: int
    accuracy: float
    ami: float
    log_gamma_exact: float
    iterations: int
    converged: bool
    numeric_failure: bool
    error: str
    wall_time_seconds: float


RESULT_FIELDS = [f.name for f in dataclasses.fields(ResultRow)]
_TIMING_FIELDS = {"wall_time_seconds"}


@dataclass(frozen=True)
class _Setting:
    algorithm: str
    gamma: float = math.nan
    beta: float = math.nan


def _settings(cfg: ExperimentConfig, q: int, r_l: float) -> list[_Setting]:
    out = []
    for algo in cfg.algorithms:
        if algo != "nmf":
            out.append(_Setting(algo))
        elif cfg.beta_mode == "fixed":
            out.append(_Setting("nmf", beta=float(cfg.beta)))
        elif cfg.beta_mode == "grid":
            out.extend(_Setting("nmf", beta=b) for b in cfg.beta_values())
        else:
            for gm in cfg.gammas:
                gamma = resolve_gamma(gm, q)
                out.append(_Setting("nmf", gamma=gamma, beta=solve_beta(gamma, r_l, q).beta_star))
    return out


_GRAPH_CACHE: dict = {}


def _graph_for(ds: Dataset, k: int):
    key = (ds.name, hashlib.blake2b(ds.features.tobytes(), digest_size=16).hexdigest(), k)
    if key not in _GRAPH_CACHE:
        if len(_GRAPH_CACHE) > 8:
            _GRAPH_CACHE.clear()
        _GRAPH_CACHE[key] = build_similarity(ds, k)
    return _GRAPH_CACHE[key]


def _run_task(args) -> list[tuple[tuple, ResultRow]]:
    cfg, ds, k_idx, k, rl_idx, r_l, realization = args
    seed = derive_seed(cfg.seed, ds.name, r_l, realization)
    split = sample_labeled(ds, r_l, seed)
    graph = _graph_for(ds, k)
    lab = split.labeled_indices
    theta = make_fields(ds.n_samples, lab, ds.labels[lab], ds.q)
    eval_idx = lab if cfg.eval_set == "unlabeled" else None
    rows = []
    for s_idx, st in enumerate(_settings(cfg, ds.q, r_l)):
        solve_cfg = SolveConfig(t_max=cfg.t_max, epsilon=cfg.epsilon, alpha=cfg.alpha,
                                beta=0.0 if math.isnan(st.beta) else st.beta)
        acc = mi = lg = math.nan
        iters, conv, fail, err, wall = 0, False, False, "", math.nan
        try:
            if st.algorithm == "grf":
                res = grf_solve(graph, lab, ds.labels[lab], cfg=solve_cfg, q=ds.q)
            elif st.algorithm == "lgc":
                res = lgc_solve(graph, theta, cfg=solve_cfg)
            else:
                res = nmf_solve(graph, theta, cfg=solve_cfg)
            iters, conv, fail, wall = res.iterations, res.converged, res.numeric_failure, res.wall_time
            pred = predict(res.marginals)
            acc = accuracy(pred, ds.labels, eval_idx, cfg.eval_set)
            mi = ami(pred, ds.labels, eval_idx, cfg.eval_set)
            if st.algorithm != "lgc":
                lg = log_gamma_exact(res.marginals, pred)
        except Exception as exc:  # one failed run must not abort the sweep
            err = f"{type(exc).__name__}: {exc}"
        row = ResultRow(ds.name, st.algorithm, st.gamma, st.beta, r_l, k, realization, seed,
                        acc, mi, lg, iters, conv, fail, err, wall)
        rows.append(((k_idx, rl_idx, s_idx, realization), row))
    return rows


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None,
                   workers: int | None = None) -> list[ResultRow]:
    """Every (k, r_l, setting, realization) combination, in that sort order."""
    cfg.validate()
    ds = dataset if dataset is not None else load_dataset(cfg)
    ks = resolve_k(cfg, ds.n_samples)
    for k in ks:
        if not 1 <= k <= ds.n_samples - 1:
            raise ConfigError(f"k = {k} outside [1, N-1] for N = {ds.n_samples}")
    rates = cfg.r_l_values()
    # fail early on infeasible rates or tuning targets, before any solver work
    for r_l in rates:
        if math.floor(r_l * ds.n_samples + 0.5) < ds.q:
            raise ConfigError(f"r_l = {r_l} labels fewer than q = {ds.q} nodes")
        try:
            _settings(cfg, ds.q, r_l)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        except RuntimeError as exc:
            raise ConfigError(f"beta tuning failed at r_l = {r_l}: {exc}") from None
    tasks = [
        (cfg, ds, ki, k, ri, r_l, rep)
        for ki, k in enumerate(ks)
        for ri, r_l in enumerate(rates)
        for rep in range(cfg.realizations)
    ]
    n_workers = workers if workers is not None else cfg.resolved_workers()
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    keyed = [kr for chunk in chunks for kr in chunk]
    keyed.sort(key=lambda kr: kr[0])
    return [row for _, row in keyed]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else f"{value:.17g}"
    return str(value)


def emit_csv(rows, path, include_timing: bool = True) -> Path:
    """Header plus one line per row, floats at 17 significant digits.

    ``include_timing=False`` drops the wall-time column so the file is
    byte-reproducible.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    fields = [f for f in RESULT_FIELDS if include_timing or f not in _TIMING_FIELDS]
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in fields])
    return path


def _parse_value(name: str, text: str):
    kind = {f.name: f.type for f in dataclasses.fields(ResultRow)}[name]
    if kind in ("float", float):
        return math.nan if text == "" else float(text)
    if kind in ("int", int):
        return int(text)
    if kind in ("bool", bool):
        return text == "true"
    return text


def read_csv(path) -> list[ResultRow]:
    """Parse a file written by :func:`emit_csv`; a missing timing column reads as NaN."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            values = {name: _parse_value(name, rec.get(name, "")) for name in RESULT_FIELDS}
            rows.append(ResultRow(**values))
    return rows


def write_outputs(cfg: ExperimentConfig, rows: list[ResultRow]) -> dict[str, Path]:
    """results.csv (reproducible), timings.csv, the resolved config and optional plots."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": emit_csv(rows, out / "results.csv", include_timing=False),
        "timings": emit_csv(rows, out / "results_with_timing.csv", include_timing=True),
        "config": dump_config(cfg, out / "config.resolved.toml", extra={
            "k_values": sorted({r.k for r in rows}),
            "r_l_values": cfg.r_l_values(),
        }),
    }
    if cfg.plots:
        from .plotting import emit_plots

        paths["plots"] = emit_plots(rows, out / "plots")
    return paths
