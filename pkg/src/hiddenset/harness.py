"""Seeded trials, sweeps over kappa, and CSV output."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .dense import default_t_power, run_algorithm1, spectral_solve
from .instances import FIXED_SIZE, IID, SAMPLING_MODES, gen_sparse_instance, normalize, planted_instance
from .noise import FAMILIES, GAUSSIAN_SHIFT, RADEMACHER_CLIQUE, NoiseSpec
from .sparse import bp_estimate, run_bp
from .state_evolution import (DEFAULT_D_STAR, DEFAULT_INFLATION, DEFAULT_M, DEFAULT_T_CAP, ScheduleDiverged,
                              build_schedule, default_t_star)

SCHEMA = 1
MODES = ("dense", "sparse", "se")
DENSE_ALGORITHMS = ("mp", "spectral")
SPARSE_ALGORITHMS = ("graph-bp",)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "dense"
    n: int = 2000
    kappa: float | None = None
    k: int | None = None
    delta: int | None = None
    noise: str = RADEMACHER_CLIQUE
    lam: float = 1.0
    sampling_mode: str | None = None
    algorithm: str | None = None
    d_star: int = DEFAULT_D_STAR
    M: float = DEFAULT_M
    t_star: int | None = None
    inflation: float = DEFAULT_INFLATION
    t_power: int | None = None
    rho_bar: float | None = None
    pool: int = 100_000
    bp_t: int = 3
    seed: int = 0
    trials: int = 1
    out: str | None = None

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.n is None or self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.noise not in FAMILIES:
            raise ConfigError(f"noise must be one of {FAMILIES}")
        if self.d_star < 1 or (self.t_star is not None and self.t_star < 1):
            raise ConfigError("d_star and t_star must be at least 1")
        if self.M <= 0 or self.pool < 1 or self.bp_t < 1:
            raise ConfigError("M, pool and bp_t must be positive")
        if self.mode == "dense":
            if self.kappa is None and self.k is None:
                raise ConfigError("dense mode needs kappa or k")
            if self.k is not None and not 0 <= self.k <= self.n:
                raise ConfigError("k must lie in [0, n]")
            if self.kappa is not None and self.kappa < 0:
                raise ConfigError("kappa must be non-negative")
            if self.noise == GAUSSIAN_SHIFT and self.lam <= 0:
                raise ConfigError("lambda must be positive")
            if self.noise not in (RADEMACHER_CLIQUE, GAUSSIAN_SHIFT):
                raise ConfigError("custom-discrete noise is only available through the library")
            if self.algorithm not in (None, *DENSE_ALGORITHMS):
                raise ConfigError(f"dense algorithm must be one of {DENSE_ALGORITHMS}")
        elif self.mode == "sparse":
            if self.delta is None or self.delta < 2:
                raise ConfigError("sparse mode needs delta >= 2")
            if self.kappa is None or self.kappa <= 0:
                raise ConfigError("sparse mode needs kappa > 0")
            if self.noise != RADEMACHER_CLIQUE:
                raise ConfigError("sparse BP supports the rademacher-clique model only")
            if self.algorithm not in (None, *SPARSE_ALGORITHMS):
                raise ConfigError(f"sparse algorithm must be one of {SPARSE_ALGORITHMS}")
        if self.sampling_mode not in (None, *SAMPLING_MODES):
            raise ConfigError(f"sampling_mode must be one of {SAMPLING_MODES}")
        return self

    # resolved parameters

    @property
    def hidden_size(self) -> int:
        return self.k if self.k is not None else int(round(self.kappa * math.sqrt(self.n)))

    @property
    def effective_kappa(self) -> float:
        if self.mode == "dense":
            return self.hidden_size / math.sqrt(self.n)
        return float(self.kappa)

    @property
    def noise_spec(self) -> NoiseSpec:
        if self.noise == GAUSSIAN_SHIFT:
            return NoiseSpec.gaussian_shift(self.lam)
        return NoiseSpec.rademacher_clique()

    @property
    def algorithm_tag(self) -> str:
        if self.algorithm:
            return self.algorithm
        return "mp" if self.mode == "dense" else "graph-bp"

    def resolved_t_star(self) -> int | None:
        if self.mode != "dense" or self.algorithm_tag != "mp":
            return None
        if self.t_star is not None:
            return self.t_star
        if self.hidden_size == 0:
            return 1
        return default_t_star(self.noise_spec.lam, self.effective_kappa, self.d_star, self.M,
                              DEFAULT_T_CAP, n=self.n, inflation=self.inflation)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_ALIASES = {"lambda": "lam", "P": "pool", "t": "bp_t", "base_seed": "seed"}


def _coerce(name, value: str):
    kind = _FIELD_TYPES[name]
    if value.lower() in ("", "none"):
        return None
    try:
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r}") from None
    return value


def parse_settings(pairs: dict) -> dict:
    out = {}
    for key, value in pairs.items():
        name = _ALIASES.get(key, key).replace("-", "_")
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[name] = _coerce(name, value) if isinstance(value, str) else value
    return out


def read_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    pairs = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            pairs[key] = value
    return parse_settings(pairs)


def make_config(file_settings: dict | None = None, **overrides) -> ExperimentConfig:
    """File settings first, explicit (non-None) overrides on top."""
    settings = dict(file_settings or {})
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**settings).validate()


# -- trials ---------------------------------------------------------------------------

@dataclass
class TrialRecord:
    seed: int
    mode: str
    n: int
    kappa: float
    lam: float
    delta: int | None
    algorithm: str
    t_star: int | None
    d_star: int | None
    success: int
    symdiff: int
    overlap: float
    runtime_ms: int
    estimate: np.ndarray | None = field(default=None, repr=False, compare=False)


def set_metrics(truth, estimate):
    """(success, |C symdiff C_hat|, |C & C_hat| / |C|)."""
    truth = np.unique(np.asarray(truth, dtype=np.int64))
    estimate = np.unique(np.asarray(estimate, dtype=np.int64))
    inter = np.intersect1d(truth, estimate).size
    symdiff = truth.size + estimate.size - 2 * inter
    overlap = inter / truth.size if truth.size else 0.0
    return int(symdiff == 0), int(symdiff), float(overlap)


def run_trial(config: ExperimentConfig, trial_index: int) -> TrialRecord:
    if config.mode == "se":
        raise ConfigError("se mode has no random trials; use the se subcommand")
    seed = rngmod.trial_seed(config.seed, trial_index)
    start = time.perf_counter()
    if config.mode == "dense":
        t_star, estimate, truth = _dense_trial(config, seed)
        delta, d_star = None, (config.d_star if t_star is not None else None)
    else:
        estimate, truth = _sparse_trial(config, seed)
        t_star, delta, d_star = None, config.delta, None
    runtime = int(1000 * (time.perf_counter() - start))
    success, symdiff, overlap = set_metrics(truth, estimate)
    return TrialRecord(seed, config.mode, config.n, config.effective_kappa, config.noise_spec.lam, delta,
                       config.algorithm_tag, t_star if t_star is not None else (config.bp_t if config.mode == "sparse" else None),
                       d_star, success, symdiff, overlap, runtime, np.asarray(estimate, dtype=np.int64))


def _dense_trial(config, seed):
    noise = config.noise_spec
    k = config.hidden_size
    inst = planted_instance(config.n, k, noise, seed)
    if config.algorithm_tag == "spectral":
        its = config.t_power or default_t_power(config.n)
        return None, spectral_solve(normalize(inst), k, its).selected, inst.hidden_set
    t_star = config.resolved_t_star()
    schedule = build_schedule(noise.lam, config.effective_kappa, config.d_star, t_star, strict=True)
    res = run_algorithm1(inst, k, schedule, t_power=config.t_power, rho_bar=config.rho_bar)
    return t_star, res.final_set, inst.hidden_set


def _sparse_trial(config, seed):
    inst = gen_sparse_instance(config.n, config.delta, config.kappa, sampling_mode=config.sampling_mode or IID,
                               rng_seed=seed)
    state = run_bp(inst, config.bp_t)
    return bp_estimate(state, inst.delta), inst.hidden_set


def _run_one(args):
    return run_trial(*args)


def run_trials(config: ExperimentConfig, jobs: int = 1) -> list[TrialRecord]:
    """All trials of one config, in trial-index order whatever the job count."""
    tasks = [(config, i) for i in range(config.trials)]
    if jobs <= 1 or len(tasks) == 1:
        return [run_trial(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))


# -- CSV ------------------------------------------------------------------------------

COLUMNS = [f"schema={SCHEMA}", "seed", "mode", "n", "kappa", "lambda", "delta", "algorithm", "t_star", "d_star",
           "success", "symdiff", "overlap", "runtime_ms", "aggregate", "success_se"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def record_row(rec: TrialRecord, timing: bool = True) -> list[str]:
    vals = [SCHEMA, rec.seed, rec.mode, rec.n, rec.kappa, rec.lam, rec.delta, rec.algorithm, rec.t_star,
            rec.d_star, rec.success, rec.symdiff, rec.overlap, rec.runtime_ms if timing else None, 0, None]
    return [_fmt(v) for v in vals]


def aggregate_row(config: ExperimentConfig, records: list[TrialRecord], timing: bool = True) -> list[str]:
    """success = mean success, symdiff = mean symdiff / n, success_se = sqrt(p(1-p)/trials)."""
    m = len(records)
    p = sum(r.success for r in records) / m
    first = records[0]
    vals = [SCHEMA, config.seed, first.mode, first.n, first.kappa, first.lam, first.delta, first.algorithm,
            first.t_star, first.d_star, p, sum(r.symdiff for r in records) / (m * first.n),
            sum(r.overlap for r in records) / m,
            sum(r.runtime_ms for r in records) if timing else None, 1, math.sqrt(p * (1 - p) / m)]
    return [_fmt(v) for v in vals]


def sweep(base: ExperimentConfig, kappas=None, jobs: int = 1, timing: bool = True):
    """Rows for every (kappa, trial), each grid point followed by its aggregate row.

    Returns (csv text, list of per-point record lists).
    """
    grid = list(kappas) if kappas else [None]
    if not grid:
        raise ConfigError("empty grid")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    all_records = []
    for kap in grid:
        cfg = base if kap is None else dataclasses.replace(base, kappa=float(kap), k=None).validate()
        records = run_trials(cfg, jobs)
        for r in records:
            w.writerow(record_row(r, timing))
        w.writerow(aggregate_row(cfg, records, timing))
        all_records.append(records)
    return buf.getvalue(), all_records


def write_text(path, text: str):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def dump_sets(path, records_per_point):
    """One line per trial: seed followed by the estimated set."""
    lines = []
    for records in records_per_point:
        for r in records:
            lines.append(" ".join([str(r.seed), *map(str, r.estimate.tolist())]))
    write_text(path, "\n".join(lines) + "\n")


__all__ = ["ExperimentConfig", "TrialRecord", "ConfigError", "ScheduleDiverged", "run_trial", "run_trials",
           "sweep", "set_metrics", "read_config_file", "make_config", "parse_settings", "COLUMNS",
           "EXIT_OK", "EXIT_CONFIG", "EXIT_IO", "EXIT_DIVERGED", "FIXED_SIZE", "IID"]
