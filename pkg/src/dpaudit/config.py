"""Audit configuration read from a JSON file."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from dpaudit.data import CLASSIFICATION, REGRESSION, Dataset, load_csv
from dpaudit.detector import STRATEGIES, SweepConfig, default_grid
from dpaudit.models import MODEL_KINDS, TrainConfig
from dpaudit.resampling import METHODS, ImbalanceSpec, ResampleConfig

REQUIRED = ("dataset", "target", "model", "epsilon0")
KNOWN = set(REQUIRED) | {
    "task", "grid", "k", "alpha", "iterations", "explore", "mc_draws", "resample", "seed",
    "strategy", "batch_size", "bounds", "bounds_policy", "candidates", "n_bootstrap",
    "reselect_events", "resample_seeding", "output_decimals", "study",
}
RESAMPLE_KEYS = {"method", "ratio", "k_neighbors", "quantile", "tail", "smote_target"}


class ConfigError(ValueError):
    pass


def _number(raw, name, lo=None, allow_inf=False, integer=False):
    if allow_inf and raw in ("inf", "Infinity"):
        return math.inf
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"field '{name}' must be a number, got {raw!r}")
    if integer and int(raw) != raw:
        raise ConfigError(f"field '{name}' must be an integer, got {raw!r}")
    value = int(raw) if integer else float(raw)
    if not allow_inf and not math.isfinite(value):
        raise ConfigError(f"field '{name}' must be finite")
    if lo is not None and value < lo:
        raise ConfigError(f"field '{name}' must be >= {lo}, got {raw!r}")
    return value


def _choice(raw, name, options):
    if raw not in options:
        raise ConfigError(f"field '{name}' must be one of {sorted(options)}, got {raw!r}")
    return raw


@dataclass(frozen=True)
class AuditConfig:
    dataset: Path
    target: str
    model: str
    epsilon0: float
    task: str = REGRESSION
    grid: tuple | None = None
    k: int = 1
    alpha: float = 0.05
    iterations: int = 500
    explore: int = 200
    mc_draws: int = 100
    candidates: int = 10
    strategy: str = "mixed"
    batch_size: int = 3
    seed: int = 0
    resample: ResampleConfig = ResampleConfig()
    imbalance: ImbalanceSpec = ImbalanceSpec()
    bounds: Path | None = None
    n_bootstrap: int = 20
    reselect_events: bool = True
    resample_seeding: str = "per-run"
    output_decimals: int | None = 9
    study_methods: tuple = ("random-over", "random-under", "smote")
    study_epsilon0s: tuple = ()
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def effective_grid(self) -> tuple:
        return self.grid if self.grid is not None else default_grid(self.epsilon0, self.k)

    def sweep_config(self, grid=None) -> SweepConfig:
        g = self.effective_grid if grid is None else grid
        try:
            return SweepConfig(
                grid=g,
                alpha=self.alpha,
                k=self.k,
                n_iterations=self.iterations,
                n_explore=self.explore,
                mc_draws=self.mc_draws,
                n_candidates=self.candidates,
                strategy=self.strategy,
                batch_size=self.batch_size,
                reselect_events=self.reselect_events,
                imbalance=self.imbalance,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self, epsilon0=None) -> TrainConfig:
        return TrainConfig(epsilon0=self.epsilon0 if epsilon0 is None else epsilon0)

    def load_dataset(self) -> Dataset:
        policy = "explicit" if self.bounds is not None else "from-data"
        return load_csv(self.dataset, self.target, task=self.task, bounds_policy=policy, bounds_path=self.bounds)

    def snapshot(self) -> dict:
        """Resolved settings as plain JSON values (paths as given)."""
        eps0 = self.epsilon0 if math.isfinite(self.epsilon0) else "inf"
        return {
            "dataset": str(self.raw.get("dataset", self.dataset)),
            "target": self.target,
            "task": self.task,
            "model": self.model,
            "epsilon0": eps0,
            "bounds": None if self.bounds is None else str(self.raw.get("bounds")),
            "n_bootstrap": self.n_bootstrap,
            "resample_seeding": self.resample_seeding,
            "output_decimals": self.output_decimals,
        }


def parse_config(data: dict, base_dir: Path | str = ".") -> AuditConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    missing = [f for f in REQUIRED if f not in data]
    if missing:
        raise ConfigError(f"missing required field(s): {', '.join(missing)}")
    unknown = sorted(set(data) - KNOWN)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
    base = Path(base_dir)
    task = _choice(data.get("task", REGRESSION), "task", {REGRESSION, CLASSIFICATION})
    model = _choice(data["model"], "model", set(MODEL_KINDS))
    if not isinstance(data["target"], str):
        raise ConfigError("field 'target' must be a string")
    if not isinstance(data["dataset"], str):
        raise ConfigError("field 'dataset' must be a path string")
    eps0 = _number(data["epsilon0"], "epsilon0", allow_inf=True)
    if eps0 <= 0:
        raise ConfigError("field 'epsilon0' must be positive")

    grid = data.get("grid")
    if grid is not None:
        if not isinstance(grid, list) or not grid:
            raise ConfigError("field 'grid' must be a non-empty list of numbers")
        grid = tuple(_number(g, "grid", lo=0.0) for g in grid)

    rs = data.get("resample", {})
    if not isinstance(rs, dict):
        raise ConfigError("field 'resample' must be an object")
    unknown = sorted(set(rs) - RESAMPLE_KEYS)
    if unknown:
        raise ConfigError(f"unknown field(s) in 'resample': {', '.join(unknown)}")
    try:
        resample = ResampleConfig(
            method=_choice(rs.get("method", "none"), "resample.method", set(METHODS)),
            ratio=_number(rs.get("ratio", 1.0), "resample.ratio"),
            k_neighbors=_number(rs.get("k_neighbors", 5), "resample.k_neighbors", lo=1, integer=True),
            smote_target=rs.get("smote_target", "interpolate"),
        )
        imbalance = ImbalanceSpec(_number(rs.get("quantile", 0.9), "resample.quantile"), rs.get("tail", "upper"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    study = data.get("study", {})
    if not isinstance(study, dict):
        raise ConfigError("field 'study' must be an object")
    methods = tuple(study.get("methods", ("random-over", "random-under", "smote")))
    for m in methods:
        _choice(m, "study.methods", set(METHODS) - {"none"})
    eps0s = tuple(_number(e, "study.epsilon0s", allow_inf=True) for e in study.get("epsilon0s", [data["epsilon0"]]))

    decimals = data.get("output_decimals", 9)
    if decimals is not None:
        decimals = _number(decimals, "output_decimals", lo=0, integer=True)
    reselect = data.get("reselect_events", True)
    if not isinstance(reselect, bool):
        raise ConfigError("field 'reselect_events' must be true or false")

    cfg = AuditConfig(
        dataset=base / data["dataset"],
        target=data["target"],
        model=model,
        epsilon0=eps0,
        task=task,
        grid=grid,
        k=_number(data.get("k", 1), "k", lo=1, integer=True),
        alpha=_number(data.get("alpha", 0.05), "alpha"),
        iterations=_number(data.get("iterations", 500), "iterations", lo=100, integer=True),
        explore=_number(data.get("explore", 200), "explore", lo=10, integer=True),
        mc_draws=_number(data.get("mc_draws", 100), "mc_draws", lo=1, integer=True),
        candidates=_number(data.get("candidates", 10), "candidates", lo=1, integer=True),
        strategy=_choice(data.get("strategy", "mixed"), "strategy", set(STRATEGIES)),
        batch_size=_number(data.get("batch_size", 3), "batch_size", lo=1, integer=True),
        seed=_number(data.get("seed", 0), "seed", lo=0, integer=True),
        resample=resample,
        imbalance=imbalance,
        bounds=None if data.get("bounds") is None else base / data["bounds"],
        n_bootstrap=_number(data.get("n_bootstrap", 20), "n_bootstrap", lo=2, integer=True),
        reselect_events=reselect,
        resample_seeding=_choice(data.get("resample_seeding", "per-run"), "resample_seeding", {"per-run", "fixed"}),
        output_decimals=decimals,
        study_methods=methods,
        study_epsilon0s=eps0s,
        raw=dict(data),
    )
    if not 0 < cfg.alpha < 1:
        raise ConfigError("field 'alpha' must be in (0, 1)")
    if MODEL_KINDS[model].task != task:
        raise ConfigError(f"model '{model}' needs task '{MODEL_KINDS[model].task}', config says '{task}'")
    cfg.sweep_config()  # surfaces grid errors now
    return cfg


def load_config(path: Path | str) -> AuditConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data, path.parent)
