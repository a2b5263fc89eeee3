"""The audited ML pipeline: remove rows, resample, train, predict."""

from __future__ import annotations

import math

import numpy as np

from dpaudit.data import REGRESSION, AdjacencySpec, Dataset, remove_rows
from dpaudit.detector import SweepConfig, SweepReport, epsilon_sweep, select_test_points
from dpaudit.mechanisms import Mechanism
from dpaudit.models import ModelKind, TrainConfig, get_model_kind
from dpaudit.resampling import ImbalanceSpec, ResampleConfig, apply_resampling, split_minority
from dpaudit.streams import Streams


class MLPipeline(Mechanism):
    """``M(D) = predict(train(resample(D)), X[args])`` as a mechanism.

    Each iteration gets its own random stream (``chunk_size = 1``), shared by
    resampling and training. Regression predictions are rounded to
    ``output_decimals`` before leaving the mechanism; rounding is
    post-processing and hides floating-point jitter between adjacent fits.
    """

    chunk_size = 1

    def __init__(
        self,
        dataset: Dataset,
        model: ModelKind | str,
        train_cfg: TrainConfig,
        resample: ResampleConfig = ResampleConfig(),
        imbalance: ImbalanceSpec = ImbalanceSpec(),
        n_bootstrap: int = 20,
        output_decimals: int | None = 9,
        resample_seed: int | None = None,
    ):
        self.model = get_model_kind(model) if isinstance(model, str) else model
        if self.model.task != dataset.task:
            raise ValueError(f"model {self.model.name} needs a {self.model.task} dataset, got {dataset.task}")
        if resample.method != "none" and dataset.task != REGRESSION:
            raise ValueError("resampling is supported for regression datasets only")
        self.dataset = dataset
        self.task = dataset.task
        self.train_cfg = train_cfg
        self.resample = resample
        self.imbalance = imbalance
        self.n_bootstrap = n_bootstrap
        self.output_decimals = output_decimals
        self.resample_seed = resample_seed
        self.claimed_epsilon = train_cfg.epsilon0
        self._prepared: dict = {}

    def _prepare(self, adjacency: AdjacencySpec):
        # removal and the minority split depend only on the adjacency
        hit = self._prepared.get(adjacency)
        if hit is None:
            train = remove_rows(self.dataset, adjacency)
            split = split_minority(train, self.imbalance) if self.resample.method != "none" else None
            hit = self._prepared[adjacency] = (train, split)
        return hit

    def run_once(self, adjacency: AdjacencySpec, args, rng: np.random.Generator) -> np.ndarray:
        train, split = self._prepare(adjacency)
        if self.resample.method != "none":
            # A fixed seed makes the resampler a deterministic function of the data.
            r_rng = rng if self.resample_seed is None else np.random.default_rng(self.resample_seed)
            train = apply_resampling(train, self.imbalance, self.resample, r_rng, split)
        fitted = self.model.train(train, self.train_cfg, rng)
        preds = self.model.predict(fitted, self.dataset.features[list(args)])
        if self.task == REGRESSION and self.output_decimals is not None:
            preds = np.round(preds, self.output_decimals)
        return preds

    def sample(self, adjacency, args, size, rng):
        return np.stack([self.run_once(adjacency, args, rng) for _ in range(size)])

    def select_args(self, batch_size, rng):
        return select_test_points(self.dataset, self.model, batch_size, self.n_bootstrap, rng)

    def describe(self):
        return {
            "mechanism": "ml_pipeline",
            "model": self.model.name,
            "claimed_epsilon": self.claimed_epsilon if math.isfinite(self.claimed_epsilon) else "inf",
            "train": self.train_cfg.to_dict(),
            "resample": {
                "method": self.resample.method,
                "ratio": self.resample.ratio,
                "k_neighbors": self.resample.k_neighbors,
                "smote_target": self.resample.smote_target,
            },
            "imbalance": {"quantile": self.imbalance.quantile, "tail": self.imbalance.tail},
            "resample_seeding": "per-run" if self.resample_seed is None else "fixed",
            "n_bootstrap": self.n_bootstrap,
            "output_decimals": self.output_decimals,
            "dataset": self.dataset.summary(),
        }


def audit_ml_pipeline(
    d: Dataset,
    model: ModelKind | str,
    resample: ResampleConfig,
    cfg: SweepConfig,
    train_cfg: TrainConfig,
    seed: int,
    workers: int = 1,
    n_bootstrap: int = 20,
    output_decimals: int | None = 9,
    resample_seeding: str = "per-run",
) -> SweepReport:
    """Audit the full train-then-predict pipeline over ``cfg.grid``.

    With ``cfg.k > 1`` the measured value bounds ``k * epsilon`` for the
    per-row level.
    """
    if resample_seeding not in ("fixed", "per-run"):
        raise ValueError(f"resample_seeding must be 'fixed' or 'per-run', got {resample_seeding!r}")
    resample_seed = Streams(seed).child("resample").derive_seed() if resample_seeding == "fixed" else None
    mech = MLPipeline(d, model, train_cfg, resample, cfg.imbalance, n_bootstrap, output_decimals, resample_seed)
    return epsilon_sweep(mech, cfg, seed, workers)
