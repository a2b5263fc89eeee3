"""Imbalanced-regression preprocessing: minority split, random over/under
sampling and SMOTE interpolation.

``ratio`` is always the post-sampling minority/majority size ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dpaudit.data import REGRESSION, Dataset

METHODS = ("none", "random-over", "random-under", "smote")


class ResampleError(ValueError):
    pass


@dataclass(frozen=True)
class ImbalanceSpec:
    quantile: float = 0.9
    tail: str = "upper"

    def __post_init__(self):
        if not 0 < self.quantile < 1:
            raise ResampleError(f"quantile must be in (0, 1), got {self.quantile}")
        if self.tail not in ("upper", "lower"):
            raise ResampleError(f"tail must be 'upper' or 'lower', got {self.tail!r}")


@dataclass(frozen=True)
class ResampleConfig:
    method: str = "none"
    ratio: float = 1.0
    k_neighbors: int = 5
    smote_target: str = "interpolate"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ResampleError(f"unknown resampling method {self.method!r}; choose from {METHODS}")
        if not 0 < self.ratio <= 1:
            raise ResampleError(f"ratio must be in (0, 1], got {self.ratio}")
        if self.k_neighbors < 1:
            raise ResampleError("k_neighbors must be >= 1")
        if self.smote_target not in ("interpolate", "copy"):
            raise ResampleError("smote_target must be 'interpolate' or 'copy'")


def split_minority(d: Dataset, spec: ImbalanceSpec = ImbalanceSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Indices of rows strictly beyond the target quantile, and the rest."""
    if d.task != REGRESSION:
        raise ResampleError("minority split is defined for regression targets")
    y = d.targets
    if np.all(y == y[0]):
        raise ResampleError("all targets are equal; no imbalance is definable")
    if spec.tail == "upper":
        mask = y > np.quantile(y, spec.quantile)
    else:
        mask = y < np.quantile(y, 1.0 - spec.quantile)
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def _split_or_fail(d, spec, split=None):
    minority, majority = split_minority(d, spec) if split is None else split
    if len(minority) == 0 or len(majority) == 0:
        raise ResampleError("split produced an empty class")
    return minority, majority


def _oversample_target(n_min: int, n_maj: int, ratio: float) -> int:
    target = int(round(ratio * n_maj))
    if target < n_min:
        raise ResampleError(
            f"ratio {ratio} is below the current minority/majority ratio {n_min / n_maj:.4g}"
        )
    return target


def random_oversample(d: Dataset, spec: ImbalanceSpec, cfg: ResampleConfig, rng: np.random.Generator, split=None) -> Dataset:
    minority, majority = _split_or_fail(d, spec, split)
    target = _oversample_target(len(minority), len(majority), cfg.ratio)
    extra = minority[rng.integers(0, len(minority), size=target - len(minority))]
    rows = np.concatenate([np.arange(d.n_rows), extra])
    return d.take(rows)


def random_undersample(d: Dataset, spec: ImbalanceSpec, cfg: ResampleConfig, rng: np.random.Generator, split=None) -> Dataset:
    minority, majority = _split_or_fail(d, spec, split)
    keep_maj = int(round(len(minority) / cfg.ratio))
    if keep_maj > len(majority):
        raise ResampleError(
            f"ratio {cfg.ratio} is below the current minority/majority ratio {len(minority) / len(majority):.4g}"
        )
    if keep_maj < 1:
        raise ResampleError("undersampling would remove every majority row")
    kept = rng.choice(majority, size=keep_maj, replace=False)
    rows = np.sort(np.concatenate([minority, kept]))
    return d.take(rows)


def nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """Exact k nearest neighbours (excluding self), ties to the lower index."""
    diff = X[:, None, :] - X[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def smote(d: Dataset, spec: ImbalanceSpec, cfg: ResampleConfig, rng: np.random.Generator, split=None) -> Dataset:
    """Append synthetic minority rows ``x + u (x_nn - x)``.

    The target is interpolated with the same ``u`` unless
    ``cfg.smote_target == "copy"``, which keeps the base row's target.
    """
    minority, majority = _split_or_fail(d, spec, split)
    if len(minority) < 2:
        raise ResampleError("SMOTE needs at least two minority rows")
    target = _oversample_target(len(minority), len(majority), cfg.ratio)
    n_new = target - len(minority)
    if n_new == 0:
        return d
    k = min(cfg.k_neighbors, len(minority) - 1)
    Xm, ym = d.features[minority], d.targets[minority]
    nn = nearest_neighbors(Xm, k)
    base = rng.integers(0, len(minority), size=n_new)
    pick = nn[base, rng.integers(0, k, size=n_new)]
    u = rng.random(n_new)
    X_new = Xm[base] + u[:, None] * (Xm[pick] - Xm[base])
    if cfg.smote_target == "interpolate":
        y_new = ym[base] + u * (ym[pick] - ym[base])
    else:
        y_new = ym[base]
    return d.with_rows(np.vstack([d.features, X_new]), np.concatenate([d.targets, y_new]))


_DISPATCH = {"random-over": random_oversample, "random-under": random_undersample, "smote": smote}


def apply_resampling(d: Dataset, spec: ImbalanceSpec, cfg: ResampleConfig, rng: np.random.Generator, split=None) -> Dataset:
    """``split`` optionally supplies a precomputed :func:`split_minority` result."""
    if cfg.method == "none":
        return d
    return _DISPATCH[cfg.method](d, spec, cfg, rng, split)
