"""DP Gaussian Naive Bayes and DP linear regression, plus noise-free
prediction.

Both learners perturb sufficient statistics with Laplace noise and split the
training budget by sequential composition. ``epsilon0 = inf`` trains the
non-private counterpart.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from dpaudit.data import CLASSIFICATION, REGRESSION, Dataset, clip_to_bounds
from dpaudit.mechanisms import laplace_noise


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epsilon0: float = math.inf
    budget_split: tuple[float, ...] | None = None
    clip_norm: float | None = None
    ridge: float = 0.0
    variance_floor: float | None = None
    max_ridge_doublings: int = 80

    def __post_init__(self):
        if not self.epsilon0 > 0:
            raise ValueError(f"epsilon0 must be positive or inf, got {self.epsilon0}")
        if self.budget_split is not None:
            split = tuple(float(s) for s in self.budget_split)
            if any(s <= 0 for s in split) or abs(sum(split) - 1.0) > 1e-9:
                raise ValueError(f"budget split must be positive and sum to 1, got {split}")
            object.__setattr__(self, "budget_split", split)
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")

    @property
    def private(self) -> bool:
        return math.isfinite(self.epsilon0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epsilon0"] = _enc(self.epsilon0)
        d["budget_split"] = list(self.budget_split) if self.budget_split else None
        return d


def _enc(x: float):
    return x if math.isfinite(x) else "inf"


def _dec(x) -> float:
    return math.inf if x in ("inf", None) else float(x)


def _lap(scale: float, rng, size=None):
    if not math.isfinite(scale) or scale == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return laplace_noise(scale, rng, size=size)


# Gaussian Naive Bayes ---------------------------------------------------------


@dataclass
class GaussianNBModel:
    class_priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    epsilon0: float = math.inf
    budgets: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "gaussian_nb",
                "class_priors": self.class_priors.tolist(),
                "means": self.means.tolist(),
                "variances": self.variances.tolist(),
                "epsilon0": _enc(self.epsilon0),
                "budgets": self.budgets,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> GaussianNBModel:
        d = json.loads(text)
        return cls(np.array(d["class_priors"]), np.array(d["means"]), np.array(d["variances"]), _dec(d["epsilon0"]), d["budgets"])


def _nb_budgets(eps: float, n_cols: int, split) -> dict:
    counts, means, variances = split or (1 / 3, 1 / 3, 1 / 3)
    return {
        "counts": eps * counts,
        "means_per_feature": eps * means / n_cols,
        "variances_per_feature": eps * variances / n_cols,
    }


def train_dp_gaussian_nb(d: Dataset, cfg: TrainConfig, rng: np.random.Generator) -> GaussianNBModel:
    """Laplace-perturbed class counts, feature sums and squared-deviation sums.

    Sums are taken on bound-shifted values so their sensitivity is the bound
    width. A row affects only its own class, so per-class releases compose
    in parallel.
    """
    if d.task != CLASSIFICATION:
        raise TrainingError("Gaussian NB needs a classification dataset")
    d = clip_to_bounds(d)
    X, y = d.features, d.targets
    n_classes, n_cols = d.n_classes, d.n_cols
    lo, width = d.bounds[:, 0], d.widths
    floor = cfg.variance_floor if cfg.variance_floor is not None else np.maximum(1e-4 * width**2, 1e-12)
    budgets = _nb_budgets(cfg.epsilon0, n_cols, cfg.budget_split)

    counts = np.bincount(y, minlength=n_classes).astype(float)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise TrainingError(f"classes {missing} absent from training data")
    # Noise arrays are drawn in a fixed order: counts, sums, squared deviations.
    noisy_counts = counts + _lap(1.0 / budgets["counts"], rng, size=n_classes)
    noisy_counts = np.maximum(noisy_counts, 1.0)

    shifted = X - lo
    sums = np.zeros((n_classes, n_cols))
    np.add.at(sums, y, shifted)
    sums = sums + _lap(1.0, rng, size=(n_classes, n_cols)) * (width / budgets["means_per_feature"])
    means = np.clip(lo + sums / noisy_counts[:, None], d.bounds[:, 0], d.bounds[:, 1])

    dev = (X - means[y]) ** 2
    ssd = np.zeros((n_classes, n_cols))
    np.add.at(ssd, y, dev)
    ssd = ssd + _lap(1.0, rng, size=(n_classes, n_cols)) * (width**2 / budgets["variances_per_feature"])
    variances = np.maximum(ssd / noisy_counts[:, None], floor)

    priors = noisy_counts / noisy_counts.sum()
    return GaussianNBModel(priors, means, variances, cfg.epsilon0, budgets)


def nb_log_scores(m: GaussianNBModel, X) -> np.ndarray:
    """Joint log-likelihood per class, shape ``(n_rows, n_classes)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != m.means.shape[1]:
        raise ValueError(f"expected {m.means.shape[1]} features, got shape {X.shape}")
    var = m.variances
    log_norm = -0.5 * np.log(2 * np.pi * var).sum(axis=1)
    quad = ((X[:, None, :] - m.means[None]) ** 2 / var[None]).sum(axis=2)
    return np.log(m.class_priors)[None] + log_norm[None] - 0.5 * quad


def predict_nb(m: GaussianNBModel, X_test) -> np.ndarray:
    # argmax returns the first maximum: ties go to the lowest class index.
    return np.argmax(nb_log_scores(m, X_test), axis=1)


# Linear regression ------------------------------------------------------------


@dataclass
class LinRegModel:
    weights: np.ndarray
    intercept: float
    epsilon0: float = math.inf
    ridge: float = 0.0
    budgets: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "linear_regression",
                "weights": self.weights.tolist(),
                "intercept": self.intercept,
                "epsilon0": _enc(self.epsilon0),
                "ridge": self.ridge,
                "budgets": self.budgets,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> LinRegModel:
        d = json.loads(text)
        return cls(np.array(d["weights"]), float(d["intercept"]), _dec(d["epsilon0"]), float(d["ridge"]), d["budgets"])


def default_clip_norm(d: Dataset) -> float:
    """Largest L1 norm a bounded row can have, intercept column included."""
    return float(np.abs(d.bounds).max(axis=1).sum()) + 1.0


def _well_posed(A: np.ndarray) -> bool:
    if not np.all(np.isfinite(A)):
        return False
    eig = np.linalg.eigvalsh(A)
    return eig[0] > 0 and eig[0] > 1e-12 * eig[-1]


def train_dp_linreg(d: Dataset, cfg: TrainConfig, rng: np.random.Generator) -> LinRegModel:
    """Sufficient-statistics perturbation of ``X^T X`` and ``X^T y``.

    Rows get a constant intercept column and are scaled to L1 norm at most
    ``B``, targets clipped to ``|y| <= y_max``. Under removal adjacency the
    upper triangle of ``X^T X`` then has L1 sensitivity ``B**2`` and
    ``X^T y`` has ``B * y_max``.
    """
    if d.task != REGRESSION:
        raise TrainingError("linear regression needs a regression dataset")
    d = clip_to_bounds(d)
    B = cfg.clip_norm if cfg.clip_norm is not None else default_clip_norm(d)
    if B <= 1.0:
        raise TrainingError("clip norm must exceed 1 to leave room for the intercept column")
    y_max = max(abs(d.target_bounds[0]), abs(d.target_bounds[1]))

    X = d.features
    l1 = np.abs(X).sum(axis=1)
    scale = np.minimum(1.0, (B - 1.0) / np.maximum(l1, 1e-300))
    Z = np.column_stack([X * scale[:, None], np.ones(len(X))])
    y = np.clip(d.targets, -y_max, y_max)

    split = cfg.budget_split or (0.5, 0.5)
    eps_xx, eps_xy = cfg.epsilon0 * split[0], cfg.epsilon0 * split[1]
    budgets = {"xtx": eps_xx, "xty": eps_xy}
    dim = Z.shape[1]
    xtx = Z.T @ Z
    xty = Z.T @ y
    if cfg.private:
        iu = np.triu_indices(dim)
        noise = np.zeros((dim, dim))
        noise[iu] = laplace_noise(B * B / eps_xx, rng, size=len(iu[0]))
        noise = noise + np.triu(noise, 1).T
        xtx = xtx + noise
        xty = xty + laplace_noise(B * y_max / eps_xy, rng, size=dim)

    lam = cfg.ridge
    base = max(float(np.abs(np.diag(xtx)).max()), 1.0)
    for _ in range(cfg.max_ridge_doublings + 1):
        A = xtx + lam * np.eye(dim)
        if _well_posed(A):
            break
        lam = 2.0 * lam if lam > 0 else 1e-10 * base
    else:
        eig = np.linalg.eigvalsh(xtx) if np.all(np.isfinite(xtx)) else np.array([np.nan])
        raise TrainingError(
            f"normal equations ill-posed after ridge {lam:.3g}; eigenvalue range [{eig[0]:.3g}, {eig[-1]:.3g}]"
        )
    w = np.linalg.solve(A, xty)
    return LinRegModel(w[:-1].copy(), float(w[-1]), cfg.epsilon0, float(lam), budgets)


def predict_linreg(m: LinRegModel, X_test) -> np.ndarray:
    X = np.asarray(X_test, dtype=float)
    if X.ndim != 2 or X.shape[1] != m.weights.shape[0]:
        raise ValueError(f"expected {m.weights.shape[0]} features, got shape {X.shape}")
    return X @ m.weights + m.intercept


@dataclass(frozen=True)
class ModelKind:
    """Bundles a learner with its predictor for the audit pipeline."""

    name: str
    task: str
    train: object
    predict: object

    def fit(self, d: Dataset, cfg: TrainConfig, rng):
        return self.train(d, cfg, rng)


MODEL_KINDS = {
    "gaussian_nb": ModelKind("gaussian_nb", CLASSIFICATION, train_dp_gaussian_nb, predict_nb),
    "linear_regression": ModelKind("linear_regression", REGRESSION, train_dp_linreg, predict_linreg),
}


def get_model_kind(name: str) -> ModelKind:
    try:
        return MODEL_KINDS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_KINDS)}") from None
