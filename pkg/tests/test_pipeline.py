import numpy as np
import pytest

from dpaudit.data import AdjacencySpec, Dataset
from dpaudit.detector import SweepConfig
from dpaudit.models import TrainConfig
from dpaudit.pipeline import MLPipeline, audit_ml_pipeline
from dpaudit.report import from_sweep
from dpaudit.resampling import ResampleConfig

FULL = AdjacencySpec()


def skewed(n=120, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, 3))
    return Dataset.from_arrays(X, X @ [1.0, 2.0, 0.5] + rng.exponential(size=n))


def blobs(n=40, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-1, 0.5, size=(n, 2)), rng.normal(1, 0.5, size=(n, 2))])
    return Dataset.from_arrays(X, np.repeat([0, 1], n), task="classification")


def test_nonprivate_pipeline_is_deterministic_and_shifts_with_removal():
    m = MLPipeline(skewed(), "linear_regression", TrainConfig())
    a = m.sample(FULL, [0, 1], 3, np.random.default_rng(0))
    assert np.all(a == a[0])
    b = m.sample(AdjacencySpec.of([5]), [0, 1], 1, np.random.default_rng(0))
    assert not np.array_equal(a[0], b[0])


def test_predictions_use_full_dataset_rows():
    d = skewed()
    m = MLPipeline(d, "linear_regression", TrainConfig())
    # predicting at a removed row is still defined: args index the full dataset
    out = m.run_once(AdjacencySpec.of([0]), [0], np.random.default_rng(0))
    assert out.shape == (1,)


def test_resample_seeding_modes():
    d = skewed()
    rc = ResampleConfig("random-over", 1.0)
    fixed = MLPipeline(d, "linear_regression", TrainConfig(), rc, resample_seed=11)
    s = fixed.sample(FULL, [0], 4, np.random.default_rng(0))
    assert np.all(s == s[0])
    per_run = MLPipeline(d, "linear_regression", TrainConfig(), rc)
    s = per_run.sample(FULL, [0], 4, np.random.default_rng(0))
    assert len(np.unique(s)) > 1
    assert per_run.describe()["resample_seeding"] == "per-run"


def test_task_mismatch_rejected():
    with pytest.raises(ValueError):
        MLPipeline(blobs(), "linear_regression", TrainConfig())
    with pytest.raises(ValueError):
        MLPipeline(blobs(), "gaussian_nb", TrainConfig(), ResampleConfig("smote", 0.5))


def test_nonprivate_nb_constant_predictions_read_zero():
    # well-separated classes: removing one row never flips a label
    d = blobs()
    grid = (0.1, 0.5, 1.0, 2.0)
    cfg = SweepConfig(grid=grid, n_iterations=100, n_explore=20, n_candidates=3, strategy="random")
    rep = audit_ml_pipeline(d, "gaussian_nb", ResampleConfig(), cfg, TrainConfig(), seed=0)
    assert rep.measured.status == "below-grid"


def test_private_nb_audit_runs_and_is_reproducible():
    d = blobs(30)
    cfg = SweepConfig(grid=(0.5, 2.0), n_iterations=200, n_explore=40, n_candidates=2)
    a = audit_ml_pipeline(d, "gaussian_nb", ResampleConfig(), cfg, TrainConfig(epsilon0=1.0), seed=3)
    b = audit_ml_pipeline(d, "gaussian_nb", ResampleConfig(), cfg, TrainConfig(epsilon0=1.0), seed=3, workers=4)
    assert from_sweep(a).dumps() == from_sweep(b).dumps()


def test_group_label():
    cfg = SweepConfig(grid=(1.0,), n_iterations=100, n_explore=20, n_candidates=1, k=2)
    rep = audit_ml_pipeline(skewed(60), "linear_regression", ResampleConfig(), cfg, TrainConfig(epsilon0=5.0), seed=0)
    assert rep.group_size == 2 and "k=2" in rep.measured_label
    assert rep.results[0].input.d2.k == 2


def test_bad_seeding_mode():
    cfg = SweepConfig(grid=(1.0,), n_iterations=100, n_explore=20, n_candidates=1)
    with pytest.raises(ValueError):
        audit_ml_pipeline(skewed(), "linear_regression", ResampleConfig(), cfg, TrainConfig(), seed=0, resample_seeding="sometimes")


def test_nonprivate_linreg_on_exact_fit_reads_zero():
    x = np.linspace(0, 1, 30)
    d = Dataset.from_arrays(np.column_stack([x, x**2]), 2 * x - x**2 + 1)
    cfg = SweepConfig(grid=(0.1, 0.5, 1.0), n_iterations=100, n_explore=20, n_candidates=5)
    rep = audit_ml_pipeline(d, "linear_regression", ResampleConfig(), cfg, TrainConfig(), seed=0)
    assert rep.measured.status == "below-grid" and rep.measured.rendered == 0.0


def test_measured_epsilon_grows_with_budget():
    d = skewed(200)
    grid = tuple(np.round(np.linspace(0.25, 4.0, 16), 4))
    cfg = SweepConfig(grid=grid, n_iterations=300, n_explore=100, n_candidates=3, strategy="extreme")
    low = audit_ml_pipeline(d, "linear_regression", ResampleConfig(), cfg, TrainConfig(epsilon0=10.0), seed=0)
    high = audit_ml_pipeline(d, "linear_regression", ResampleConfig(), cfg, TrainConfig(epsilon0=100.0), seed=0)
    assert high.measured.rendered >= low.measured.rendered
