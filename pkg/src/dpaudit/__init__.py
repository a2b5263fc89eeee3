"""Statistical privacy auditing for machine-learning pipelines."""

from dpaudit.data import AdjacencySpec, Dataset, clip_to_bounds, load_csv, remove_rows

__all__ = ["AdjacencySpec", "Dataset", "clip_to_bounds", "load_csv", "remove_rows"]

__version__ = "0.1.0"
