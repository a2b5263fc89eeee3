"""JSON persistence of sweep reports."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from dpaudit.detector import SweepReport

SCHEMA_VERSION = 1
STATUSES = ("in-grid", "below-grid", "above-grid")


class ReportError(ValueError):
    pass


def _jsonable(v):
    """Replace non-finite floats so the output stays strict JSON."""
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class ReportFile:
    seed: int
    alpha: float
    records: list
    measured_epsilon: dict
    config: dict = field(default_factory=dict)
    mechanism: dict = field(default_factory=dict)
    group_size: int = 1
    measured_label: str = "epsilon"
    args: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    wall_clock_seconds: float | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def grid(self) -> list:
        return [r["epsilon"] for r in self.records]

    @property
    def p_values(self) -> list:
        return [min(r["p_top"], r["p_bottom"]) for r in self.records]

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "schema_version": self.schema_version,
                "seed": self.seed,
                "alpha": self.alpha,
                "group_size": self.group_size,
                "measured_label": self.measured_label,
                "measured_epsilon": self.measured_epsilon,
                "records": self.records,
                "config": self.config,
                "mechanism": self.mechanism,
                "args": self.args,
                "warnings": self.warnings,
                "wall_clock_seconds": self.wall_clock_seconds,
            }
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> ReportFile:
        if not isinstance(d, dict):
            raise ReportError("report must be a JSON object")
        if "schema_version" not in d:
            raise ReportError("report has no schema_version")
        if d["schema_version"] != SCHEMA_VERSION:
            raise ReportError(f"unsupported schema_version {d['schema_version']!r}")
        for key in ("seed", "alpha", "records", "measured_epsilon"):
            if key not in d:
                raise ReportError(f"report is missing '{key}'")
        records = d["records"]
        if not isinstance(records, list) or not records:
            raise ReportError("report has no per-epsilon records")
        for i, r in enumerate(records):
            if not isinstance(r, dict):
                raise ReportError(f"record {i} is not an object")
            for key in ("epsilon", "p_top", "p_bottom"):
                v = r.get(key)
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ReportError(f"record {i} has a non-numeric '{key}'")
        m = d["measured_epsilon"]
        if not isinstance(m, dict) or m.get("status") not in STATUSES:
            raise ReportError("measured_epsilon must carry a status in " + ", ".join(STATUSES))
        return cls(
            seed=d["seed"],
            alpha=d["alpha"],
            records=records,
            measured_epsilon=m,
            config=d.get("config", {}),
            mechanism=d.get("mechanism", {}),
            group_size=d.get("group_size", 1),
            measured_label=d.get("measured_label", "epsilon"),
            args=d.get("args", []),
            warnings=d.get("warnings", []),
            wall_clock_seconds=d.get("wall_clock_seconds"),
            schema_version=d["schema_version"],
        )

    @classmethod
    def loads(cls, text: str) -> ReportFile:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ReportError(f"report is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def from_sweep(report: SweepReport, config_snapshot: dict | None = None, wall_clock: float | None = None) -> ReportFile:
    records = []
    for r in report.results:
        records.append(
            {
                "epsilon": r.epsilon,
                "p_top": r.p_top.value,
                "p_bottom": r.p_bottom.value,
                "c1": r.counts.c1,
                "c2": r.counts.c2,
                "n": r.counts.n,
                "mc_draws": r.p_top.mc_draws,
                "event": r.event.to_dict(),
                "input": r.input.to_dict(),
            }
        )
    config = dict(report.config)
    if config_snapshot:
        config.update(config_snapshot)
    return ReportFile(
        seed=report.seed,
        alpha=report.alpha,
        records=records,
        measured_epsilon=report.measured.to_dict(),
        config=config,
        mechanism=report.mechanism,
        group_size=report.group_size,
        measured_label=report.measured_label,
        args=list(report.args),
        warnings=list(report.warnings),
        wall_clock_seconds=wall_clock,
    )


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write via a temporary sibling and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix="." + path.name + ".", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: ReportFile, path: Path | str) -> None:
    atomic_write_text(path, report.dumps())


def read_report(path: Path | str) -> ReportFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ReportError(f"report {path} is not UTF-8") from exc
    return ReportFile.loads(text)
