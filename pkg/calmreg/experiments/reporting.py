"""Experiment configuration and report payloads.

Reports serialize to RFC-4180 CSV (header row, LF line endings, shortest
round-trip floats) plus a JSON metadata sidecar. The CSV depends only on the
configuration and seed; wall time and versions live in the sidecar.
"""

import csv
import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from calmreg import __version__
from calmreg.config import ExperimentKind, NoiseKind

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["statistic", "x", "theoretical", "empirical", "std_error", "passed", "constant"]


def canonical_hash(payload: Dict[str, Any]) -> str:
    """SHA-256 of the sorted, compact JSON form of ``payload``."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ExperimentConfig(BaseModel):
    """Seeded specification of one Monte Carlo experiment."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: ExperimentKind
    seed: int = Field(0, ge=0, lt=2 ** 64)
    replications: int = Field(..., ge=100)
    noise: NoiseKind = NoiseKind.GAUSSIAN
    fixture: str = "linear"
    p: int = Field(2, ge=1)
    q: Optional[int] = Field(None, ge=1)
    n: int = Field(100, ge=1)
    dim: int = Field(20, ge=1)
    sigma: float = Field(1.0, ge=0.0)
    x_grid: List[float] = Field(default_factory=lambda: [1.0])
    x_level: float = Field(3.0, gt=0.0)
    penalty: float = Field(0.0, ge=0.0)
    g: Optional[float] = Field(None, gt=0.0)
    risk_tolerance: float = Field(0.03, gt=0.0)

    @field_validator("x_grid")
    @classmethod
    def _sorted_grid(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("x_grid must not be empty")
        if any(x < 0 or not math.isfinite(x) for x in value):
            raise ValueError("x_grid entries must be finite and nonnegative")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("x_grid must be strictly increasing")
        return value

    @model_validator(mode="after")
    def _projection_fits(self) -> 'ExperimentConfig':
        if self.q is not None and self.q > self.n:
            raise ValueError(f"q={self.q} exceeds n={self.n}")
        return self

    def config_hash(self) -> str:
        return canonical_hash(self.model_dump(mode="json"))


class ReportRow(BaseModel):
    """One checked statistic.

    ``informational`` rows describe the run (for example whether the calming
    conditions held) and do not affect ``Report.passed``.
    """
    model_config = ConfigDict(extra="forbid")

    statistic: str
    x: Optional[float] = None
    theoretical: float
    empirical: float
    std_error: float = 0.0
    passed: bool
    constant: str = ""
    informational: bool = False


class ReportMetadata(BaseModel):
    experiment: str
    seed: int
    config_hash: str
    wall_time_s: float = 0.0
    versions: Dict[str, str] = Field(default_factory=dict)
    notes: Dict[str, Any] = Field(default_factory=dict)


def library_versions() -> Dict[str, str]:
    return {"calmreg": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def format_value(value: Any) -> str:
    """Shortest round-trip text for CSV cells."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_csv(columns: List[str], rows: List[List[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


class Report(BaseModel):
    rows: List[ReportRow]
    metadata: ReportMetadata

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows if not row.informational)

    @property
    def failures(self) -> List[str]:
        return [row.statistic for row in self.rows if not row.passed and not row.informational]

    def to_csv(self) -> str:
        return write_csv(CSV_COLUMNS, [[getattr(row, c) for c in CSV_COLUMNS] for row in self.rows])

    def write(self, path) -> Path:
        """Write the CSV to ``path`` and the metadata to ``path`` with a ``.json`` suffix."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8", newline="")
        sidecar = path.with_suffix(".json")
        sidecar.write_text(self.metadata.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"wrote {path} and {sidecar}")
        return sidecar


def merge_reports(reports: List[Report], experiment: str, seed: int) -> Report:
    """Concatenate rows of several reports under one metadata block."""
    rows = [row for report in reports for row in report.rows]
    digest = hashlib.sha256("".join(r.metadata.config_hash for r in reports).encode("utf-8")).hexdigest()
    wall = sum(r.metadata.wall_time_s for r in reports)
    return Report(rows=rows, metadata=ReportMetadata(experiment=experiment, seed=seed, config_hash=digest,
                                                     wall_time_s=wall, versions=library_versions()))


__all__ = [
    "CSV_COLUMNS",
    "canonical_hash",
    "ExperimentConfig",
    "ReportRow",
    "ReportMetadata",
    "Report",
    "library_versions",
    "format_value",
    "write_csv",
    "merge_reports",
]
