"""Metadata bias regression: OLS of standardized per-patch mIoU.

The design one-hot encodes the categorical metadata (collection
institution, publication country, coverage country) with the
lexicographically first level as reference, drops records carrying a
rare category (n below a cutoff, counted before any exclusion), treats
the scale denominator on a log10 axis, min-max normalizes both
continuous variables, and z-standardizes mIoU within each dataset
partition. Coefficients come from a QR solve with normal-approximation
95% intervals, appropriate at n in the hundreds.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

CATEGORICAL_VARS = ("institution", "pub_country", "cov_country")
Z_95 = 1.959963984540054


class BiasModelError(ValueError):
    pass


@dataclass
class MetadataRecord:
    patch_id: str
    partition: str  # train | val | test
    institution: str
    pub_country: str
    cov_country: str
    scale_denominator: float
    pub_year: int
    miou: float

    def __post_init__(self):
        if not (1400 <= int(self.pub_year) <= 2030):
            raise BiasModelError(f"{self.patch_id}: implausible year {self.pub_year}")
        if not (math.isfinite(self.scale_denominator) and self.scale_denominator > 0):
            raise BiasModelError(f"{self.patch_id}: bad scale denominator {self.scale_denominator}")
        if not (0.0 <= self.miou <= 1.0):
            raise BiasModelError(f"{self.patch_id}: mIoU {self.miou} outside [0, 1]")


@dataclass
class DesignMatrix:
    labels: list[str]
    X: np.ndarray
    y: np.ndarray
    record_ids: list[str]

    @property
    def n(self) -> int:
        return len(self.y)


@dataclass
class Coefficient:
    name: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float


@dataclass
class OlsResult:
    coefficients: list[Coefficient]
    r2: float
    n: int
    dropped_columns: list[str]

    def coefficient(self, name: str) -> Coefficient:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "coefficients": [
                {"name": c.name, "estimate": c.estimate, "se": c.se,
                 "ci_low": c.ci_low, "ci_high": c.ci_high, "p": c.p_value}
                for c in self.coefficients
            ],
            "r2": self.r2,
            "n": self.n,
            "dropped_columns": self.dropped_columns,
        }


def _minmax(values: np.ndarray, label: str) -> np.ndarray | None:
    span = values.max() - values.min()
    if span <= 0:
        return None  # constant column carries no information; dropped
    return (values - values.min()) / span


def build_design(records: list[MetadataRecord], min_count: int = 5) -> DesignMatrix:
    """Assemble the regression design; see module docstring for treatment."""
    if len(records) < 10:
        raise BiasModelError(f"need at least 10 records, got {len(records)}")

    # rare-category exclusion, counted on the input set
    counters = {var: Counter(getattr(r, var) for r in records) for var in CATEGORICAL_VARS}
    kept = [
        r for r in records
        if all(counters[var][getattr(r, var)] >= min_count for var in CATEGORICAL_VARS)
    ]
    if len(kept) < 10:
        raise BiasModelError(f"only {len(kept)} records remain after rare-category exclusion")

    # z-standardize mIoU within each partition
    y = np.array([r.miou for r in kept], dtype=np.float64)
    partitions = np.array([r.partition for r in kept])
    for part in np.unique(partitions):
        sel = partitions == part
        if sel.sum() < 2:
            raise BiasModelError(f"partition {part!r} has {int(sel.sum())} records; cannot standardize")
        mu = y[sel].mean()
        sd = y[sel].std(ddof=1)
        if sd <= 0:
            raise BiasModelError(f"partition {part!r} has zero mIoU variance")
        y[sel] = (y[sel] - mu) / sd

    columns: list[np.ndarray] = [np.ones(len(kept))]
    labels: list[str] = ["intercept"]

    for var in CATEGORICAL_VARS:
        levels = sorted({getattr(r, var) for r in kept})
        for level in levels[1:]:  # first level is the reference
            columns.append(np.array([1.0 if getattr(r, var) == level else 0.0 for r in kept]))
            labels.append(f"{var}={level}")

    log_scale = _minmax(np.log10([r.scale_denominator for r in kept]), "log_scale")
    if log_scale is not None:
        columns.append(log_scale)
        labels.append("log_scale_norm")
    year = _minmax(np.array([float(r.pub_year) for r in kept]), "pub_year")
    if year is not None:
        columns.append(year)
        labels.append("pub_year_norm")

    X = np.column_stack(columns)
    return DesignMatrix(labels=labels, X=X, y=y, record_ids=[r.patch_id for r in kept])


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2))


def ols_fit(design: DesignMatrix) -> OlsResult:
    """QR-based least squares with collinear-column pruning.

    Exact duplicates / linear dependents are detected via pivoted QR and
    dropped before fitting; the pruned names are reported on the result.
    """
    from scipy.linalg import qr as scipy_qr

    X, y, labels = design.X, design.y, list(design.labels)
    n, p = X.shape

    _, R, piv = scipy_qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int((diag > tol).sum())
    dropped: list[str] = []
    if rank < p:
        keep_idx = sorted(piv[:rank])
        dropped = [labels[i] for i in sorted(piv[rank:])]
        X = X[:, keep_idx]
        labels = [labels[i] for i in keep_idx]
        n, p = X.shape
        _, R2, piv2 = scipy_qr(X, mode="economic", pivoting=True)
        d2 = np.abs(np.diag(R2))
        if int((d2 > tol).sum()) < p:
            raise BiasModelError(f"design still rank-deficient after pruning {dropped}")
    if n <= p:
        raise BiasModelError(f"{n} rows for {p} columns; need rows > columns")

    Q, R = np.linalg.qr(X)
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    s2 = rss / (n - p)
    r_inv = np.linalg.solve(R, np.eye(p))
    xtx_inv_diag = (r_inv ** 2).sum(axis=1)
    se = np.sqrt(np.maximum(s2 * xtx_inv_diag, 0.0))

    coeffs = []
    for name, b, s in zip(labels, beta, se):
        if s > 0:
            z = abs(b) / s
            pval = 2 * _normal_sf(z)
        else:
            pval = 0.0 if b != 0 else 1.0
        coeffs.append(Coefficient(
            name=name, estimate=float(b), se=float(s),
            ci_low=float(b - Z_95 * s), ci_high=float(b + Z_95 * s), p_value=float(pval),
        ))
    return OlsResult(coefficients=coeffs, r2=float(r2), n=n, dropped_columns=dropped)


# ---------------------------------------------------------------------------
# I/O for the CLI


def load_metadata_csv(path) -> list[dict]:
    """Rows of the metadata table; mIoU gets merged in from a report."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    required = {"id", "partition", "institution", "pub_country", "cov_country",
                "scale_denominator", "pub_year"}
    if rows and not required.issubset(rows[0].keys()):
        missing = sorted(required - set(rows[0].keys()))
        raise BiasModelError(f"metadata CSV missing columns: {missing}")
    return rows


def records_from_report(metadata_rows: list[dict], report: dict) -> list[MetadataRecord]:
    """Join metadata rows with per-image mIoU values from an eval report."""
    miou_by_id = {
        entry["id"]: entry["miou"]
        for entry in report.get("per_image", [])
        if entry.get("miou") is not None
    }
    records = []
    for row in metadata_rows:
        rid = row["id"]
        if rid not in miou_by_id:
            continue
        records.append(MetadataRecord(
            patch_id=rid,
            partition=row["partition"],
            institution=row["institution"],
            pub_country=row["pub_country"],
            cov_country=row["cov_country"],
            scale_denominator=float(row["scale_denominator"]),
            pub_year=int(row["pub_year"]),
            miou=float(miou_by_id[rid]),
        ))
    if not records:
        raise BiasModelError("no metadata row matched a per-image mIoU entry")
    return records


def save_result_json(result: OlsResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json(), fh, indent=1, sort_keys=True)
