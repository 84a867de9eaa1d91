"""Log-space metrics, per-category evaluation reports and composition tables."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .splits import CATEGORIES

SHARE_COLUMNS = ("dif", "con", "contribution")
REPORT_CATEGORIES = ("total",) + CATEGORIES


def male(labels, predictions) -> float:
    """Mean absolute error between log-space labels and predictions."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError("labels and predictions differ in length")
    if y.size == 0:
        raise ValueError("MALE of an empty sample is undefined")
    return float(np.mean(np.abs(y - p)))


def log_r2(labels, predictions) -> float:
    """Coefficient of determination in log space (may be negative)."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError("labels and predictions differ in length")
    if y.size < 2:
        raise ValueError("LogR2 needs at least two samples")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("LogR2 is undefined for zero label variance")
    return float(1.0 - np.sum((y - p) ** 2) / ss_tot)


@dataclass
class MetricRow:
    n: int
    male: Optional[float] = None
    log_r2: Optional[float] = None
    note: str = ""


@dataclass
class EvalReport:
    rows: dict
    predictions: pd.DataFrame = field(repr=False, default=None)
    composition: Optional[dict] = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"metrics": {c: asdict(r) for c, r in self.rows.items()}}

    def table(self) -> pd.DataFrame:
        """Rows MALE / LogR2 / n, one column per category."""
        cols = {c: [r.male, r.log_r2, r.n] for c, r in self.rows.items()}
        return pd.DataFrame(cols, index=["MALE", "LogR2", "n"])

    def save(self, path: str | Path) -> Path:
        """Write ``path`` (JSON metrics) plus CSV tables alongside it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        stem = path.with_suffix("")
        self.table().to_csv(f"{stem}_table.csv")
        if self.predictions is not None:
            self.predictions.to_csv(f"{stem}_predictions.csv", index=False)
        if self.composition:
            save_composition(self.composition, Path(f"{stem}_composition"))
        return path


def metric_rows(frame: pd.DataFrame, categories: Sequence[str] = CATEGORIES) -> dict:
    """Metrics overall and per category from a frame with label/total/category columns."""
    rows = {}
    groups = [("total", frame)] + [(c, frame[frame["category"] == c]) for c in categories]
    for name, g in groups:
        row = MetricRow(n=len(g))
        if len(g) == 0:
            row.note = "no samples in this category"
        else:
            row.male = male(g["label"], g["total"])
            try:
                row.log_r2 = log_r2(g["label"], g["total"])
            except ValueError as exc:
                row.note = str(exc)
        rows[name] = row
    return rows


def predictions_frame(samples, parts: np.ndarray, totals: np.ndarray) -> pd.DataFrame:
    """Per-sample breakdown export: paper_id, dif, con, contribution, total, label, category, pub_time.

    Values are widened to float64 (exact for float32 input) so the CSV export
    round-trips without loss.
    """
    parts = np.asarray(parts, dtype=np.float64)
    return pd.DataFrame({
        "paper_id": [s.target for s in samples],
        "dif": parts[:, 0],
        "con": parts[:, 1],
        "contribution": parts[:, 2],
        "total": np.asarray(totals, dtype=np.float64),
        "label": [s.label for s in samples],
        "category": [s.category for s in samples],
        "pub_time": [s.pub_time for s in samples],
        "observation_point": [s.observation_point for s in samples],
    })


def report_composition(breakdowns: pd.DataFrame, n_value_bins: int = 5) -> dict:
    """Percentage shares of diffusion/conformity/contribution.

    Only samples whose three values are all positive enter the share tables;
    they are summarized (mean, std) by publication time, category and
    equal-width bins of the predicted total.  Samples with a non-positive
    value are summarized separately, including how many have the contribution
    as their smallest value.
    """
    df = breakdowns.copy()
    parts = df[list(SHARE_COLUMNS)].to_numpy(dtype=np.float64)
    positive = (parts > 0).all(axis=1)
    pos = df[positive].copy()
    shares = parts[positive] / parts[positive].sum(axis=1, keepdims=True) * 100.0
    for j, c in enumerate(SHARE_COLUMNS):
        pos[f"{c}_pct"] = shares[:, j]
    pct_cols = [f"{c}_pct" for c in SHARE_COLUMNS]

    def summarize(frame, key):
        if frame.empty:
            return pd.DataFrame(columns=[key, "n"] + [f"{c}_{s}" for c in pct_cols for s in ("mean", "std")])
        g = frame.groupby(key, observed=True, sort=True)[pct_cols]
        mean = g.mean().add_suffix("_mean")
        std = g.std(ddof=0).add_suffix("_std")
        out = pd.concat([g.size().rename("n"), mean, std], axis=1)
        out = out[["n"] + [f"{c}_{s}" for c in pct_cols for s in ("mean", "std")]]
        return out.reset_index()

    if len(pos):
        lo, hi = pos["total"].min(), pos["total"].max()
        edges = np.linspace(lo, hi, n_value_bins + 1) if hi > lo else np.array([lo - 0.5, hi + 0.5])
        pos["value_bin"] = np.clip(np.searchsorted(edges, pos["total"], side="right") - 1, 0, len(edges) - 2)
    else:
        pos["value_bin"] = pd.Series(dtype=int)

    neg = df[~positive]
    argmin = np.argmin(parts[~positive], axis=1) if (~positive).any() else np.zeros(0, dtype=int)
    negative = pd.DataFrame([{
        "n": int(len(neg)),
        "n_min_contribution": int((argmin == 2).sum()),
        "share_min_contribution": float((argmin == 2).mean()) if len(neg) else float("nan"),
    }])
    return {
        "per_sample": pos[["paper_id"] + list(SHARE_COLUMNS) + ["total"] + pct_cols
                          + [c for c in ("pub_time", "category") if c in pos]],
        "by_time": summarize(pos, "pub_time") if "pub_time" in pos else None,
        "by_category": summarize(pos, "category") if "category" in pos else None,
        "by_value_bin": summarize(pos, "value_bin"),
        "negative": negative,
    }


def save_composition(tables: dict, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, frame in tables.items():
        if frame is not None:
            frame.to_csv(out / f"{name}.csv", index=False)
    return out

