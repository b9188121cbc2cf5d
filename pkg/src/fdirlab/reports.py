"""Histogram data and file export for evaluation reports.

Plotting is left to the caller; these helpers return bin edges and counts
with the persistency marked, which is what the delay and false-positive
duration diagnostics need.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .simgen import SENSORS


@dataclass
class Histogram:
    name: str
    edges: np.ndarray
    counts: np.ndarray
    marker: int | None = None

    @property
    def total(self):
        return int(self.counts.sum())

    def mass_at_or_above_marker(self):
        """Fraction of values in bins starting at or after ``marker``."""
        if self.marker is None or not self.total:
            return 0.0
        return float(self.counts[self.edges[:-1] >= self.marker].sum() / self.total)

    def to_dict(self):
        return {"name": self.name, "edges": self.edges.tolist(),
                "counts": self.counts.tolist(), "marker": self.marker}

    def render(self, width=40):
        """Plain-text bar chart; the bin holding ``marker`` is tagged with ``<P``."""
        lines = [self.name]
        top = max(int(self.counts.max()), 1) if self.counts.size else 1
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            tag = " <P" if self.marker is not None and lo <= self.marker < hi else ""
            lines.append(f"{lo:6g}-{hi:<6g} {'#' * int(round(width * c / top)):<{width}} {c}{tag}")
        return "\n".join(lines)


def histogram(values, name, bin_width=5, marker=None, upper=None):
    """Integer-aligned histogram starting at 0; ``upper`` defaults to the data range."""
    v = np.asarray(values, dtype=float)
    hi = upper if upper is not None else max(float(v.max()) if v.size else 0.0,
                                            float(marker or 0))
    n_bins = max(1, int(np.ceil((hi + 1) / bin_width)))
    edges = np.arange(n_bins + 1, dtype=float) * bin_width
    counts, _ = np.histogram(np.clip(v, 0, edges[-1] - 1e-9), bins=edges)
    return Histogram(name, edges, counts.astype(np.int64), marker)


def eval_histograms(report, bin_width=5):
    """Delay and false-positive duration histograms per sensor of an EvalReport."""
    out = {}
    for s in SENSORS:
        det = report.detection[s]
        tag = s.name.lower()
        out[f"{tag}_delay"] = histogram(det.prediction_delays, f"{tag} prediction delay",
                                        bin_width, report.persistency)
        out[f"{tag}_fp_duration"] = histogram(det.false_positive_durations,
                                              f"{tag} false-positive duration",
                                              bin_width, report.persistency)
    return out


SUMMARY_FIELDS = ("sensor", "persistency", "n_faults", "missed_faults_score",
                  "uncertain_prediction_score", "mean_delay", "tp", "fp", "fn", "duplicates",
                  "reaction_precision", "reaction_recall", "false_positives_percentage")


def summary_rows(report):
    rows = []
    for s in SENSORS:
        det, sysr = report.detection[s], report.system[s]
        delays = det.prediction_delays
        rows.append({"sensor": s.name.lower(), "persistency": report.persistency,
                     "n_faults": det.n_faults,
                     "missed_faults_score": det.missed_faults_score,
                     "uncertain_prediction_score": det.uncertain_prediction_score,
                     "mean_delay": float(np.mean(delays)) if delays else float("nan"),
                     "tp": sysr.tp, "fp": sysr.fp, "fn": sysr.fn, "duplicates": sysr.duplicates,
                     "reaction_precision": sysr.reaction_precision,
                     "reaction_recall": sysr.reaction_recall,
                     "false_positives_percentage": sysr.false_positives_percentage})
    return rows


def write_summary_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_FIELDS)
        w.writeheader()
        w.writerows(summary_rows(report))
    return Path(path)


def write_report_json(report, path, histograms=None, extra=None):
    doc = report.to_dict()
    doc["histograms"] = {k: h.to_dict() for k, h in (histograms or {}).items()}
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2))
    return Path(path)


def sweep_rows(sweep):
    """Flatten a persistency sweep into one row per (persistency, sensor)."""
    rows = []
    for p, system in sorted(sweep.curve.items()):
        for s in SENSORS:
            r = system[s]
            rows.append({"persistency": p, "sensor": s.name.lower(),
                         "reaction_precision": r.reaction_precision,
                         "reaction_recall": r.reaction_recall,
                         "false_positives_percentage": r.false_positives_percentage,
                         "compliant": int(not sweep.violations[p]),
                         "chosen": int(p == sweep.chosen)})
    return rows


def write_sweep_csv(sweep, path):
    rows = sweep_rows(sweep)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, list(rows[0]) if rows else ["persistency"])
        w.writeheader()
        w.writerows(rows)
    return Path(path)
