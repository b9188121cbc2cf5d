"""Interval-based Detection and System metrics and the weighted F-beta objective.

Tracks are 1-D boolean arrays (True = fault).  A *fault* is a maximal run of
True in the label track ``y``; a *predicted run* is a maximal run of True in
``y_pred``.

Detection metrics look at faults directly: missed (no positive sample
inside), delay (first positive sample inside minus fault start), uncertain
(positives inside form two or more runs) and false-positive durations
(predicted runs touching no fault).

System metrics look at recovery reactions produced by the persistency chain:
a reaction whose triggering segment ``[source_run_start, trigger_sample]``
overlaps a fault is a TP (at most one per fault, extras are duplicates), one
that overlaps no fault is a FP, and a fault without a TP reaction is a FN.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .fdir import FdirConfig, run_chain
from .simgen import SENSORS, Sensor


def segment_intervals(track):
    """Maximal True runs as an ``(k, 2)`` int array of ``[start, end)``."""
    t = np.asarray(track, dtype=bool).ravel()
    if t.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    d = np.diff(np.concatenate([[False], t, [False]]).astype(np.int8))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return np.stack([starts, ends], axis=1).astype(np.int64)


def intervals_to_track(intervals, length):
    t = np.zeros(length, dtype=bool)
    for s, e in intervals:
        t[s:e] = True
    return t


def _check_pair(y, y_pred):
    y = np.asarray(y, dtype=bool).ravel()
    y_pred = np.asarray(y_pred, dtype=bool).ravel()
    if y.shape != y_pred.shape:
        raise DataError(f"label/prediction length mismatch: {y.size} vs {y_pred.size}")
    return y, y_pred


# --------------------------------------------------------------------------
# detection metrics


@dataclass
class DetectionReport:
    """Per-fault detection outcome plus false-positive run lengths.

    ``fault_delays[i]`` is -1 for a missed fault.
    """

    fault_durations: list = field(default_factory=list)
    fault_delays: list = field(default_factory=list)
    fault_uncertain: list = field(default_factory=list)
    false_positive_durations: list = field(default_factory=list)

    @property
    def n_faults(self):
        return len(self.fault_durations)

    @property
    def n_missed(self):
        return sum(d < 0 for d in self.fault_delays)

    @property
    def n_uncertain(self):
        return sum(self.fault_uncertain)

    @property
    def missed_faults_score(self):
        return self.n_missed / self.n_faults if self.n_faults else 0.0

    @property
    def uncertain_prediction_score(self):
        return self.n_uncertain / self.n_faults if self.n_faults else 0.0

    @property
    def prediction_delays(self):
        return [d for d in self.fault_delays if d >= 0]

    def combine(self, other):
        return DetectionReport(self.fault_durations + other.fault_durations,
                               self.fault_delays + other.fault_delays,
                               self.fault_uncertain + other.fault_uncertain,
                               self.false_positive_durations + other.false_positive_durations)

    def to_dict(self):
        return {"n_faults": self.n_faults, "n_missed": self.n_missed,
                "n_uncertain": self.n_uncertain,
                "missed_faults_score": self.missed_faults_score,
                "uncertain_prediction_score": self.uncertain_prediction_score,
                "prediction_delays": list(map(int, self.prediction_delays)),
                "false_positive_durations": list(map(int, self.false_positive_durations)),
                "fault_durations": list(map(int, self.fault_durations)),
                "fault_delays": list(map(int, self.fault_delays))}


def detection_metrics(y, y_pred):
    y, y_pred = _check_pair(y, y_pred)
    faults = segment_intervals(y)
    rep = DetectionReport()
    for s, e in faults:
        inside = y_pred[s:e]
        rep.fault_durations.append(int(e - s))
        if not inside.any():
            rep.fault_delays.append(-1)
            rep.fault_uncertain.append(False)
            continue
        rep.fault_delays.append(int(np.argmax(inside)))
        rises = np.count_nonzero(inside[1:] & ~inside[:-1]) + int(inside[0])
        rep.fault_uncertain.append(rises >= 2)
    cy = np.concatenate([[0], np.cumsum(y)])
    for s, e in segment_intervals(y_pred):
        if cy[e] == cy[s]:
            rep.false_positive_durations.append(int(e - s))
    return rep


# --------------------------------------------------------------------------
# system metrics


@dataclass
class SystemReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    duplicates: int = 0
    n_faults: int = 0
    persistency_used: int = 0

    @property
    def reaction_precision(self):
        """TP / (TP + FP); 1 when no reaction was triggered."""
        den = self.tp + self.fp
        return self.tp / den if den else 1.0

    @property
    def reaction_recall(self):
        """TP / (TP + FN); 1 when there is no fault."""
        den = self.tp + self.fn
        return self.tp / den if den else 1.0

    @property
    def false_positives_percentage(self):
        """FP reactions over the expected reaction count (one per fault).

        With no faults at all the FP count itself is returned.
        """
        return self.fp / self.n_faults if self.n_faults else float(self.fp)

    def combine(self, other):
        if self.persistency_used != other.persistency_used:
            raise DataError("cannot combine reports computed with different persistency")
        return SystemReport(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                            self.duplicates + other.duplicates,
                            self.n_faults + other.n_faults, self.persistency_used)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.update(reaction_precision=self.reaction_precision,
                 reaction_recall=self.reaction_recall,
                 false_positives_percentage=self.false_positives_percentage)
        return d


def reaction_outcomes(y, reactions, persistency):
    """Classify reactions against the faults of ``y``.

    Returns ``(tp, fp, fn, duplicates)``.
    """
    y = np.asarray(y, dtype=bool).ravel()
    faults = segment_intervals(y)
    credited = np.zeros(len(faults), dtype=bool)
    fp = dup = 0
    for r in reactions:
        a, b = r.source_run_start, r.trigger_sample
        if b - a + 1 != persistency:
            raise DataError(f"reaction at {b} spans {b - a + 1} samples, "
                            f"persistency is {persistency}")
        # faults with start <= b and end > a
        hit = np.flatnonzero((faults[:, 0] <= b) & (faults[:, 1] > a))
        if hit.size == 0:
            fp += 1
            continue
        fresh = hit[~credited[hit]]
        if fresh.size:
            credited[fresh[0]] = True
        else:
            dup += 1
    tp = int(credited.sum())
    return tp, fp, len(faults) - tp, dup


def system_metrics(y, y_pred, persistency, fdir_cfg=None, sensor=Sensor.ACCELEROMETER):
    """Chain replay of ``y_pred`` followed by :func:`reaction_outcomes`.

    ``fdir_cfg`` supplies the re-arm policy; its persistency is overridden.
    """
    y, y_pred = _check_pair(y, y_pred)
    cfg = dataclasses.replace(fdir_cfg or FdirConfig(), persistency=int(persistency))
    reactions = run_chain(y_pred, cfg, sensors=(Sensor(sensor),))[Sensor(sensor)]
    tp, fp, fn, dup = reaction_outcomes(y, reactions, cfg.persistency)
    return SystemReport(tp, fp, fn, dup, tp + fn, cfg.persistency)


# --------------------------------------------------------------------------
# objective


@dataclass(frozen=True)
class ObjectiveConfig:
    weights: tuple = (0.5, 0.5)
    beta: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if any(w < 0 for w in self.weights):
            raise ConfigError("weights", "must be >= 0")
        if not self.beta > 0:
            raise ConfigError("beta", "must be > 0")

    @property
    def n_out(self):
        return len(self.weights)


def _pr(report):
    if isinstance(report, SystemReport):
        return report.reaction_precision, report.reaction_recall
    pr, re = report
    return float(pr), float(re)


def f_beta(reports, cfg=ObjectiveConfig()):
    """Weighted sum over outputs of (1+b^2) Pr Re / (b^2 Pr + Re).

    ``reports`` holds one :class:`SystemReport` or ``(precision, recall)``
    pair per network output.  A term whose denominator is zero adds 0.
    """
    reports = list(reports)
    if len(reports) != cfg.n_out:
        raise ConfigError("weights", f"{cfg.n_out} weights for {len(reports)} outputs")
    b2 = cfg.beta ** 2
    total = 0.0
    for w, rep in zip(cfg.weights, reports):
        pr, re = _pr(rep)
        den = b2 * pr + re
        if den > 0:
            total += w * (1 + b2) * pr * re / den
    return total


# --------------------------------------------------------------------------
# dataset-level evaluation


@dataclass
class EvalReport:
    persistency: int
    detection: dict
    system: dict
    objective: float

    def to_dict(self):
        return {"persistency": self.persistency, "objective": self.objective,
                "detection": {s.name.lower(): r.to_dict() for s, r in self.detection.items()},
                "system": {s.name.lower(): r.to_dict() for s, r in self.system.items()}}


def evaluate_detection(labels, pred_tracks):
    """Per-sensor :class:`DetectionReport` summed over trajectories."""
    out = {}
    for s in SENSORS:
        rep = DetectionReport()
        for y, yp in zip(labels, pred_tracks):
            rep = rep.combine(detection_metrics(y[:, s], yp[:, s]))
        out[s] = rep
    return out


def evaluate_system(labels, pred_tracks, persistency, fdir_cfg=None):
    out = {}
    for s in SENSORS:
        rep = SystemReport(persistency_used=int(persistency))
        for y, yp in zip(labels, pred_tracks):
            rep = rep.combine(system_metrics(y[:, s], yp[:, s], persistency, fdir_cfg, s))
        out[s] = rep
    return out


def evaluate(labels, pred_tracks, persistency, fdir_cfg=None, objective=ObjectiveConfig(),
             detection=None):
    """Detection + System metrics and objective over a list of ``(T, 2)`` tracks."""
    if len(labels) != len(pred_tracks):
        raise DataError("label and prediction track counts differ")
    det = detection if detection is not None else evaluate_detection(labels, pred_tracks)
    sysr = evaluate_system(labels, pred_tracks, persistency, fdir_cfg)
    return EvalReport(int(persistency), det, sysr, f_beta([sysr[s] for s in SENSORS], objective))
