"""System-metric driven tuning of detector hyperparameters and persistency.

The loop structure is: for every hyperparameter set, for every quantile
range, train once and predict the validation tracks; then, for every
persistency, replay the frozen tracks through the FDIR chain and score the
System Metrics with the F-beta objective.  Persistency never needs
retraining because it acts only on the prediction tracks.

After ranking, the best candidate's persistency is swept over an interval,
the smallest value meeting the requirements is selected, the Detection
Metrics are double-checked for bias, and the result is frozen to disk.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as mt
from .errors import ConfigError, DataError, RequirementError
from .fdir import FdirConfig
from .nnet import ModelConfig, TrainConfig, fit_detector, load_model, predict_track, save_model
from .simgen import SENSORS

log = logging.getLogger(__name__)

_MODEL_FIELDS = {f.name for f in dataclasses.fields(ModelConfig)}
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
_EXTRA_FIELDS = {"train_stride", "val_stride"}


@dataclass(frozen=True)
class SearchSpace:
    """Grids to search.

    ``hyperparameter_grid`` maps a ModelConfig/TrainConfig field name (or
    ``train_stride``) to the list of values to try; the candidate sets are
    the Cartesian product.  ``budget`` caps the number of (hyperparameter,
    quantile) candidates by seeded subsampling.
    """

    hyperparameter_grid: dict = field(default_factory=lambda: {"learning_rate": [6.507411205516692e-4]})
    quantile_grid: tuple = ((33.0, 90.0),)
    persistency_grid: tuple = (27,)
    budget: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "quantile_grid",
                           tuple((float(a), float(b)) for a, b in self.quantile_grid))
        object.__setattr__(self, "persistency_grid", tuple(int(p) for p in self.persistency_grid))
        if not self.hyperparameter_grid or not self.quantile_grid or not self.persistency_grid:
            raise ConfigError("grid", "hyperparameter, quantile and persistency grids must be non-empty")
        for name, values in self.hyperparameter_grid.items():
            if name not in _MODEL_FIELDS | _TRAIN_FIELDS | _EXTRA_FIELDS:
                raise ConfigError(f"hyperparameter_grid.{name}", "unknown hyperparameter")
            if len(values) == 0:
                raise ConfigError(f"hyperparameter_grid.{name}", "empty value list")
        for lo, hi in self.quantile_grid:
            if not 0 <= lo < hi <= 100:
                raise ConfigError("quantile_grid", f"invalid range ({lo}, {hi})")
        if any(p < 1 for p in self.persistency_grid):
            raise ConfigError("persistency_grid", "persistency must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget", "must be >= 1")

    def hyperparameter_sets(self):
        names = sorted(self.hyperparameter_grid)
        return [dict(zip(names, combo))
                for combo in itertools.product(*(self.hyperparameter_grid[n] for n in names))]

    def check_windows(self, min_fault_separation):
        for w in self.hyperparameter_grid.get("window_length", []):
            if w >= min_fault_separation:
                raise ConfigError("hyperparameter_grid.window_length",
                                  f"{w} >= fault separation {min_fault_separation}")

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Requirements:
    min_reaction_precision: tuple = (0.9, 0.9)
    max_false_positives_percentage: tuple = (0.05, 0.05)
    min_recall: tuple | None = None

    def __post_init__(self):
        for name in ("min_reaction_precision", "max_false_positives_percentage", "min_recall"):
            v = getattr(self, name)
            if v is None:
                continue
            if np.isscalar(v):
                v = (v, v)
            v = tuple(float(x) for x in v)
            if any(not 0 <= x <= 1 for x in v):
                raise ConfigError(name, "thresholds must lie in [0, 1]")
            object.__setattr__(self, name, v)

    def violations(self, system):
        out = []
        for s in SENSORS:
            r = system[s]
            tag = s.name.lower()
            if r.reaction_precision < self.min_reaction_precision[s]:
                out.append(f"{tag}: precision {r.reaction_precision:.4f} < "
                           f"{self.min_reaction_precision[s]}")
            if r.false_positives_percentage > self.max_false_positives_percentage[s]:
                out.append(f"{tag}: FP percentage {r.false_positives_percentage:.4f} > "
                           f"{self.max_false_positives_percentage[s]}")
            if self.min_recall is not None and r.reaction_recall < self.min_recall[s]:
                out.append(f"{tag}: recall {r.reaction_recall:.4f} < {self.min_recall[s]}")
        return out


@dataclass
class CandidateResult:
    candidate_id: int
    hyperparameters: dict
    quantile_range: tuple
    window_length: int
    model: object = None
    labels: list = None
    pred_tracks: list = None
    detection: dict = None
    system: dict = field(default_factory=dict)
    objectives: dict = field(default_factory=dict)
    failed: bool = False
    error: str = ""

    @property
    def persistency(self):
        """Best persistency (smallest on ties) or None for a failed candidate."""
        if not self.objectives:
            return None
        best = max(self.objectives.values())
        return min(p for p, v in self.objectives.items() if v == best)

    @property
    def objective(self):
        return self.objectives[self.persistency] if self.objectives else -np.inf

    def evaluation(self, persistency=None):
        p = self.persistency if persistency is None else int(persistency)
        return mt.EvalReport(p, self.detection, self.system[p], self.objectives[p])

    def rank_key(self):
        return (-self.objective, self.persistency or 0, self.window_length, self.candidate_id)


def _split_hyper(hyper, base_model, base_train):
    model_kw = {k: v for k, v in hyper.items() if k in _MODEL_FIELDS}
    train_kw = {k: v for k, v in hyper.items() if k in _TRAIN_FIELDS}
    extra = {k: v for k, v in hyper.items() if k in _EXTRA_FIELDS}
    return (dataclasses.replace(base_model, **model_kw),
            dataclasses.replace(base_train, **train_kw), extra)


def score_tracks(cand, persistency_grid, fdir_cfg=None, objective=mt.ObjectiveConfig()):
    """Fill ``cand.system``/``cand.objectives`` from its frozen prediction tracks."""
    if cand.detection is None:
        cand.detection = mt.evaluate_detection(cand.labels, cand.pred_tracks)
    for p in persistency_grid:
        rep = mt.evaluate(cand.labels, cand.pred_tracks, p, fdir_cfg, objective, cand.detection)
        cand.system[p] = rep.system
        cand.objectives[p] = rep.objective
    return cand


def grid_search(space, train_ds, val_ds, model_cfg=ModelConfig(), train_cfg=TrainConfig(),
                fdir_cfg=None, objective=mt.ObjectiveConfig(), train_stride=1, val_stride=None):
    """Train every (hyperparameters, quantile) candidate once and score all persistencies.

    Returns candidates sorted best first; failed candidates sort last.
    """
    if train_ds.injection_config is not None:
        space.check_windows(train_ds.injection_config.min_fault_separation)
    combos = [(h, q) for h in space.hyperparameter_sets() for q in space.quantile_grid]
    if space.budget is not None and len(combos) > space.budget:
        keep = np.sort(np.random.default_rng(space.rng_seed).choice(len(combos), space.budget,
                                                                    replace=False))
        combos = [combos[i] for i in keep]
    results = []
    for cid, (hyper, (q_lo, q_hi)) in enumerate(combos):
        mcfg, tcfg, extra = _split_hyper(hyper, model_cfg, train_cfg)
        cand = CandidateResult(cid, dict(hyper), (q_lo, q_hi), mcfg.window_length,
                               labels=val_ds.labels)
        try:
            cand.model, _ = fit_detector(train_ds, val_ds, mcfg, tcfg, q_lo, q_hi,
                                         extra.get("train_stride", train_stride),
                                         extra.get("val_stride", val_stride))
            cand.pred_tracks = predict_track(cand.model, val_ds)
            score_tracks(cand, space.persistency_grid, fdir_cfg, objective)
        except (ConfigError, DataError, FloatingPointError, ValueError) as exc:
            log.warning("candidate %d failed: %s", cid, exc)
            cand.failed, cand.error = True, str(exc)
        results.append(cand)
    return sorted(results, key=lambda c: (c.failed,) + c.rank_key())


@dataclass
class SweepResult:
    curve: dict
    chosen: int | None
    violations: dict

    @property
    def compliant(self):
        return self.chosen is not None


def sweep_interval(center, half_width=10):
    return range(max(1, center - half_width), center + half_width + 1)


def persistency_sweep(candidate, interval, requirements=Requirements(), fdir_cfg=None,
                      objective=mt.ObjectiveConfig()):
    """System Metrics over ``interval``; picks the smallest compliant persistency."""
    if candidate.failed:
        raise DataError(f"candidate {candidate.candidate_id} failed: {candidate.error}")
    values = sorted({int(p) for p in interval})
    if not values or values[0] < 1:
        raise ConfigError("interval", "persistency values must be >= 1")
    score_tracks(candidate, [p for p in values if p not in candidate.system], fdir_cfg, objective)
    curve = {p: candidate.system[p] for p in values}
    violations = {p: requirements.violations(curve[p]) for p in values}
    chosen = next((p for p in values if not violations[p]), None)
    return SweepResult(curve, chosen, violations)


# --------------------------------------------------------------------------
# detection double-check


@dataclass(frozen=True)
class DetectionThresholds:
    max_missed: float = 0.2
    max_uncertain: float = 0.2
    max_late_fraction: float = 0.2
    max_unreactable_fraction: float = 0.2
    high_precision: float = 0.9


@dataclass
class DoubleCheck:
    passed: bool
    flags: set
    reasons: list
    details: dict


def _unreactable_fraction(det, persistency):
    """Faults that cannot reach the persistency: missed, or too short after the delay."""
    if not det.n_faults:
        return 0.0
    bad = sum(1 for dur, d in zip(det.fault_durations, det.fault_delays)
              if d < 0 or dur - d < persistency)
    return bad / det.n_faults


def detection_double_check(candidate, thresholds=DetectionThresholds(), persistency=None):
    """Look for system scores that hide poor detection.

    ``candidate`` is a :class:`CandidateResult` or an :class:`EvalReport`.
    """
    ev = candidate.evaluation(persistency) if isinstance(candidate, CandidateResult) else candidate
    p = ev.persistency
    flags, reasons, details = set(), [], {}
    detection_bad = False
    for s in SENSORS:
        det, sysr = ev.detection[s], ev.system[s]
        tag = s.name.lower()
        delays = det.prediction_delays
        late = sum(d >= p for d in delays) / len(delays) if delays else 0.0
        unreact = _unreactable_fraction(det, p)
        details[tag] = {"missed": det.missed_faults_score,
                        "uncertain": det.uncertain_prediction_score,
                        "late_fraction": late, "unreactable_fraction": unreact,
                        "precision": sysr.reaction_precision, "recall": sysr.reaction_recall}
        checks = (("missed_faults", det.missed_faults_score, thresholds.max_missed),
                  ("uncertain_predictions", det.uncertain_prediction_score, thresholds.max_uncertain),
                  ("late_detections", late, thresholds.max_late_fraction),
                  ("unreactable_faults", unreact, thresholds.max_unreactable_fraction))
        sensor_bad = False
        for flag, value, limit in checks:
            if value > limit:
                flags.add(flag)
                reasons.append(f"{tag}: {flag.replace('_', ' ')} {value:.4f} > {limit}")
                sensor_bad = True
        if sensor_bad and sysr.reaction_precision >= thresholds.high_precision:
            flags.add("long_fault_bias")
            reasons.append(f"{tag}: long-fault bias, precision {sysr.reaction_precision:.4f} "
                           f"looks good while detection metrics fail at persistency {p}")
        detection_bad |= sensor_bad
    return DoubleCheck(not detection_bad, flags, reasons, details)


# --------------------------------------------------------------------------
# freeze / reload


@dataclass
class Bundle:
    model: object
    fdir_config: FdirConfig
    hyperparameters: dict
    reports: dict


def table_hyperparameters(candidate, persistency):
    m, tc = candidate.model, candidate.model.train_config
    return {
        "learning_rate": tc.learning_rate,
        "training_epochs": tc.max_epochs,
        "epochs_run": m.history.get("epochs_run"),
        "quantile_range_lower": candidate.quantile_range[0],
        "quantile_range_upper": candidate.quantile_range[1],
        "window_length": m.config.window_length,
        "persistency": int(persistency),
        "batch_size": tc.batch_size,
        "branch_layers": [list(x) for x in m.config.branch_layers],
        "joint_layers": [list(x) for x in m.config.joint_layers],
        "dense_units": list(m.config.dense_units),
    }


def freeze(candidate, persistency, double_check, out_dir, fdir_cfg=None, extra_reports=None):
    """Write model, FDIR config, hyperparameters and reports into ``out_dir``."""
    if candidate.failed or candidate.model is None:
        raise RequirementError(f"candidate {candidate.candidate_id} has no trained model")
    if not double_check.passed:
        raise RequirementError("detection double-check failed: " + "; ".join(double_check.reasons))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = dataclasses.replace(fdir_cfg or FdirConfig(), persistency=int(persistency))
    save_model(candidate.model, out / "model.fdirmodel")
    (out / "fdir_config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    (out / "hyperparameters.json").write_text(
        json.dumps(table_hyperparameters(candidate, persistency), indent=2))
    reports = {"evaluation": candidate.evaluation(persistency).to_dict(),
               "double_check": {"passed": double_check.passed,
                                "flags": sorted(double_check.flags),
                                "reasons": double_check.reasons,
                                "details": double_check.details}}
    reports.update(extra_reports or {})
    (out / "reports.json").write_text(json.dumps(reports, indent=2, default=float))
    return out


def load_bundle(path):
    p = Path(path)
    return Bundle(load_model(p / "model.fdirmodel"),
                  FdirConfig(**json.loads((p / "fdir_config.json").read_text())),
                  json.loads((p / "hyperparameters.json").read_text()),
                  json.loads((p / "reports.json").read_text()))


# --------------------------------------------------------------------------
# results ledger

LEDGER_FIELDS = ("candidate_id", "hyperparameters", "q_lo", "q_hi", "persistency", "objective",
                 "accel_precision", "accel_recall", "accel_fp_pct",
                 "imu_precision", "imu_recall", "imu_fp_pct", "failed")


def ledger_rows(results, persistency_grid):
    rows = []
    for c in sorted(results, key=lambda c: c.candidate_id):
        for p in persistency_grid:
            row = {"candidate_id": c.candidate_id,
                   "hyperparameters": json.dumps(c.hyperparameters, sort_keys=True),
                   "q_lo": c.quantile_range[0], "q_hi": c.quantile_range[1],
                   "persistency": p, "failed": int(c.failed)}
            if not c.failed:
                row["objective"] = c.objectives[p]
                for s in SENSORS:
                    r = c.system[p][s]
                    tag = s.name.lower()[:5] if s.name == "ACCELEROMETER" else "imu"
                    row[f"{tag}_precision"] = r.reaction_precision
                    row[f"{tag}_recall"] = r.reaction_recall
                    row[f"{tag}_fp_pct"] = r.false_positives_percentage
            rows.append(row)
    return rows


def write_ledger(results, persistency_grid, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, LEDGER_FIELDS)
        w.writeheader()
        w.writerows(ledger_rows(results, persistency_grid))
    return Path(path)
