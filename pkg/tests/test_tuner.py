import csv
import json

import numpy as np
import pytest

from fdirlab import metrics as mt
from fdirlab import reports as rp
from fdirlab import simgen as sg
from fdirlab import tuner as tn
from fdirlab.errors import ConfigError, RequirementError
from fdirlab.nnet import ModelConfig, TrainConfig, predict_track
from fdirlab.simgen import SENSORS

TINY = ModelConfig(window_length=16, branch_layers=((3, 2),), joint_layers=((3, 4),),
                   dense_units=(8,))


def hand_candidate(labels, preds, cid=0, window=180):
    return tn.CandidateResult(cid, {}, (33.0, 90.0), window, labels=labels, pred_tracks=preds)


def track(T, runs):
    y = np.zeros(T, bool)
    for s, e in runs:
        y[s:e] = True
    return y


def both(y):
    return np.stack([y, y], axis=1)


@pytest.fixture
def perfect_candidate():
    y = track(2000, [(100, 180), (600, 650), (1200, 1300)])
    return hand_candidate([both(y)], [both(y)])


def test_search_space_validation():
    with pytest.raises(ConfigError):
        tn.SearchSpace(hyperparameter_grid={"nonsense": [1]})
    with pytest.raises(ConfigError):
        tn.SearchSpace(quantile_grid=[(90, 33)])
    with pytest.raises(ConfigError):
        tn.SearchSpace(persistency_grid=[0])
    with pytest.raises(ConfigError):
        tn.SearchSpace(hyperparameter_grid={"window_length": [400]}).check_windows(305)
    space = tn.SearchSpace(hyperparameter_grid={"learning_rate": [1e-3, 1e-2], "window_length": [16, 20]})
    assert len(space.hyperparameter_sets()) == 4


def test_requirements_validation():
    with pytest.raises(ConfigError):
        tn.Requirements(min_reaction_precision=1.5)
    assert tn.Requirements(max_false_positives_percentage=0.1).max_false_positives_percentage == (0.1, 0.1)


def test_objective_recomputable(perfect_candidate):
    tn.score_tracks(perfect_candidate, [5, 10, 60])
    for p, value in perfect_candidate.objectives.items():
        assert value == mt.f_beta([perfect_candidate.system[p][s] for s in SENSORS])
    # 60 exceeds the 50-sample fault, so the objective drops there
    assert perfect_candidate.objectives[5] == perfect_candidate.objectives[10] == 1.0
    assert perfect_candidate.objectives[60] < 1.0
    assert perfect_candidate.persistency == 5


def test_sweep_picks_smallest_compliant():
    y = track(3000, [(500, 600), (1500, 1600)])
    yp = y | track(3000, [(100, 112), (2500, 2508)])   # spurious runs of 12 and 8 samples
    cand = hand_candidate([both(y)], [both(yp)])
    sweep = tn.persistency_sweep(cand, tn.sweep_interval(10, 5))
    assert list(sweep.curve) == list(range(5, 16))
    assert sweep.chosen == 13
    assert all(sweep.violations[p] for p in range(5, 13))


def test_sweep_reports_no_compliant():
    y = track(3000, [(500, 600)])
    yp = y | track(3000, [(1000, 1200)])
    sweep = tn.persistency_sweep(hand_candidate([both(y)], [both(yp)]), range(10, 20))
    assert not sweep.compliant and sweep.chosen is None


def test_sweep_rejects_bad_interval(perfect_candidate):
    with pytest.raises(ConfigError):
        tn.persistency_sweep(perfect_candidate, [0, 1])


def _report(missed, precision, n=100, durations=80, delay=3, persistency=27):
    det = mt.DetectionReport()
    n_missed = int(round(missed * n))
    for i in range(n):
        det.fault_durations.append(durations)
        det.fault_delays.append(-1 if i < n_missed else delay)
        det.fault_uncertain.append(False)
    tp = n - n_missed
    fp = int(round(tp * (1 - precision) / precision))
    sysr = mt.SystemReport(tp, fp, n_missed, 0, n, persistency)
    return det, sysr


def _eval(pairs, persistency=27):
    det = {s: p[0] for s, p in zip(SENSORS, pairs)}
    sysr = {s: p[1] for s, p in zip(SENSORS, pairs)}
    return mt.EvalReport(persistency, det, sysr, mt.f_beta([sysr[s] for s in SENSORS]))


def test_double_check_passes_good_report():
    ev = _eval([_report(0.0503, 0.99), _report(0.1381, 0.99)])
    check = tn.detection_double_check(ev, tn.DetectionThresholds(max_missed=0.2))
    assert check.passed and not check.flags


def test_double_check_flags_long_fault_bias():
    ev = _eval([_report(0.9, 0.99), _report(0.05, 0.99)])
    check = tn.detection_double_check(ev)
    assert not check.passed
    assert {"missed_faults", "long_fault_bias"} <= check.flags
    assert any("accelerometer" in r for r in check.reasons)


def test_double_check_flags_unreactable_and_late():
    ev = _eval([_report(0.0, 0.95, durations=40, delay=30), _report(0.0, 0.95)])
    check = tn.detection_double_check(ev)
    assert {"unreactable_faults", "late_detections"} <= check.flags


def test_double_check_low_precision_is_not_bias():
    ev = _eval([_report(0.9, 0.5), _report(0.0, 0.99)])
    check = tn.detection_double_check(ev)
    assert "missed_faults" in check.flags and "long_fault_bias" not in check.flags


@pytest.fixture(scope="module")
def small_data():
    tc = sg.TrajectoryConfig(n_trajectories=3, samples_per_trajectory=700, rng_seed=2)
    ic = sg.InjectionConfig(min_fault_duration=20, max_fault_duration=40, min_fault_separation=100)
    ds = sg.generate_dataset(tc, ic)
    return ds.subset([0, 1]), ds.subset([2])


def test_grid_search_and_ledger(small_data, tmp_path):
    train_ds, val_ds = small_data
    space = tn.SearchSpace(hyperparameter_grid={"learning_rate": [1e-3, 3e-3]},
                           quantile_grid=[(25, 75), (33, 90)], persistency_grid=[3, 5, 8])
    res = tn.grid_search(space, train_ds, val_ds, TINY, TrainConfig(max_epochs=1, batch_size=128),
                         train_stride=3)
    assert len(res) == 4 and not any(c.failed for c in res)
    keys = [c.rank_key() for c in res]
    assert keys == sorted(keys)
    best = res[0]
    assert best.objective == max(best.objectives.values())
    # stored tracks are the ones the stored model produces
    again = predict_track(best.model, val_ds)
    assert all(np.array_equal(a, b) for a, b in zip(again, best.pred_tracks))
    path = tn.write_ledger(res, space.persistency_grid, tmp_path / "ledger.csv")
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 4 * 3
    assert {json.loads(r["hyperparameters"])["learning_rate"] for r in rows} == {1e-3, 3e-3}


def test_grid_search_budget(small_data):
    train_ds, val_ds = small_data
    space = tn.SearchSpace(hyperparameter_grid={"learning_rate": [1e-3, 2e-3, 3e-3]},
                           quantile_grid=[(25, 75), (33, 90)], persistency_grid=[3], budget=2)
    res = tn.grid_search(space, train_ds, val_ds, TINY, TrainConfig(max_epochs=1, batch_size=256),
                         train_stride=6)
    assert len(res) == 2


def test_freeze_and_reload(small_data, tmp_path):
    train_ds, val_ds = small_data
    space = tn.SearchSpace(quantile_grid=[(33, 90)], persistency_grid=[3])
    best = tn.grid_search(space, train_ds, val_ds, TINY, TrainConfig(max_epochs=1, batch_size=128),
                          train_stride=3)[0]
    ok = tn.DoubleCheck(True, set(), [], {})
    bad = tn.DoubleCheck(False, {"missed_faults"}, ["x"], {})
    with pytest.raises(RequirementError):
        tn.freeze(best, 3, bad, tmp_path / "nope")
    assert not (tmp_path / "nope").exists()
    out = tn.freeze(best, 3, ok, tmp_path / "bundle")
    bundle = tn.load_bundle(out)
    assert bundle.fdir_config.persistency == 3
    assert bundle.hyperparameters["window_length"] == 16
    assert bundle.hyperparameters["quantile_range_upper"] == 90
    assert bundle.reports["evaluation"]["persistency"] == 3
    again = predict_track(bundle.model, val_ds)
    assert all(np.array_equal(a, b) for a, b in zip(again, best.pred_tracks))
    failed = tn.CandidateResult(9, {}, (33, 90), 16, failed=True, error="boom")
    with pytest.raises(RequirementError):
        tn.freeze(failed, 3, ok, tmp_path / "f")


def test_histogram_and_exports(perfect_candidate, tmp_path):
    h = rp.histogram([0, 1, 4, 5, 12], "d", bin_width=5, marker=5)
    np.testing.assert_array_equal(h.edges, [0, 5, 10, 15])
    np.testing.assert_array_equal(h.counts, [3, 1, 1])
    assert h.mass_at_or_above_marker() == pytest.approx(0.4)
    assert "<P" in h.render()
    tn.score_tracks(perfect_candidate, [10])
    ev = perfect_candidate.evaluation(10)
    hists = rp.eval_histograms(ev)
    assert set(hists) == {"accelerometer_delay", "accelerometer_fp_duration",
                          "imu_delay", "imu_fp_duration"}
    doc = json.loads(rp.write_report_json(ev, tmp_path / "e.json", hists).read_text())
    assert doc["histograms"]["imu_delay"]["marker"] == 10
    rows = list(csv.DictReader(open(rp.write_summary_csv(ev, tmp_path / "s.csv"))))
    assert [r["sensor"] for r in rows] == ["accelerometer", "imu"]
    sweep = tn.persistency_sweep(perfect_candidate, range(8, 12))
    rows = list(csv.DictReader(open(rp.write_sweep_csv(sweep, tmp_path / "w.csv"))))
    assert len(rows) == 8 and sum(int(r["chosen"]) for r in rows) == 2
