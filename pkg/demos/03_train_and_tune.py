"""Train a small detector, sweep the persistency and freeze a bundle.

Uses a reduced network and dataset so it finishes in seconds; the acceptance
suite runs the full-size model.

Run: python demos/03_train_and_tune.py [output_dir]
"""

import sys
import tempfile
from pathlib import Path

from fdirlab import reports as rp
from fdirlab import simgen as sg
from fdirlab import tuner as tn
from fdirlab.nnet import ModelConfig, TrainConfig

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="fdirlab-"))

ds = sg.generate_dataset(
    sg.TrajectoryConfig(n_trajectories=16, samples_per_trajectory=2000),
    sg.InjectionConfig(fault_kinds=("stuck_at_infinite_like", "stuck_at_random_out_of_range")))
train_ds, val_ds = ds.subset(range(12)), ds.subset(range(12, 16))

model = ModelConfig(window_length=60, branch_layers=((5, 4),), joint_layers=((5, 8),),
                    dense_units=(16,), pool_last=12)
space = tn.SearchSpace(hyperparameter_grid={"learning_rate": [3e-3]},
                       quantile_grid=[(33.0, 90.0)], persistency_grid=range(5, 31, 5))
results = tn.grid_search(space, train_ds, val_ds, model,
                         TrainConfig(max_epochs=10, batch_size=256), train_stride=3, val_stride=6)
best = results[0]
print(f"best candidate: objective {best.objective:.4f} at persistency {best.persistency}")

sweep = tn.persistency_sweep(best, tn.sweep_interval(best.persistency, 5),
                             tn.Requirements(0.8, 0.2))
for p in sweep.curve:
    status = "; ".join(sweep.violations[p]) or "meets requirements"
    print(f"  P={p:>2} objective={best.objectives[p]:.4f}  {status}")

persistency = sweep.chosen if sweep.chosen is not None else best.persistency
report = best.evaluation(persistency)
for name, hist in rp.eval_histograms(report).items():
    print(hist.render())

check = tn.detection_double_check(best, persistency=persistency)
print("double check:", "passed" if check.passed else f"flags {sorted(check.flags)}")
if sweep.chosen is not None and check.passed:
    tn.freeze(best, persistency, check, out / "bundle")
    print("bundle written to", out / "bundle")
else:
    # freeze() refuses a candidate whose detections are late or incomplete even
    # when the reaction metrics look good; the flags say what to fix first.
    print("not frozen; see the flags above")
