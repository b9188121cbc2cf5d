"""Generate a few trajectories and look at the injected stuck-value faults.

Run: python demos/01_fault_injection.py
"""

import numpy as np

from fdirlab import preprocess as pp
from fdirlab import simgen as sg

ds = sg.generate_dataset(sg.TrajectoryConfig(n_trajectories=4, samples_per_trajectory=3000),
                         sg.InjectionConfig())

print(f"{len(ds)} trajectories, {ds.n_samples} samples, {len(ds.fault_records)} faults\n")
print(f"{'traj':>4} {'sensor':<14} {'start':>5} {'dur':>4} {'kind':<28} axes")
for r in ds.fault_records:
    print(f"{r.trajectory:>4} {r.sensor.name:<14} {r.start:>5} {r.duration:>4} "
          f"{r.kind.name:<28} {r.axes}")

# A stuck fault freezes the raw value, so the time derivative collapses to zero
# on the affected axes (unless post-fault noise is added).
r = next(r for r in ds.fault_records if r.kind == sg.FaultKind.STUCK_AT_LAST and not r.noisy)
stream = ds.streams[r.trajectory]
raw = stream.accel if r.sensor == sg.Sensor.ACCELEROMETER else stream.imu
deriv = pp.compute_derivative(raw, stream.dt)
inside = slice(r.start + 1, r.start + r.duration)
before = slice(max(0, r.start - r.duration), r.start)
print(f"\nnoise-free stuck-at-last fault, |d/dt| on axis {r.axes[0]}: "
      f"before {np.abs(deriv[before, r.axes[0]]).mean():.3e}, "
      f"during {np.abs(deriv[inside, r.axes[0]]).mean():.3e}")

scaler = pp.fit_dataset_scaler(ds)
print(f"\nrobust scaler fitted on the 33..90 quantile range: "
      f"centre[:3]={np.round(scaler.center[:3], 5)}")
