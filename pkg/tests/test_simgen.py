import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdirlab import simgen as sg
from fdirlab.errors import ConfigError, FormatError


def small_cfg(n=4, T=1200, seed=0):
    return sg.TrajectoryConfig(n_trajectories=n, samples_per_trajectory=T, rng_seed=seed)


@pytest.fixture(scope="module")
def dataset():
    return sg.generate_dataset(small_cfg(), sg.InjectionConfig())


def test_yaw_equally_spaced():
    trajs = sg.generate_trajectories(small_cfg(n=4, T=50))
    np.testing.assert_allclose([t.yaw for t in trajs], [0, np.pi / 2, np.pi, 3 * np.pi / 2])


def test_common_departure_point():
    trajs = sg.generate_trajectories(sg.TrajectoryConfig(n_trajectories=36, samples_per_trajectory=40))
    p0 = np.array([t.position[0] for t in trajs])
    v0 = np.array([t.velocity[0] for t in trajs])
    assert np.all(p0 == p0[0]) and np.all(v0 == v0[0])


def test_trajectories_deterministic():
    a = sg.generate_trajectories(small_cfg(T=300, seed=5))
    b = sg.generate_trajectories(small_cfg(T=300, seed=5))
    for x, y in zip(a, b):
        for f in ("position", "velocity", "acceleration", "angular_rate"):
            assert getattr(x, f).tobytes() == getattr(y, f).tobytes()


@pytest.mark.parametrize("field,value", [
    ("n_trajectories", 0), ("samples_per_trajectory", 0), ("dt", 0.0), ("dt", -1.0),
])
def test_trajectory_config_errors_name_field(field, value):
    with pytest.raises(ConfigError) as exc:
        sg.TrajectoryConfig(**{field: value})
    assert exc.value.field == field


def _stationary():
    T = 200
    z = np.zeros((T, 3))
    return sg.Trajectory(0, 0.0, 0.1, z, z, z, z, z, surface_gravity=0.0, gravity_gradient=0.0)


def test_noiseless_stationary_streams_constant():
    pair = sg.synthesize_sensor_streams(_stationary(), 0.0, 3)
    assert np.ptp(pair.accel, axis=0).max() == 0 and np.ptp(pair.imu, axis=0).max() == 0


def test_straight_flight_flat_imu_varying_accel():
    T, dt = 2000, 0.1
    t = np.arange(T) * dt
    pos = np.stack([2.0 * t, np.zeros(T), np.zeros(T)], axis=1)
    vel = np.tile([2.0, 0.0, 0.0], (T, 1))
    z = np.zeros((T, 3))
    traj = sg.Trajectory(0, 0.0, dt, pos, vel, z, z, z, surface_gravity=5e-3,
                         gravity_gradient=2e-5)
    pair = sg.synthesize_sensor_streams(traj, 0.0, 0)
    assert np.ptp(pair.imu) == 0
    assert np.ptp(pair.accel[:, 0]) > 1e-3


def test_noise_variance_matches_sigma():
    traj = sg.generate_trajectories(small_cfg(n=1, T=20000))[0]
    sigma = (1e-2, 3e-3)
    pair = sg.synthesize_sensor_streams(traj, sigma, 11)
    clean = sg.synthesize_sensor_streams(traj, 0.0, 11)
    for meas, truth, s in ((pair.accel, clean.accel, sigma[0]), (pair.imu, clean.imu, sigma[1])):
        var = np.var(meas - truth, axis=0)
        assert np.all(np.abs(var / s**2 - 1) < 0.2)


def test_empty_fault_kinds_no_faults():
    pair = sg.synthesize_sensor_streams(sg.generate_trajectories(small_cfg(n=1))[0], 1e-3, 0)
    ds = sg.inject_faults(pair, sg.InjectionConfig(fault_kinds=()))
    assert ds.fault_records == [] and not ds.labels[0].any()
    assert np.array_equal(ds.streams[0].accel, pair.accel)


def test_stuck_at_last_exact():
    pair = sg.synthesize_sensor_streams(sg.generate_trajectories(small_cfg(n=1))[0], 1e-3, 0)
    cfg = sg.InjectionConfig(fault_kinds=[sg.FaultKind.STUCK_AT_LAST],
                             axis_modes=[sg.AxisMode.ALL_AXES],
                             noise_on_fault=[sg.NoiseMode.WITHOUT_NOISE])
    ds = sg.inject_faults(pair, cfg)
    assert ds.fault_records
    for r in ds.fault_records:
        src, seg = pair.sensor(r.sensor), ds.streams[0].sensor(r.sensor)
        assert np.all(seg[r.start:r.end] == src[r.start - 1])
        assert r.stuck_value == tuple(src[r.start - 1])


def test_inject_does_not_modify_input():
    pair = sg.synthesize_sensor_streams(sg.generate_trajectories(small_cfg(n=1))[0], 1e-3, 0)
    before = pair.accel.copy(), pair.imu.copy()
    sg.inject_faults(pair, sg.InjectionConfig())
    assert np.array_equal(pair.accel, before[0]) and np.array_equal(pair.imu, before[1])


@pytest.mark.parametrize("kw,field", [
    ({"min_fault_duration": 0}, "min_fault_duration"),
    ({"min_fault_duration": 50, "max_fault_duration": 40}, "max_fault_duration"),
    ({"max_fault_duration": 305}, "min_fault_separation"),
    ({"start_margin": 0}, "start_margin"),
])
def test_injection_config_errors(kw, field):
    with pytest.raises(ConfigError) as exc:
        sg.InjectionConfig(**kw)
    assert exc.value.field == field


def test_dataset_properties(dataset):
    cfg = dataset.injection_config
    for k, (pair, y) in enumerate(zip(dataset.streams, dataset.labels)):
        recs = dataset.records_for(k)
        assert np.array_equal(sg.labels_from_records(recs, len(pair), k), y)
        starts = sorted(r.start for r in recs)
        assert all(b - a >= cfg.min_fault_separation for a, b in zip(starts, starts[1:]))
        for r in recs:
            assert cfg.min_fault_duration <= r.duration <= cfg.max_fault_duration
            assert r.start >= 1 and r.end <= len(pair)
    for pair in dataset.streams:
        assert np.isfinite(pair.accel).all() and np.isfinite(pair.imu).all()


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), lo=st.integers(1, 60), extra=st.integers(0, 80),
       gap=st.integers(1, 100))
def test_injection_constraints_property(seed, lo, extra, gap):
    hi = lo + extra
    cfg = sg.InjectionConfig(min_fault_duration=lo, max_fault_duration=hi,
                             min_fault_separation=hi + gap, rng_seed=seed)
    ds = sg.generate_dataset(small_cfg(n=2, T=900, seed=seed), cfg)
    for k in range(len(ds)):
        recs = sorted(ds.records_for(k), key=lambda r: r.start)
        assert all(lo <= r.duration <= hi for r in recs)
        assert all(b.start - a.start >= cfg.min_fault_separation for a, b in zip(recs, recs[1:]))
        assert np.array_equal(sg.labels_from_records(recs, 900, k), ds.labels[k])


def test_generate_dataset_deterministic(dataset):
    again = sg.generate_dataset(small_cfg(), sg.InjectionConfig())
    assert dataset.equals(again)
    other = sg.generate_dataset(small_cfg(), sg.InjectionConfig(rng_seed=2))
    assert not dataset.equals(other)


def test_export_round_trip(dataset, tmp_path):
    path = sg.export_dataset(dataset, tmp_path / "d.fdirds")
    assert (tmp_path / "d.fdirds.json").exists()
    assert sg.load_dataset(path).equals(dataset)


def test_export_preserves_infinite_like_bytes(tmp_path):
    cfg = sg.InjectionConfig(fault_kinds=[sg.FaultKind.STUCK_AT_INFINITE_LIKE])
    ds = sg.generate_dataset(small_cfg(n=2), cfg)
    assert max(abs(v) for r in ds.fault_records for v in r.stuck_value) > 1e2
    loaded = sg.load_dataset(sg.export_dataset(ds, tmp_path / "a.fdirds", config_sidecar=False))
    for a, b in zip(ds.streams, loaded.streams):
        assert a.accel.tobytes() == b.accel.tobytes() and a.imu.tobytes() == b.imu.tobytes()
    assert [r.stuck_value for r in ds.fault_records] == [r.stuck_value for r in loaded.fault_records]
    # a second export of the loaded data is byte-identical to the first file
    sg.export_dataset(loaded, tmp_path / "b.fdirds", config_sidecar=False)
    assert (tmp_path / "a.fdirds").read_bytes() == (tmp_path / "b.fdirds").read_bytes()


@pytest.mark.parametrize("mangle", [
    lambda b: b"XXXXXXXX" + b[8:],
    lambda b: b[:8] + b"\x63\x00" + b[10:],
    lambda b: b[: len(b) // 2],
])
def test_load_rejects_bad_files(dataset, tmp_path, mangle):
    path = sg.export_dataset(dataset.subset([0]), tmp_path / "d.fdirds", config_sidecar=False)
    path.write_bytes(mangle(path.read_bytes()))
    with pytest.raises(FormatError):
        sg.load_dataset(path)


def test_subset_renumbers(dataset):
    sub = dataset.subset([2, 3])
    assert len(sub) == 2
    assert {r.trajectory for r in sub.fault_records} <= {0, 1}
    assert sub.records_for(0) == [dataclasses.replace(r, trajectory=0)
                                  for r in dataset.records_for(2)]
