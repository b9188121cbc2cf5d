"""Synthetic accelerometer / IMU telemetry with injected stuck-value faults.

Trajectories are monodirectional flights over a flat small-body surface, all
departing from the origin and fanned out evenly in yaw.  Each trajectory has a
take-off, a cruise and a landing phase; the cruise carries a smooth random
manoeuvre acceleration and the body carries a small attitude wobble, so both
sensor signals keep moving on the time scale of a fault.  Gravity is weak and
varies linearly with position (trace-free gradient tensor), which is what
keeps the accelerometer alive during a straight, wobble-free flight.

Faults freeze one or all axes of one sensor, either at the last healthy
sample or at a random value drawn inside the nominal range, outside it, or
at an "infinite-like" magnitude.  Timing follows three integer constraints
(minimum/maximum duration and minimum start-to-start separation, enforced
across both sensors).
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _container
from .errors import ConfigError, DataError

DATASET_MAGIC = b"\x89FDIRDS\n"
DATASET_VERSION = 1
START_RETRY_CAP = 10_000


class Sensor(enum.IntEnum):
    ACCELEROMETER = 0
    IMU = 1


SENSORS = (Sensor.ACCELEROMETER, Sensor.IMU)


class FaultKind(enum.Enum):
    STUCK_AT_LAST = "stuck_at_last"
    STUCK_AT_RANDOM_IN_RANGE = "stuck_at_random_in_range"
    STUCK_AT_RANDOM_OUT_OF_RANGE = "stuck_at_random_out_of_range"
    STUCK_AT_INFINITE_LIKE = "stuck_at_infinite_like"


class AxisMode(enum.Enum):
    SINGLE_AXIS = "single_axis"
    ALL_AXES = "all_axes"


class NoiseMode(enum.Enum):
    WITH_NOISE = "with_noise"
    WITHOUT_NOISE = "without_noise"


_KIND_CODES = {k: i for i, k in enumerate(FaultKind)}


def _canonical(values, enum_cls):
    """Enum members of ``values`` in declaration order (sets are unordered)."""
    chosen = {enum_cls(v) for v in values}
    return tuple(m for m in enum_cls if m in chosen)


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class PhaseProfile:
    """Shape parameters of the take-off / cruise / landing profile.

    Pairs are ``(low, high)`` bounds drawn uniformly per trajectory.  Times
    are in seconds, accelerations in m/s^2 and rates in rad/s.
    """

    takeoff_fraction: tuple = (0.08, 0.15)
    landing_fraction: tuple = (0.08, 0.15)
    climb_accel: float = 0.04
    cruise_speed: tuple = (0.5, 2.0)
    ramp_fraction: float = 0.1
    maneuver_accel: float = 0.03
    maneuver_period: tuple = (6.0, 30.0)
    n_maneuver_tones: int = 3
    wobble_rate: float = 8e-3
    wobble_period: tuple = (4.0, 20.0)
    n_wobble_tones: int = 3


@dataclass(frozen=True)
class TrajectoryConfig:
    n_trajectories: int = 36
    samples_per_trajectory: int = 3000
    dt: float = 0.1
    phase_profile: PhaseProfile = field(default_factory=PhaseProfile)
    surface_gravity: float = 5e-3
    gravity_gradient: float = 2e-5
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.phase_profile, dict):
            object.__setattr__(self, "phase_profile", PhaseProfile(**{
                k: tuple(v) if isinstance(v, list) else v
                for k, v in self.phase_profile.items()
            }))
        self.validate()

    @property
    def yaw_spacing(self):
        return 2.0 * np.pi / self.n_trajectories

    def validate(self):
        if self.n_trajectories < 1:
            raise ConfigError("n_trajectories", "must be >= 1")
        if self.samples_per_trajectory < 1:
            raise ConfigError("samples_per_trajectory", "must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt", "must be > 0")
        p = self.phase_profile
        if p.takeoff_fraction[1] + p.landing_fraction[1] >= 1.0:
            raise ConfigError("phase_profile", "take-off and landing leave no cruise")
        if not 0 < p.ramp_fraction < 0.5:
            raise ConfigError("phase_profile.ramp_fraction", "must lie in (0, 0.5)")

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class InjectionConfig:
    """Fault placement and fault-case parameters.

    ``faults_per_trajectory=None`` asks for ``length // min_fault_separation``
    faults; fewer are placed when the random start search runs out of room.
    """

    min_fault_duration: int = 30
    max_fault_duration: int = 110
    min_fault_separation: int = 305
    fault_kinds: tuple = tuple(FaultKind)
    axis_modes: tuple = tuple(AxisMode)
    noise_on_fault: tuple = tuple(NoiseMode)
    noise_sigma: tuple = (1e-3, 2e-4)
    faults_per_trajectory: int | None = None
    start_margin: int = 1
    out_of_range_span: tuple = (0.2, 3.0)
    infinite_like_decades: tuple = (3.0, 9.0)
    rng_seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fault_kinds", _canonical(self.fault_kinds, FaultKind))
        object.__setattr__(self, "axis_modes", _canonical(self.axis_modes, AxisMode))
        object.__setattr__(self, "noise_on_fault", _canonical(self.noise_on_fault, NoiseMode))
        sigma = self.noise_sigma
        if np.isscalar(sigma):
            sigma = (sigma, sigma)
        object.__setattr__(self, "noise_sigma", tuple(float(s) for s in sigma))
        for name in ("out_of_range_span", "infinite_like_decades"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        if self.min_fault_duration <= 0:
            raise ConfigError("min_fault_duration",
                              "lower bound of fault duration must be positive")
        if self.min_fault_duration > self.max_fault_duration:
            raise ConfigError("max_fault_duration",
                              "upper bound of fault duration is below the lower bound")
        if self.max_fault_duration >= self.min_fault_separation:
            raise ConfigError("min_fault_separation",
                              "distance between subsequent faults must exceed the "
                              "upper bound of fault duration")
        if any(s < 0 for s in self.noise_sigma) or len(self.noise_sigma) != 2:
            raise ConfigError("noise_sigma", "need two non-negative values (accel, imu)")
        if self.fault_kinds and (not self.axis_modes or not self.noise_on_fault):
            raise ConfigError("axis_modes", "fault kinds given without axis/noise modes")
        if self.faults_per_trajectory is not None and self.faults_per_trajectory < 0:
            raise ConfigError("faults_per_trajectory", "must be >= 0")
        if self.start_margin < 1:
            raise ConfigError("start_margin", "faults need a healthy sample before onset")

    def to_dict(self):
        d = dataclasses.asdict(self)
        for name in ("fault_kinds", "axis_modes", "noise_on_fault"):
            d[name] = [m.value for m in getattr(self, name)]
        return d


# --------------------------------------------------------------------------
# data containers


@dataclass
class Trajectory:
    """Kinematic truth of one flight, sampled every ``dt`` seconds."""

    index: int
    yaw: float
    dt: float
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    angular_rate: np.ndarray
    attitude: np.ndarray
    surface_gravity: float
    gravity_gradient: float

    def __len__(self):
        return len(self.position)


@dataclass
class SensorStreamPair:
    accel: np.ndarray
    imu: np.ndarray
    dt: float

    def __post_init__(self):
        if self.accel.shape != self.imu.shape or self.accel.ndim != 2 or self.accel.shape[1] != 3:
            raise DataError(f"stream shapes differ or are not (T, 3): "
                            f"{self.accel.shape} vs {self.imu.shape}")

    def __len__(self):
        return len(self.accel)

    def sensor(self, s):
        return self.accel if Sensor(s) == Sensor.ACCELEROMETER else self.imu


@dataclass(frozen=True)
class FaultRecord:
    trajectory: int
    sensor: Sensor
    start: int
    duration: int
    kind: FaultKind
    axes: tuple
    noisy: bool
    stuck_value: tuple

    @property
    def end(self):
        return self.start + self.duration


@dataclass
class LabeledDataset:
    """Streams, per-sensor labels (``(T, 2)`` bool, column = sensor) and faults."""

    streams: list
    labels: list
    fault_records: list
    trajectory_config: TrajectoryConfig | None = None
    injection_config: InjectionConfig | None = None

    def __len__(self):
        return len(self.streams)

    @property
    def n_samples(self):
        return sum(len(s) for s in self.streams)

    def records_for(self, trajectory, sensor=None):
        return [r for r in self.fault_records if r.trajectory == trajectory
                and (sensor is None or r.sensor == sensor)]

    def subset(self, indices):
        """Trajectories ``indices`` renumbered 0..k-1 (used for train/val splits)."""
        indices = list(indices)
        remap = {old: new for new, old in enumerate(indices)}
        records = [dataclasses.replace(r, trajectory=remap[r.trajectory])
                   for r in self.fault_records if r.trajectory in remap]
        return LabeledDataset([self.streams[i] for i in indices],
                              [self.labels[i] for i in indices],
                              records, self.trajectory_config, self.injection_config)

    def equals(self, other):
        if len(self) != len(other) or self.fault_records != other.fault_records:
            return False
        for a, b in zip(self.streams, other.streams):
            if a.dt != b.dt or not (_bit_equal(a.accel, b.accel) and _bit_equal(a.imu, b.imu)):
                return False
        if any(not np.array_equal(a, b) for a, b in zip(self.labels, other.labels)):
            return False
        return _cfg_dict(self.trajectory_config) == _cfg_dict(other.trajectory_config) and \
            _cfg_dict(self.injection_config) == _cfg_dict(other.injection_config)


def _bit_equal(a, b):
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


def _cfg_dict(cfg):
    return None if cfg is None else cfg.to_dict()


def labels_from_records(records, length, trajectory=0):
    """Rebuild the ``(length, 2)`` label track of one trajectory from its faults."""
    y = np.zeros((length, 2), dtype=bool)
    for r in records:
        if r.trajectory == trajectory:
            y[r.start:r.end, int(r.sensor)] = True
    return y


# --------------------------------------------------------------------------
# trajectories


def _bump(n):
    """sin^2 pulse of ``n`` samples with unit peak; integrates to n/2."""
    if n <= 0:
        return np.zeros(0)
    return np.sin(np.pi * (np.arange(n) + 0.5) / n) ** 2


def _tones(rng, t, amplitude, period, n_tones):
    """Sum of sine tones that all vanish at t=0."""
    out = np.zeros_like(t)
    if amplitude == 0 or n_tones == 0:
        return out
    for _ in range(n_tones):
        f = 1.0 / rng.uniform(*period)
        out += rng.uniform(0.5, 1.0) * rng.choice((-1.0, 1.0)) * np.sin(2 * np.pi * f * t)
    return amplitude * out / n_tones


def _integrate(x, dt):
    """Explicit Euler integral with zero initial value."""
    out = np.zeros_like(x)
    out[1:] = np.cumsum(x[:-1], axis=0) * dt
    return out


def _one_trajectory(cfg, k, rng):
    n, dt, p = cfg.samples_per_trajectory, cfg.dt, cfg.phase_profile
    t = np.arange(n) * dt
    yaw = k * cfg.yaw_spacing
    n_to = int(round(rng.uniform(*p.takeoff_fraction) * n))
    n_ld = int(round(rng.uniform(*p.landing_fraction) * n))
    n_cr = n - n_to - n_ld

    # vertical: climb bump then braking bump, mirrored at landing
    a_up = np.zeros(n)
    half = n_to // 2
    a_up[:half] += p.climb_accel * _bump(half)
    a_up[half:2 * half] -= p.climb_accel * _bump(half)
    half_ld = n_ld // 2
    a_up[n - 2 * half_ld:n - half_ld] -= p.climb_accel * _bump(half_ld)
    a_up[n - half_ld:] += p.climb_accel * _bump(half_ld)

    # along-track: accelerate to cruise speed, manoeuvre, brake
    a_al = np.zeros(n)
    a_cr = np.zeros(n)
    n_ramp = int(p.ramp_fraction * n_cr)
    if n_ramp > 0:
        peak = 2.0 * rng.uniform(*p.cruise_speed) / (n_ramp * dt)
        a_al[n_to:n_to + n_ramp] += peak * _bump(n_ramp)
        a_al[n_to + n_cr - n_ramp:n_to + n_cr] -= peak * _bump(n_ramp)
    taper = np.zeros(n)
    taper[n_to:n_to + n_cr] = np.sin(np.pi * (np.arange(n_cr) + 0.5) / max(n_cr, 1)) ** 0.5
    tc = t - t[min(n_to, n - 1)]
    a_al += taper * _tones(rng, tc, p.maneuver_accel, p.maneuver_period, p.n_maneuver_tones)
    a_cr += taper * _tones(rng, tc, p.maneuver_accel, p.maneuver_period, p.n_maneuver_tones)
    a_up += taper * _tones(rng, tc, 0.3 * p.maneuver_accel, p.maneuver_period, p.n_maneuver_tones)

    c, s = np.cos(yaw), np.sin(yaw)
    acc = np.stack([a_al * c - a_cr * s, a_al * s + a_cr * c, a_up], axis=1)
    vel = _integrate(acc, dt)
    pos = _integrate(vel, dt)

    omega = np.stack([_tones(rng, t, p.wobble_rate, p.wobble_period, p.n_wobble_tones)
                      for _ in range(3)], axis=1)
    omega[:, 2] *= 0.3
    att = _integrate(omega, dt)
    return Trajectory(k, yaw, dt, pos, vel, acc, omega, att,
                      cfg.surface_gravity, cfg.gravity_gradient)


def generate_trajectories(cfg):
    """Kinematic histories for ``cfg.n_trajectories`` evenly fanned-out flights.

    Trajectory ``k`` flies at yaw ``k * 2*pi / n``; every trajectory starts at
    rest at the origin.  Output is a deterministic function of ``cfg``.
    """
    cfg.validate()
    children = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.n_trajectories)
    return [_one_trajectory(cfg, k, np.random.default_rng(ss))
            for k, ss in enumerate(children)]


def gravity(traj):
    """Local gravity vector along the trajectory, linear in position."""
    g0, gg = traj.surface_gravity, traj.gravity_gradient
    p = traj.position
    return np.stack([-gg * p[:, 0], -gg * p[:, 1], -g0 + 2.0 * gg * p[:, 2]], axis=1)


def specific_force(traj):
    """Noise-free accelerometer reading in the (slightly tilted) body frame."""
    f = traj.acceleration - gravity(traj)
    c, s = np.cos(traj.yaw), np.sin(traj.yaw)
    f_h = np.stack([c * f[:, 0] + s * f[:, 1], -s * f[:, 0] + c * f[:, 1], f[:, 2]], axis=1)
    return f_h - np.cross(traj.attitude, f_h)


def synthesize_sensor_streams(states, noise_sigma, rng_seed):
    """Noisy accelerometer and gyro streams for one :class:`Trajectory`.

    ``noise_sigma`` is a scalar or an ``(accel, imu)`` pair of white-noise
    standard deviations.
    """
    if len(states) == 0:
        raise DataError("empty trajectory")
    sig = (noise_sigma, noise_sigma) if np.isscalar(noise_sigma) else tuple(noise_sigma)
    rng = np.random.default_rng(rng_seed)
    accel = specific_force(states) + sig[0] * rng.standard_normal((len(states), 3))
    imu = states.angular_rate + sig[1] * rng.standard_normal((len(states), 3))
    return SensorStreamPair(accel, imu, states.dt)


# --------------------------------------------------------------------------
# fault injection


def _place_starts(rng, length, cfg):
    """Rejection-sample fault (start, duration) pairs obeying the separation."""
    n_target = cfg.faults_per_trajectory
    if n_target is None:
        n_target = length // cfg.min_fault_separation
    placed = []
    attempts = 0
    while len(placed) < n_target and attempts < START_RETRY_CAP:
        attempts += 1
        dur = int(rng.integers(cfg.min_fault_duration, cfg.max_fault_duration + 1))
        hi = length - dur
        if hi < cfg.start_margin:
            continue
        start = int(rng.integers(cfg.start_margin, hi + 1))
        if all(abs(start - s) >= cfg.min_fault_separation for s, _ in placed):
            placed.append((start, dur))
    return sorted(placed)


def _stuck_values(rng, kind, x, start, axes, cfg):
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    mid = 0.5 * (lo + hi)
    out = []
    for a in axes:
        if kind is FaultKind.STUCK_AT_LAST:
            v = x[start - 1, a]
        elif kind is FaultKind.STUCK_AT_RANDOM_IN_RANGE:
            v = rng.uniform(lo[a], hi[a])
        elif kind is FaultKind.STUCK_AT_RANDOM_OUT_OF_RANGE:
            off = span[a] * rng.uniform(*cfg.out_of_range_span)
            v = hi[a] + off if rng.random() < 0.5 else lo[a] - off
        else:
            mag = span[a] * 10.0 ** rng.uniform(*cfg.infinite_like_decades)
            v = mid[a] + (mag if rng.random() < 0.5 else -mag)
        out.append(float(v))
    return out


def inject_faults(pair, cfg, trajectory=0):
    """Inject stuck-value faults into one stream pair.

    Returns a single-trajectory :class:`LabeledDataset`; the input pair is
    not modified.
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, trajectory]))
    accel, imu = pair.accel.copy(), pair.imu.copy()
    clean = (pair.accel, pair.imu)
    out = (accel, imu)
    length = len(pair)
    records = []
    if cfg.fault_kinds:
        for start, dur in _place_starts(rng, length, cfg):
            sensor = SENSORS[rng.integers(2)]
            kind = cfg.fault_kinds[rng.integers(len(cfg.fault_kinds))]
            mode = cfg.axis_modes[rng.integers(len(cfg.axis_modes))]
            noisy = cfg.noise_on_fault[rng.integers(len(cfg.noise_on_fault))] is NoiseMode.WITH_NOISE
            axes = (int(rng.integers(3)),) if mode is AxisMode.SINGLE_AXIS else (0, 1, 2)
            values = _stuck_values(rng, kind, clean[sensor], start, axes, cfg)
            seg = out[sensor]
            for a, v in zip(axes, values):
                seg[start:start + dur, a] = v
                if noisy:
                    seg[start:start + dur, a] += cfg.noise_sigma[sensor] * rng.standard_normal(dur)
            records.append(FaultRecord(trajectory, sensor, start, dur, kind, axes, noisy,
                                       tuple(values)))
    y = labels_from_records(records, length, trajectory)
    return LabeledDataset([SensorStreamPair(accel, imu, pair.dt)], [y], records,
                          None, cfg)


def generate_dataset(traj_cfg, inj_cfg):
    """Trajectories -> noisy streams -> injected faults, for every trajectory."""
    trajs = generate_trajectories(traj_cfg)
    streams, labels, records = [], [], []
    for traj in trajs:
        seed = np.random.SeedSequence([traj_cfg.rng_seed, inj_cfg.rng_seed, traj.index, 7])
        pair = synthesize_sensor_streams(traj, inj_cfg.noise_sigma, seed)
        one = inject_faults(pair, inj_cfg, trajectory=traj.index)
        streams += one.streams
        labels += one.labels
        records += one.fault_records
    return LabeledDataset(streams, labels, records, traj_cfg, inj_cfg)


# --------------------------------------------------------------------------
# persistence

_REC_FIELDS = ("trajectory", "sensor", "start", "duration", "kind", "axes", "noisy")


def export_dataset(ds, path, config_sidecar=True):
    """Write ``ds`` to ``path``; also ``<path>.json`` with the generation config."""
    lengths = np.array([len(s) for s in ds.streams], dtype=np.int64)
    n = len(ds.fault_records)
    table = np.zeros((n, len(_REC_FIELDS)), dtype=np.int64)
    stuck = np.full((n, 3), np.nan)
    for i, r in enumerate(ds.fault_records):
        mask = sum(1 << a for a in r.axes)
        table[i] = (r.trajectory, int(r.sensor), r.start, r.duration,
                    _KIND_CODES[r.kind], mask, int(r.noisy))
        stuck[i, list(r.axes)] = r.stuck_value
    arrays = {
        "lengths": lengths,
        "dt": np.array([s.dt for s in ds.streams], dtype=np.float64),
        "accel": np.concatenate([s.accel for s in ds.streams]) if ds.streams else np.zeros((0, 3)),
        "imu": np.concatenate([s.imu for s in ds.streams]) if ds.streams else np.zeros((0, 3)),
        "labels": np.concatenate(ds.labels) if ds.labels else np.zeros((0, 2), bool),
        "records": table,
        "stuck_values": stuck,
    }
    meta = {
        "trajectory_config": _cfg_dict(ds.trajectory_config),
        "injection_config": _cfg_dict(ds.injection_config),
    }
    path = _container.write(path, DATASET_MAGIC, DATASET_VERSION, arrays, meta)
    if config_sidecar:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_dataset(path):
    arrays, meta = _container.read(path, DATASET_MAGIC, DATASET_VERSION)
    bounds = np.concatenate([[0], np.cumsum(arrays["lengths"])])
    streams, labels = [], []
    for i, dt in enumerate(arrays["dt"]):
        a, b = bounds[i], bounds[i + 1]
        streams.append(SensorStreamPair(arrays["accel"][a:b].copy(),
                                        arrays["imu"][a:b].copy(), float(dt)))
        labels.append(arrays["labels"][a:b].copy())
    kinds = list(FaultKind)
    records = []
    for row, sv in zip(arrays["records"], arrays["stuck_values"]):
        traj, sensor, start, dur, kind, mask, noisy = (int(v) for v in row)
        axes = tuple(a for a in range(3) if mask >> a & 1)
        records.append(FaultRecord(traj, Sensor(sensor), start, dur, kinds[kind], axes,
                                   bool(noisy), tuple(float(sv[a]) for a in axes)))
    tc = meta.get("trajectory_config")
    ic = meta.get("injection_config")
    return LabeledDataset(streams, labels, records,
                          TrajectoryConfig(**tc) if tc else None,
                          InjectionConfig(**ic) if ic else None)
