"""Derivative features, robust quantile scaling and sliding windows.

Each sensor contributes six features per sample, in fixed order: the three
raw axes followed by their three backward-difference derivatives.  The two
sensors are stacked into a ``(T, 12)`` feature matrix, accelerometer first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

N_SENSOR_FEATURES = 6
N_FEATURES = 2 * N_SENSOR_FEATURES


def compute_derivative(stream, dt):
    """Backward difference ``d[t] = (x[t] - x[t-1]) / dt`` with ``d[0] = 0``."""
    x = np.asarray(stream, dtype=np.float64)
    if len(x) == 0:
        raise DataError("empty stream")
    if not dt > 0:
        raise ConfigError("dt", "must be > 0")
    d = np.zeros_like(x)
    d[1:] = (x[1:] - x[:-1]) / dt
    return d


def sensor_features(stream, dt):
    """``(T, 3)`` stream -> ``(T, 6)`` [signal, derivative]."""
    return np.concatenate([stream, compute_derivative(stream, dt)], axis=1)


def trajectory_features(pair):
    """Raw (unscaled) ``(T, 12)`` features of one :class:`SensorStreamPair`."""
    return np.concatenate([sensor_features(pair.accel, pair.dt),
                           sensor_features(pair.imu, pair.dt)], axis=1)


def dataset_features(ds):
    return [trajectory_features(p) for p in ds.streams]


# --------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalerParams:
    q_lo: float
    q_hi: float
    center: np.ndarray
    scale: np.ndarray
    kind: str = "robust"

    def __post_init__(self):
        if not 0 <= self.q_lo < self.q_hi <= 100:
            raise ConfigError("q_lo/q_hi", f"need 0 <= q_lo < q_hi <= 100, got "
                                           f"({self.q_lo}, {self.q_hi})")
        if not np.all(self.scale > 0):
            raise ConfigError("scale", "every feature scale must be > 0")

    @property
    def n_features(self):
        return len(self.center)

    def to_dict(self):
        return {"q_lo": self.q_lo, "q_hi": self.q_hi, "kind": self.kind,
                "center": self.center.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["q_lo"], d["q_hi"], np.asarray(d["center"], dtype=np.float64),
                   np.asarray(d["scale"], dtype=np.float64), d.get("kind", "robust"))

    def equals(self, other):
        return (self.kind == other.kind and self.q_lo == other.q_lo
                and self.q_hi == other.q_hi
                and np.array_equal(self.center, other.center)
                and np.array_equal(self.scale, other.scale))


def _lower_quantile(sorted_x, q):
    """Value at rank ``floor(q/100 * (n-1))`` of an ascending sample."""
    n = sorted_x.shape[0]
    return sorted_x[int(np.floor(q / 100.0 * (n - 1)))]


def fit_scaler(training_features, q_lo=33.0, q_hi=90.0):
    """Median centre and inter-quantile scale, per feature column.

    Quantiles use the lower order statistic (no interpolation).  A feature
    whose quantile spread is zero gets scale 1.
    """
    x = np.asarray(training_features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise DataError("cannot fit a scaler on zero samples")
    if not 0 <= q_lo < q_hi <= 100:
        raise ConfigError("q_lo/q_hi", f"need 0 <= q_lo < q_hi <= 100, got ({q_lo}, {q_hi})")
    xs = np.sort(x, axis=0)
    center = np.median(xs, axis=0)
    scale = _lower_quantile(xs, q_hi) - _lower_quantile(xs, q_lo)
    scale = np.where(scale > 0, scale, 1.0)
    return ScalerParams(float(q_lo), float(q_hi), center, scale)


def fit_standard_scaler(training_features):
    """Mean / standard-deviation scaling, kept for scaler comparisons."""
    x = np.asarray(training_features, dtype=np.float64)
    if x.shape[0] == 0:
        raise DataError("cannot fit a scaler on zero samples")
    std = x.std(axis=0)
    return ScalerParams(0.0, 100.0, x.mean(axis=0), np.where(std > 0, std, 1.0), "standard")


def fit_dataset_scaler(ds, q_lo=33.0, q_hi=90.0):
    return fit_scaler(np.concatenate(dataset_features(ds)), q_lo, q_hi)


def apply_scaler(features, params):
    x = np.asarray(features)
    if x.shape[-1] != params.n_features:
        raise DataError(f"feature arity {x.shape[-1]} != scaler arity {params.n_features}")
    return (x - params.center) / params.scale


def invert_scaler(scaled, params):
    x = np.asarray(scaled)
    if x.shape[-1] != params.n_features:
        raise DataError(f"feature arity {x.shape[-1]} != scaler arity {params.n_features}")
    return x * params.scale + params.center


def scaler_comparison(ds, setups=None):
    """Nominal spread vs. infinite-like fault separation for several scalers.

    ``setups`` maps a name to ``None`` (standardisation) or a ``(q_lo, q_hi)``
    pair.  For every setup and signal feature the result holds the 99th
    percentile of ``|scaled|`` over fault-free samples, the smallest
    ``|scaled|`` over infinite-like faulty samples, and their ratio.
    """
    from .simgen import FaultKind

    if setups is None:
        setups = {"standard": None, "robust_default": (25.0, 75.0),
                  "robust_tuned": (33.0, 90.0)}
    feats = dataset_features(ds)
    x = np.concatenate(feats)
    healthy = np.concatenate([~lab.any(axis=1) for lab in ds.labels])
    inf_mask = np.zeros((len(x), N_FEATURES), dtype=bool)
    bounds = np.concatenate([[0], np.cumsum([len(f) for f in feats])])
    for r in ds.fault_records:
        if r.kind is FaultKind.STUCK_AT_INFINITE_LIKE:
            offset = bounds[r.trajectory]
            for a in r.axes:
                inf_mask[offset + r.start:offset + r.end, N_SENSOR_FEATURES * r.sensor + a] = True
    out = {}
    for name, q in setups.items():
        params = fit_standard_scaler(x) if q is None else fit_scaler(x, *q)
        z = np.abs(apply_scaler(x, params))
        rows = {}
        for f in range(N_FEATURES):
            nominal = np.percentile(z[healthy, f], 99) if healthy.any() else np.nan
            faulty = z[inf_mask[:, f], f]
            smallest = faulty.min() if faulty.size else np.nan
            rows[f] = {"nominal_p99": float(nominal), "infinite_like_min": float(smallest),
                       "separation_ratio": float(smallest / nominal) if nominal > 0 else np.inf}
        out[name] = rows
    return out


# --------------------------------------------------------------------------
# windows


@dataclass(frozen=True)
class WindowConfig:
    length: int = 180
    stride: int = 1

    def __post_init__(self):
        if self.length < 2:
            raise ConfigError("length", "window length must be >= 2")
        if self.stride < 1:
            raise ConfigError("stride", "window stride must be >= 1")

    def check_against(self, min_fault_separation):
        if self.length >= min_fault_separation:
            raise ConfigError("length", f"window length {self.length} must stay below the "
                                        f"fault separation {min_fault_separation}")


@dataclass
class WindowBatch:
    """Lazily materialised sliding windows over scaled trajectories.

    ``index`` rows are ``(trajectory, start)``; window ``w`` covers samples
    ``start .. start + length - 1`` and its target is the label at the last
    of them.
    """

    features: list
    labels: list
    index: np.ndarray
    length: int
    empty: bool = False
    dtype: type = field(default=np.float32)

    def __len__(self):
        return len(self.index)

    @property
    def starts(self):
        return self.index[:, 1]

    def take(self, rows=None):
        """``(accel, imu, targets)`` for the selected window rows.

        ``accel``/``imu`` have shape ``(n, length, 6)``; ``targets`` is
        ``(n, 2)`` float.
        """
        idx = self.index if rows is None else self.index[rows]
        n, L = len(idx), self.length
        x = np.empty((n, L, N_FEATURES), dtype=self.dtype)
        t = np.empty((n, 2), dtype=self.dtype)
        for i, (k, s) in enumerate(idx):
            x[i] = self.features[k][s:s + L]
            t[i] = self.labels[k][s + L - 1]
        return x[..., :N_SENSOR_FEATURES], x[..., N_SENSOR_FEATURES:], t

    @property
    def accel(self):
        return self.take()[0]

    @property
    def imu(self):
        return self.take()[1]

    @property
    def targets(self):
        return self.take()[2].astype(bool)


def window_starts(n_samples, cfg):
    if n_samples < cfg.length:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_samples - cfg.length + 1, cfg.stride, dtype=np.int64)


def make_windows(dataset, scaler, window_cfg, dtype=np.float32, trajectories=None):
    """Scale every trajectory once and index its sliding windows.

    Windows never cross trajectory boundaries.  If no trajectory is long
    enough the batch is returned with ``empty=True``.
    """
    feats, labels, index = [], [], []
    ks = range(len(dataset)) if trajectories is None else trajectories
    for j, k in enumerate(ks):
        pair = dataset.streams[k]
        feats.append(apply_scaler(trajectory_features(pair), scaler).astype(dtype))
        labels.append(dataset.labels[k])
        starts = window_starts(len(pair), window_cfg)
        index.append(np.stack([np.full_like(starts, j), starts], axis=1))
    index = np.concatenate(index) if index else np.zeros((0, 2), dtype=np.int64)
    return WindowBatch(feats, labels, index, window_cfg.length, empty=len(index) == 0,
                       dtype=dtype)
