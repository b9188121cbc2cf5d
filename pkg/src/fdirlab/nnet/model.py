"""Two-branch multi-channel 1D CNN with a joint stage and two sigmoid heads.

Layout::

    accel (N, L, 6) -> [per-feature conv -> act] x len(branch_layers) --+
                                                                        concat
    imu   (N, L, 6) -> [per-feature conv -> act] x len(branch_layers) --+
        -> [full conv -> act] x len(joint_layers) -> temporal pool
        -> [dense -> act] x len(dense_units) -> dense(2) -> sigmoid

Scaled inputs are clipped to ``+-input_clip`` before the first layer.  The
temporal pool covers only the last ``pool_last`` positions (the whole map
when it is shorter), so the heads see where in the window a signature sits.
Branch convolutions are grouped by input feature, so a branch never mixes
the six features; mixing (across features and sensors) starts in the joint
stage.  Head 0 is the accelerometer failure index, head 1 the IMU one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import layers as L
from ..errors import ConfigError, DataError

BRANCHES = ("accel", "imu")
N_FEATURES = 6
LOSS_EPS = 1e-7


@dataclass(frozen=True)
class ModelConfig:
    window_length: int = 180
    branch_layers: tuple = ((7, 8), (5, 8))
    joint_layers: tuple = ((5, 32),)
    dense_units: tuple = (64,)
    activation: str = "relu"
    pooling: str = "max"
    pool_last: int | None = 24
    input_clip: float | None = 50.0
    threshold: float = 0.5
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("branch_layers", "joint_layers"):
            object.__setattr__(self, name, tuple(tuple(int(v) for v in layer)
                                                 for layer in getattr(self, name)))
        object.__setattr__(self, "dense_units", tuple(int(u) for u in self.dense_units))
        if self.activation not in ("relu", "tanh"):
            raise ConfigError("activation", f"unsupported {self.activation!r}")
        if self.pooling not in ("max", "mean"):
            raise ConfigError("pooling", f"unsupported {self.pooling!r}")
        if self.input_clip is not None and not self.input_clip > 0:
            raise ConfigError("input_clip", "must be > 0 or None")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold", "must lie in (0, 1)")
        if not self.branch_layers:
            raise ConfigError("branch_layers", "need at least one branch layer")
        for name in ("branch_layers", "joint_layers"):
            for k, f in getattr(self, name):
                if k < 1 or f < 1:
                    raise ConfigError(name, "kernel widths and filter counts must be >= 1")
        if self.pooled_length < 1:
            raise ConfigError("window_length", "too short for the convolution stack")
        if self.pool_last is not None and self.pool_last < 1:
            raise ConfigError("pool_last", "must be >= 1 or None")
        np.dtype(self.dtype)

    @property
    def pooled_length(self):
        shrink = sum(k - 1 for k, _ in self.branch_layers + self.joint_layers)
        return self.window_length - shrink

    def to_dict(self):
        return dataclasses.asdict(self)


def param_shapes(cfg):
    """Ordered ``name -> shape`` map of every trainable tensor."""
    shapes = {}
    for br in BRANCHES:
        cin = 1
        for i, (k, f) in enumerate(cfg.branch_layers):
            shapes[f"{br}.conv{i}.w"] = (N_FEATURES, cin, k, f)
            shapes[f"{br}.conv{i}.b"] = (N_FEATURES * f,)
            cin = f
    ch = 2 * N_FEATURES * cfg.branch_layers[-1][1]
    for i, (k, f) in enumerate(cfg.joint_layers):
        shapes[f"joint.conv{i}.w"] = (1, ch, k, f)
        shapes[f"joint.conv{i}.b"] = (f,)
        ch = f
    for i, u in enumerate(cfg.dense_units):
        shapes[f"dense{i}.w"] = (ch, u)
        shapes[f"dense{i}.b"] = (u,)
        ch = u
    shapes["head.w"] = (ch, 2)
    shapes["head.b"] = (2,)
    return shapes


def _fan_in(name, shape):
    if ".conv" in name:
        return shape[1] * shape[2]
    return shape[0]


def init_params(cfg, seed=0):
    """Fan-in scaled uniform weights (He limit), zero biases."""
    rng = np.random.default_rng(seed)
    dt = np.dtype(cfg.dtype)
    out = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            out[name] = np.zeros(shape, dtype=dt)
        else:
            lim = np.sqrt(6.0 / _fan_in(name, shape))
            out[name] = rng.uniform(-lim, lim, size=shape).astype(dt)
    return out


def check_params(cfg, params):
    expected = param_shapes(cfg)
    if set(expected) != set(params):
        missing = set(expected) ^ set(params)
        raise DataError(f"parameter set does not match config: {sorted(missing)}")
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise DataError(f"{name}: shape {params[name].shape}, config wants {shape}")
        if not np.all(np.isfinite(params[name])):
            raise DataError(f"{name}: non-finite values")


def _branch(cfg, params, br, x, caches):
    for i in range(len(cfg.branch_layers)):
        name = f"{br}.conv{i}"
        w = L.expand_grouped(params[f"{name}.w"])
        z, cc = L.conv1d_forward(x, w, params[f"{name}.b"])
        x = L.activation_forward(cfg.activation, z)
        caches.append((name, w, cc, z, x))
    return x


def forward_logits(cfg, params, x_accel, x_imu, keep=False):
    """Logits ``(N, 2)``; with ``keep=True`` also the cache for backward."""
    dt = np.dtype(cfg.dtype)
    x_accel = np.asarray(x_accel, dtype=dt)
    x_imu = np.asarray(x_imu, dtype=dt)
    for x in (x_accel, x_imu):
        if x.ndim != 3 or x.shape[1:] != (cfg.window_length, N_FEATURES):
            raise DataError(f"window batch shape {x.shape}, expected "
                            f"(N, {cfg.window_length}, {N_FEATURES})")
    if x_accel.shape[0] != x_imu.shape[0]:
        raise DataError("accel and imu batches differ in size")
    if cfg.input_clip is not None:
        # infinite-like stuck values would otherwise swamp Adam's moment estimates
        x_accel = np.clip(x_accel, -cfg.input_clip, cfg.input_clip)
        x_imu = np.clip(x_imu, -cfg.input_clip, cfg.input_clip)
    caches = {br: [] for br in BRANCHES}
    h_a = _branch(cfg, params, "accel", x_accel, caches["accel"])
    h_i = _branch(cfg, params, "imu", x_imu, caches["imu"])
    split = h_a.shape[2]
    x = np.concatenate([h_a, h_i], axis=2)
    joint = []
    for i in range(len(cfg.joint_layers)):
        name = f"joint.conv{i}"
        w = L.expand_grouped(params[f"{name}.w"])
        z, cc = L.conv1d_forward(x, w, params[f"{name}.b"])
        x = L.activation_forward(cfg.activation, z)
        joint.append((name, w, cc, z, x))
    x, pool_cache = L.pool_forward(cfg.pooling, x, cfg.pool_last)
    dense = []
    for i in range(len(cfg.dense_units)):
        z = L.dense_forward(x, params[f"dense{i}.w"], params[f"dense{i}.b"])
        a = L.activation_forward(cfg.activation, z)
        dense.append((f"dense{i}", x, z, a))
        x = a
    logits = L.dense_forward(x, params["head.w"], params["head.b"])
    if not keep:
        return logits
    return logits, {"branches": caches, "split": split, "joint": joint,
                    "pool": pool_cache, "dense": dense, "head_in": x}


def forward(cfg, params, x_accel, x_imu):
    """Failure-index probabilities ``(p_accel, p_imu)``, each of shape ``(N,)``."""
    p = L.sigmoid(forward_logits(cfg, params, x_accel, x_imu))
    return p[:, 0], p[:, 1]


def loss(p_pair, target_pair, eps=LOSS_EPS):
    """Batch mean of the summed binary cross-entropy of both heads."""
    p = np.clip(np.stack([np.asarray(v, dtype=np.float64) for v in p_pair], axis=1),
                eps, 1 - eps)
    t = np.stack([np.asarray(v, dtype=np.float64) for v in target_pair], axis=1)
    return float(np.mean(np.sum(-(t * np.log(p) + (1 - t) * np.log1p(-p)), axis=1)))


def backward(cfg, params, cache, dlogits):
    """Gradients of all parameters given ``dL/dlogits`` of shape ``(N, 2)``."""
    act = cfg.activation
    grads = {}
    x = cache["head_in"]
    dx, grads["head.w"], grads["head.b"] = L.dense_backward(dlogits, x, params["head.w"])
    for name, xin, z, a in reversed(cache["dense"]):
        dz = L.activation_backward(act, dx, z, a)
        dx, grads[f"{name}.w"], grads[f"{name}.b"] = L.dense_backward(dz, xin, params[f"{name}.w"])
    dx = L.pool_backward(dx, cache["pool"])
    for name, w, cc, z, a in reversed(cache["joint"]):
        dz = L.activation_backward(act, dx, z, a)
        dx, dw, grads[f"{name}.b"] = L.conv1d_backward(dz, w, cc)
        grads[f"{name}.w"] = L.collapse_grouped(dw, params[f"{name}.w"].shape)
    split = cache["split"]
    for br, d in (("accel", dx[..., :split]), ("imu", dx[..., split:])):
        layers = cache["branches"][br]
        for depth in range(len(layers) - 1, -1, -1):
            name, w, cc, z, a = layers[depth]
            dz = L.activation_backward(act, d, z, a)
            d, dw, grads[f"{name}.b"] = L.conv1d_backward(dz, w, cc, need_dx=depth > 0)
            grads[f"{name}.w"] = L.collapse_grouped(dw, params[f"{name}.w"].shape)
    return {name: grads[name] for name in params}


def loss_and_grad(cfg, params, x_accel, x_imu, targets):
    """Loss and gradients on one mini-batch; ``targets`` is ``(N, 2)``.

    The gradient is the exact derivative of the unclamped cross-entropy
    w.r.t. the logits, ``(p - t) / N``; clamping only guards the reported
    loss value.
    """
    logits, cache = forward_logits(cfg, params, x_accel, x_imu, keep=True)
    p = L.sigmoid(logits)
    t = np.asarray(targets, dtype=p.dtype)
    value = loss((p[:, 0], p[:, 1]), (t[:, 0], t[:, 1]))
    grads = backward(cfg, params, cache, (p - t) / len(p))
    return value, grads
