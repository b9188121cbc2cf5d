"""Mini-batch training with early stopping, and per-sample prediction tracks."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .optim import AdamState, adam_step
from .. import preprocess as pp
from .._container import read, write
from ..errors import ConfigError, DataError

log = logging.getLogger(__name__)

MODEL_MAGIC = b"\x89FDIRMD\n"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 6.507411205516692e-4
    max_epochs: int = 32
    batch_size: int = 32768
    early_stopping_patience: int = 5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-7
    rng_seed: int = 0
    eval_batch_size: int = 1024

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", "must be > 0")
        if self.early_stopping_patience < 1:
            raise ConfigError("early_stopping_patience", "must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs", "must be >= 1")

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ModelParams:
    """Trained weights plus everything inference needs (config, scaler)."""

    config: M.ModelConfig
    weights: dict
    scaler: pp.ScalerParams | None = None
    history: dict = field(default_factory=dict)
    train_config: TrainConfig | None = None

    def __post_init__(self):
        M.check_params(self.config, self.weights)

    def copy(self):
        return dataclasses.replace(self, weights={k: v.copy() for k, v in self.weights.items()},
                                   history=dict(self.history))


class EarlyStopping:
    """Stop once the monitored loss fails to improve ``patience`` epochs in a row."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch, value):
        """Record ``value`` for 1-based ``epoch``; True means stop now."""
        if value < self.best:
            self.best, self.best_epoch, self.wait = value, epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience


def evaluate_loss(cfg, weights, batch, chunk=1024):
    """Mean loss of ``weights`` over every window of ``batch``."""
    total, n = 0.0, len(batch)
    for lo in range(0, n, chunk):
        rows = np.arange(lo, min(lo + chunk, n))
        xa, xi, t = batch.take(rows)
        pa, pi = M.forward(cfg, weights, xa, xi)
        total += M.loss((pa, pi), (t[:, 0], t[:, 1])) * len(rows)
    return total / n


def train(train_batch, val_batch, model_cfg, train_cfg, scaler=None, init_weights=None):
    """Fit the classifier; returns ``(ModelParams, history)``.

    The returned weights are those of the epoch with the lowest validation
    loss (training loss when ``val_batch`` is None or empty).
    """
    if train_batch is None or len(train_batch) == 0:
        raise DataError("empty training set")
    if train_batch.length != model_cfg.window_length:
        raise ConfigError("window_length", f"windows of {train_batch.length} samples fed to a "
                                           f"model built for {model_cfg.window_length}")
    rng = np.random.default_rng(train_cfg.rng_seed)
    weights = (M.init_params(model_cfg, seed=int(rng.integers(2**31)))
               if init_weights is None else {k: v.copy() for k, v in init_weights.items()})
    state = AdamState.zeros_like(weights)
    stopper = EarlyStopping(train_cfg.early_stopping_patience)
    use_val = val_batch is not None and len(val_batch) > 0
    history = {"train_loss": [], "val_loss": []}
    best = {k: v.copy() for k, v in weights.items()}
    n = len(train_batch)
    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        running = 0.0
        for lo in range(0, n, train_cfg.batch_size):
            rows = order[lo:lo + train_cfg.batch_size]
            xa, xi, t = train_batch.take(rows)
            value, grads = M.loss_and_grad(model_cfg, weights, xa, xi, t)
            adam_step(weights, grads, state, train_cfg)
            running += value * len(rows)
        history["train_loss"].append(running / n)
        monitored = (evaluate_loss(model_cfg, weights, val_batch, train_cfg.eval_batch_size)
                     if use_val else history["train_loss"][-1])
        history["val_loss"].append(monitored if use_val else None)
        # wall-clock times are logged only, so saved models stay reproducible
        log.info("epoch %d train %.5f val %s (%.1f s)", epoch, history["train_loss"][-1],
                 monitored, time.perf_counter() - t0)
        stop = stopper.update(epoch, monitored)
        if stopper.best_epoch == epoch:
            best = {k: v.copy() for k, v in weights.items()}
        if stop:
            break
    history["best_epoch"] = stopper.best_epoch
    history["epochs_run"] = len(history["train_loss"])
    params = ModelParams(model_cfg, best, scaler, history, train_cfg)
    return params, history


def fit_detector(train_ds, val_ds, model_cfg, train_cfg, q_lo=33.0, q_hi=90.0, train_stride=1,
                 val_stride=None):
    """Scaler fit on ``train_ds`` only, windowing, then :func:`train`."""
    scaler = pp.fit_dataset_scaler(train_ds, q_lo, q_hi)
    length = model_cfg.window_length
    tb = pp.make_windows(train_ds, scaler, pp.WindowConfig(length, train_stride),
                         dtype=np.dtype(model_cfg.dtype))
    vb = None
    if val_ds is not None and len(val_ds):
        vb = pp.make_windows(val_ds, scaler, pp.WindowConfig(length, val_stride or train_stride),
                             dtype=np.dtype(model_cfg.dtype))
    return train(tb, vb, model_cfg, train_cfg, scaler=scaler)


def predict_proba_track(params, dataset, chunk=1024):
    """Per-sample ``(T, 2)`` probabilities; 0 before the first full window."""
    if params.scaler is None:
        raise DataError("model has no paired scaler")
    length = params.config.window_length
    out = []
    for k, pair in enumerate(dataset.streams):
        if len(pair) < length:
            raise DataError(f"trajectory {k}: {len(pair)} samples < window length {length}")
        batch = pp.make_windows(dataset, params.scaler, pp.WindowConfig(length, 1),
                                dtype=np.dtype(params.config.dtype), trajectories=[k])
        prob = np.zeros((len(pair), 2))
        for lo in range(0, len(batch), chunk):
            rows = np.arange(lo, min(lo + chunk, len(batch)))
            xa, xi, _ = batch.take(rows)
            pa, pi = M.forward(params.config, params.weights, xa, xi)
            last = batch.starts[rows] + length - 1
            prob[last, 0], prob[last, 1] = pa, pi
        out.append(prob)
    return out


def threshold_track(prob, threshold):
    """Strict ``p > threshold``."""
    return np.asarray(prob) > threshold


def predict_track(params, dataset, chunk=1024):
    """Boolean ``(T, 2)`` failure-index tracks, one per trajectory."""
    return [threshold_track(p, params.config.threshold)
            for p in predict_proba_track(params, dataset, chunk)]


# --------------------------------------------------------------------------
# container


def save_model(params, path):
    meta = {
        "model_config": params.config.to_dict(),
        "scaler": params.scaler.to_dict() if params.scaler is not None else None,
        "history": params.history,
        "train_config": params.train_config.to_dict() if params.train_config else None,
    }
    return write(path, MODEL_MAGIC, MODEL_VERSION, params.weights, meta)


def load_model(path):
    arrays, meta = read(path, MODEL_MAGIC, MODEL_VERSION)
    cfg = M.ModelConfig(**meta["model_config"])
    scaler = pp.ScalerParams.from_dict(meta["scaler"]) if meta.get("scaler") else None
    if scaler is not None and scaler.n_features != pp.N_FEATURES:
        raise DataError(f"scaler arity {scaler.n_features} != {pp.N_FEATURES}")
    tc = TrainConfig(**meta["train_config"]) if meta.get("train_config") else None
    return ModelParams(cfg, arrays, scaler, meta.get("history") or {}, tc)
