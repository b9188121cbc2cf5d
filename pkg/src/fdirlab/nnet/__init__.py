"""Self-contained numpy implementation of the multi-channel 1D CNN detector."""

from .model import (ModelConfig, backward, forward, forward_logits, init_params, loss,
                    loss_and_grad, param_shapes)
from .optim import AdamState, adam_step
from .training import (EarlyStopping, ModelParams, TrainConfig, fit_detector, load_model,
                       predict_proba_track, predict_track, save_model, train)

__all__ = [
    "AdamState", "EarlyStopping", "ModelConfig", "ModelParams", "TrainConfig", "adam_step",
    "backward", "fit_detector", "forward", "forward_logits", "init_params", "load_model",
    "loss", "loss_and_grad", "param_shapes", "predict_proba_track", "predict_track",
    "save_model", "train",
]
