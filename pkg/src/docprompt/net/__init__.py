"""Micro-autograd, the restoration network and its training loop."""

from .autograd import Tensor
from .losses import compose_output, denormalize_bm, normalize_bm, output_base, task_loss
from .model import Model, Param, build_model
from .optim import AdamW, adamw_step, cosine_lr
from .train import (
    Prediction,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    parse_loss_log,
    predict,
    sample_task,
    save_checkpoint,
    train,
)
