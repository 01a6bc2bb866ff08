from .network import (
    CONV_LAYERS,
    VARIANTS,
    VARIANT_BUILDERS,
    ModelConfig,
    RefineContext,
    bilevel_loss,
    etpp_1,
    etpp_2,
    etpp_3,
    forward,
    forward_event,
    init_params,
    param_count,
    param_shapes,
    refine_all,
    refine_forward,
    spatial_forward,
    temporal_step,
)
from .prepare import EventBatch, Preprocessor, check_isolation, fit_preprocessor
from .training import Checkpoint, batch_loss, loss_and_grad, predict, predict_events, train, train_on_dataset
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "CONV_LAYERS", "VARIANTS", "VARIANT_BUILDERS", "ModelConfig", "RefineContext", "bilevel_loss",
    "etpp_1", "etpp_2", "etpp_3", "forward", "forward_event", "init_params", "param_count",
    "param_shapes", "refine_all", "refine_forward", "spatial_forward", "temporal_step",
    "EventBatch", "Preprocessor", "check_isolation", "fit_preprocessor", "Checkpoint", "batch_loss",
    "loss_and_grad", "predict", "predict_events", "train", "train_on_dataset", "CheckpointError",
    "load_checkpoint", "save_checkpoint",
]
