from .loss import weighted_bce
from .model import ArchConfig, ModelParams, init_params, model_backward, model_forward, predict_proba
from .optim import AdamState, PlateauScheduler, adam_step, scheduler_step

__all__ = [
    "ArchConfig",
    "AdamState",
    "ModelParams",
    "PlateauScheduler",
    "adam_step",
    "init_params",
    "model_backward",
    "model_forward",
    "predict_proba",
    "scheduler_step",
    "weighted_bce",
]
