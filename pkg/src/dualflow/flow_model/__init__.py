from .attention import AttentionField, detokenize, softmax_rows, tokenize
from .base import NULL, Condition, FieldError, VelocityField, condition_embedding, time_features
from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .dense import DenseField
from .guidance import CountingField, cfg_velocity
from .oracles import DeltaTarget, GaussianTarget, PerfectCoupling
from .training import (TrainConfig, TrainingDiverged, TrainResult, grad_check, rf_loss,
                       train)


def eval_velocity(field, x, t, cond=NULL):
    return field.velocity(x, t, cond)
