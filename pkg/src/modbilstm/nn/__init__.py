from .lstm import LstmParams, lstm_step, scan_backward, scan_forward, sigmoid
from .models import BaselineNet, BiLstmController, FourLstm, ShapeError, TimeLstm, build_network
from .training import Adam, TrainingError, TrainResult, adam_step, estimation_errors, grad_check, split_holdout, train

__all__ = [
    "Adam", "BaselineNet", "BiLstmController", "FourLstm", "LstmParams", "ShapeError", "TimeLstm",
    "TrainResult", "TrainingError", "adam_step", "build_network", "estimation_errors", "grad_check",
    "lstm_step", "scan_backward", "scan_forward", "sigmoid", "split_holdout", "train",
]

from .serialize import model_dumps, model_load, model_loads, model_save  # noqa: E402

__all__ += ["model_dumps", "model_load", "model_loads", "model_save"]
