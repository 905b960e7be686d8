from .model import (
    Architecture,
    CnnModel,
    ModelFileError,
    backward,
    build_input,
    build_model,
    forward,
    load_model,
    predict_batch,
    save_model,
)
from .train import AdamState, TrainConfig, TrainingDiverged, TrainResult, train

__all__ = [
    "AdamState", "Architecture", "CnnModel", "ModelFileError", "TrainConfig", "TrainResult",
    "TrainingDiverged", "backward", "build_input", "build_model", "forward", "load_model",
    "predict_batch", "save_model", "train",
]
