"""Travel-time predictors: MLP, RBFN, historical averages and the timetable baseline."""
from .base import (KINDS, MODEL_FORMAT, TrainedModel, ha_model, load_model, predict, predict_longdist,
                   predict_recursive, save_model, timetable_model, train_model)
from .ha import HaTable, build_ha, ha_predict, ha_predict_many
from .kmeans import kmeans
from .mlp import MlpConfig, train_mlp
from .rbfn import RbfnConfig, train_rbfn
from .scaler import Scaler, apply_scaler, fit_scaler

__all__ = [
    "KINDS", "MODEL_FORMAT", "TrainedModel", "ha_model", "load_model", "predict", "predict_longdist",
    "predict_recursive", "save_model", "timetable_model", "train_model", "HaTable", "build_ha",
    "ha_predict", "ha_predict_many", "kmeans", "MlpConfig", "train_mlp", "RbfnConfig", "train_rbfn",
    "Scaler", "apply_scaler", "fit_scaler",
]
