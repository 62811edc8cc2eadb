from .io import ModelFormatError, dumps_model, load_model, loads_model, save_model
from .metrics import Metrics, format_csv, format_table, metrics_from_counts, metrics_from_labels
from .models import (
    DISPLAY_NAMES,
    KINDS,
    REPORT_KINDS,
    ForestParams,
    GBMParams,
    LogRegParams,
    MLPParams,
    Model,
    TrainingError,
    TreeParams,
    default_hyperparams,
    evaluate,
    mlp_loss_and_grads,
    predict_label,
    predict_score,
    predict_scores,
    train,
    train_forest,
    train_gbm,
    train_logreg,
    train_mlp,
    train_tree,
)
from .split import split, stratified_split
from .tree import Tree
