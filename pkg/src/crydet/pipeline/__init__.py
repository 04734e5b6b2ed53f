"""Data handling, training, evaluation and streaming detection."""

from .config import RunConfig, load_run_config, save_run_config
from .folds import FoldSplit, stratified_holdout, stratified_kfold
from .manifest import SUBCLASSES, DatasetManifest, ManifestEntry, build_manifest, label_for
from .metrics import MetricsReport, confusion, format_table, metrics_from_scores, summarize
from .stream import Detection, detect_stream, invocations
from .training import (
    DEFAULT_SNRS,
    CrossValResult,
    EarlyStopping,
    FeatureSource,
    LabeledClip,
    TrainConfig,
    TrainResult,
    corrupt,
    evaluate,
    evaluate_model,
    fit,
    load_clip,
    load_items,
    load_model,
    predict_proba,
    snr_sweep_eval,
    train_model,
)

__all__ = [
    "CrossValResult", "DEFAULT_SNRS", "DatasetManifest", "Detection", "EarlyStopping", "FeatureSource",
    "FoldSplit", "LabeledClip", "ManifestEntry", "MetricsReport", "RunConfig", "SUBCLASSES", "TrainConfig",
    "TrainResult", "build_manifest", "confusion", "corrupt", "detect_stream", "evaluate", "evaluate_model",
    "fit", "format_table", "invocations", "label_for", "load_clip", "load_items", "load_model",
    "load_run_config", "metrics_from_scores", "predict_proba", "save_run_config", "snr_sweep_eval",
    "stratified_holdout", "stratified_kfold", "summarize", "train_model",
]
