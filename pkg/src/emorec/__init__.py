"""emorec: a speech emotion recognition pipeline on numpy.

The package covers the whole workflow: WAV decoding and resampling, noise
reduction and silence trimming, augmentation planning, a 94-dimensional
acoustic feature set, spectrogram images, classical classifiers and a small
neural engine built from scratch, evaluation metrics, a CLI, and an HTTP
inference service.
"""
from . import (  # noqa: F401
    audio_io,
    augment,
    classic_ml,
    config,
    corpus,
    errors,
    features,
    metrics,
    neural_net,
    preprocess,
    service,
)
from .audio_io import AudioClip, decode_wav, encode_wav, read_wav, resample, write_wav
from .classic_ml import (
    DesignMatrix,
    ModelArtifact,
    fit_model,
    grid_search_knn,
    load_artifact,
    predict,
    predict_proba,
    save_artifact,
)
from .corpus import (
    EMOTION_NAMES,
    Emotion,
    SplitConfig,
    UtteranceRecord,
    load_manifest,
    split_train_val,
    stratified_split,
)
from .errors import EmorecError
from .features import (
    ScalerParams,
    apply_scaler,
    extract_feature_vector,
    fit_scaler,
    mel_filterbank,
    mfcc,
    stft,
)
from .metrics import EvalReport, confusion, report, unweighted_accuracy, weighted_accuracy
from .neural_net import TrainConfig, build_cnn1d, build_mlp, grad_check, train
from .preprocess import PreprocessConfig, block_1s, preprocess_clip, reduce_noise, trim_silence

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "DesignMatrix",
    "EMOTION_NAMES",
    "EmorecError",
    "Emotion",
    "EvalReport",
    "ModelArtifact",
    "PreprocessConfig",
    "ScalerParams",
    "SplitConfig",
    "TrainConfig",
    "UtteranceRecord",
    "apply_scaler",
    "block_1s",
    "build_cnn1d",
    "build_mlp",
    "confusion",
    "decode_wav",
    "encode_wav",
    "extract_feature_vector",
    "fit_model",
    "fit_scaler",
    "grad_check",
    "grid_search_knn",
    "load_artifact",
    "load_manifest",
    "mel_filterbank",
    "mfcc",
    "predict",
    "predict_proba",
    "preprocess_clip",
    "read_wav",
    "reduce_noise",
    "report",
    "resample",
    "save_artifact",
    "split_train_val",
    "stft",
    "stratified_split",
    "train",
    "trim_silence",
    "unweighted_accuracy",
    "weighted_accuracy",
    "write_wav",
    "__version__",
]
