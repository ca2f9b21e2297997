"""aeckit: reference-free speech quality assessment for acoustic echo cancellation.

Extracts spectral features from (near mic, far end, enhanced) signal triples,
trains and runs a CNN + bidirectional GRU regressor predicting echo MOS and
other-degradation MOS, and evaluates/stack-ranks echo cancellers with
Pearson/Spearman correlations against a deterministic synthetic oracle.
"""

from .audio import AudioClip, read_wav, read_wav_bytes, scale_db, trim_leading_ms, write_wav
from .dsp import (
    Spectrogram,
    StftConfig,
    erle_db,
    log_power_spectrogram,
    mel_filterbank,
    mel_log_power_spectrogram,
)
from .estimator import EchoMosRegressor, SpectrogramFeaturizer
from .evaluation import EvalReport, pearson, rank_models, spearman
from .features import (
    ScoringRequest,
    assemble_features,
    derive_training_label,
    micro_augment,
    score,
)
from .nn import (
    Checkpoint,
    ModelConfig,
    forward,
    gradient_check,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train_step,
)
from .synthdata import (
    DatasetManifest,
    ScenarioSpec,
    SyntheticAec,
    apply_synthetic_aec,
    build_dataset,
    gen_speech_like,
    graded_roster,
    load_manifest,
    oracle_mos,
    simulate_scenario,
)
from .types import FeatureBlock, MosPair, Scenario

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "Checkpoint",
    "DatasetManifest",
    "EchoMosRegressor",
    "EvalReport",
    "FeatureBlock",
    "ModelConfig",
    "MosPair",
    "Scenario",
    "ScenarioSpec",
    "ScoringRequest",
    "Spectrogram",
    "SpectrogramFeaturizer",
    "StftConfig",
    "SyntheticAec",
    "apply_synthetic_aec",
    "assemble_features",
    "build_dataset",
    "derive_training_label",
    "erle_db",
    "forward",
    "gen_speech_like",
    "gradient_check",
    "graded_roster",
    "init_model",
    "load_checkpoint",
    "load_manifest",
    "log_power_spectrogram",
    "mel_filterbank",
    "mel_log_power_spectrogram",
    "micro_augment",
    "oracle_mos",
    "pearson",
    "rank_models",
    "read_wav",
    "read_wav_bytes",
    "save_checkpoint",
    "scale_db",
    "score",
    "simulate_scenario",
    "spearman",
    "train_step",
    "trim_leading_ms",
    "write_wav",
]
