"""Minimal-deviation alteration of motion velocity signals.

The package takes a recorded effector velocity signal, a dataset labeled
with a binary encoding level, and a trained encoding classifier, and
produces an altered signal that the classifier accepts as encoded while
staying as close to the original as the classifier permits. Alteration
runs offline on complete signals, online on streamed prefixes, or online
with a learned positional correction gate on top.
"""

from .blending import (
    BlendGrid,
    BlendTable,
    OfflineSolution,
    blend,
    check_table_matches,
    compute_table,
    load_table,
    save_table,
    solve_offline,
    table_fingerprint,
    table_to_csv,
)
from .classifier import (
    Decision,
    EncoderModel,
    TrainConfig,
    Verdict,
    classify,
    cross_validate,
    decide,
    evaluate_split,
    featurize,
    load_model,
    model_fingerprint,
    save_model,
    train,
)
from .dataset import (
    PRESETS,
    LabeledSample,
    PartitionedDataset,
    SynthConfig,
    dataset_fingerprint,
    generate_synthetic,
    load,
    partition,
    save,
    validate_prefix_uniqueness,
)
from .errors import (
    AmbiguousExpansionError,
    ConfigError,
    DatasetParseError,
    DomainError,
    ExpansionNotFoundError,
    FeatureError,
    InvalidSignalError,
    MotionBlendError,
    PrefixUniquenessError,
    ProtocolError,
    ShapeMismatchError,
    StaleArtifactError,
    TrainingError,
    TrivialPartitionError,
)
from .online import OnlineSchedule, OnlineSession, SessionResult, replay, start_session
from .rl import (
    AgentModel,
    AgentTrainConfig,
    CorrectionConfig,
    CorrectionEnv,
    Episode,
    EpisodeTrace,
    GuaranteeCheck,
    agent_fingerprint,
    check_guarantee,
    decode_action,
    guarantee_bound,
    load_agent,
    make_episode,
    reward,
    save_agent,
    train_agent,
)
from .signals import (
    MotionSignal,
    SignalConfig,
    SignalPrefix,
    TerminalInstant,
    differentiate,
    dist,
    expand,
    integrate,
    project,
    restrict,
    terminal_instant,
)

__version__ = "0.1.0"

__all__ = [
    "AgentModel",
    "AgentTrainConfig",
    "AmbiguousExpansionError",
    "BlendGrid",
    "BlendTable",
    "ConfigError",
    "CorrectionConfig",
    "CorrectionEnv",
    "DatasetParseError",
    "Decision",
    "DomainError",
    "EncoderModel",
    "Episode",
    "EpisodeTrace",
    "ExpansionNotFoundError",
    "FeatureError",
    "GuaranteeCheck",
    "InvalidSignalError",
    "LabeledSample",
    "MotionBlendError",
    "MotionSignal",
    "OfflineSolution",
    "OnlineSchedule",
    "OnlineSession",
    "PRESETS",
    "PartitionedDataset",
    "PrefixUniquenessError",
    "ProtocolError",
    "SessionResult",
    "ShapeMismatchError",
    "SignalConfig",
    "SignalPrefix",
    "StaleArtifactError",
    "SynthConfig",
    "TerminalInstant",
    "TrainConfig",
    "TrainingError",
    "TrivialPartitionError",
    "Verdict",
    "agent_fingerprint",
    "blend",
    "check_guarantee",
    "check_table_matches",
    "classify",
    "compute_table",
    "cross_validate",
    "dataset_fingerprint",
    "decide",
    "decode_action",
    "differentiate",
    "dist",
    "evaluate_split",
    "expand",
    "featurize",
    "generate_synthetic",
    "guarantee_bound",
    "integrate",
    "load",
    "load_agent",
    "load_model",
    "load_table",
    "make_episode",
    "model_fingerprint",
    "partition",
    "project",
    "restrict",
    "reward",
    "save",
    "save_agent",
    "save_model",
    "save_table",
    "solve_offline",
    "start_session",
    "table_fingerprint",
    "table_to_csv",
    "terminal_instant",
    "train",
    "train_agent",
    "validate_prefix_uniqueness",
]
