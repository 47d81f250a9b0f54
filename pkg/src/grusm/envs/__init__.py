from .base import (
    EnvConfigError,
    EnvProtocolError,
    EnvSpec,
    EnvUsageError,
    EpisodeResult,
    EpsilonRepeat,
    GameFeatures,
    Observation,
    epsilon_repeat,
    feature_partial_order,
    make_env,
    parse_env_spec,
    run_episode,
)
from .external import ExternalProcessEnv, check_protocol
from .miniarcade import MiniArcade, n_object_classes

__all__ = [
    "EnvConfigError",
    "EnvProtocolError",
    "EnvSpec",
    "EnvUsageError",
    "EpisodeResult",
    "EpsilonRepeat",
    "ExternalProcessEnv",
    "GameFeatures",
    "MiniArcade",
    "Observation",
    "check_protocol",
    "epsilon_repeat",
    "feature_partial_order",
    "make_env",
    "n_object_classes",
    "parse_env_spec",
    "run_episode",
]
