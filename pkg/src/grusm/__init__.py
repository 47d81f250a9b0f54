"""Neuroevolution transfer learning for episodic control tasks.

Recurrent tanh controllers are evolved with subpopulation-based
neuroevolution and may recruit frozen, previously trained networks through
a small set of evolvable transfer connections. The package also ships the
noisy gridworld task family, the experiment harness, and the
transfer-effectiveness analysis used to relate task structure to transfer
outcomes.
"""

from .nets import (
    Action,
    GrusmNetwork,
    NetworkConfigError,
    NetworkFormatError,
    NetworkState,
    SourceModule,
    TargetModule,
    TransferLinks,
    active_subnetwork,
    decode_action,
    deserialize,
    digest_of,
    initial_state,
    load_network,
    make_source,
    save_network,
    serialize,
    step_activate,
)

__all__ = [
    "Action",
    "GrusmNetwork",
    "NetworkConfigError",
    "NetworkFormatError",
    "NetworkState",
    "SourceModule",
    "TargetModule",
    "TransferLinks",
    "active_subnetwork",
    "decode_action",
    "deserialize",
    "digest_of",
    "initial_state",
    "load_network",
    "make_source",
    "save_network",
    "serialize",
    "step_activate",
]

__version__ = "0.1.0"
