"""Transfer machinery: genome layout for cross-network connections, the
source pool, and the capacity-matched random-source control."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import (
    N_OUTPUTS,
    NetworkConfigError,
    SourceModule,
    TargetModule,
    TransferLinks,
    make_source,
)


@dataclass(frozen=True)
class TransferLayout:
    """Slot layout of a transfer genome.

    Order is fixed: in_to_hidden row-major, then out_to_out row-major.
    """

    n_target_inputs: int
    n_source_hidden: int
    n_source_outputs: int
    n_target_outputs: int

    @property
    def genome_length(self) -> int:
        return (self.n_target_inputs * self.n_source_hidden
                + self.n_source_outputs * self.n_target_outputs)


def make_layout(substrates, source: SourceModule) -> TransferLayout:
    n_in = sum(r * c for r, c in substrates)
    if n_in <= 0:
        raise NetworkConfigError("target must have at least one input")
    return TransferLayout(
        n_target_inputs=n_in,
        n_source_hidden=source.net.n_hidden,
        n_source_outputs=source.net.n_outputs,
        n_target_outputs=N_OUTPUTS,
    )


def instantiate_transfer(genome: np.ndarray, layout: TransferLayout) -> TransferLinks:
    genome = np.asarray(genome, dtype=np.float64)
    if genome.shape != (layout.genome_length,):
        raise NetworkConfigError(
            f"transfer genome length {genome.shape} != ({layout.genome_length},)"
        )
    cut = layout.n_target_inputs * layout.n_source_hidden
    return TransferLinks(
        in_to_hidden=genome[:cut].reshape(layout.n_target_inputs,
                                          layout.n_source_hidden),
        out_to_out=genome[cut:].reshape(layout.n_source_outputs,
                                        layout.n_target_outputs),
    )


def flatten_transfer(links: TransferLinks, layout: TransferLayout) -> np.ndarray:
    flat = np.concatenate([links.in_to_hidden.ravel(), links.out_to_out.ravel()])
    if flat.shape != (layout.genome_length,):
        raise NetworkConfigError("links do not match layout")
    return flat


@dataclass
class SourcePool:
    """Trained networks available for recruitment. A source is recruited at
    most once per run, and at most one is ever attached at a time."""

    entries: list[list] = field(default_factory=list)  # [SourceModule, used]

    def add(self, source: SourceModule):
        self.entries.append([source, False])

    def has_unused(self) -> bool:
        return any(not used for _, used in self.entries)

    def acquire(self) -> SourceModule | None:
        """First unused source, marked used; None when exhausted."""
        for entry in self.entries:
            if not entry[1]:
                entry[1] = True
                return entry[0]
        return None


# ---------------------------------------------------------------------------
# Random-source control
# ---------------------------------------------------------------------------

@dataclass
class ScratchStats:
    """Parameter counts of completed scratch-trained networks; the random
    control draws from this empirical distribution."""

    param_counts: list[int]

    @property
    def mean_params(self) -> float:
        if not self.param_counts:
            raise ValueError(
                "no scratch parameter counts available: run scratch training "
                "first, or pass an explicit parameter count"
            )
        return sum(self.param_counts) / len(self.param_counts)


def collect_scratch_stats(nets) -> ScratchStats:
    """Stats over the given networks' target modules (weights, biases and
    self loops all count)."""
    counts = []
    for n in nets:
        t = n if isinstance(n, TargetModule) else n.target
        counts.append(t.param_count())
    return ScratchStats(param_counts=counts)


def params_for_hidden(substrates, n_hidden: int) -> int:
    n_in = sum(r * c for r, c in substrates)
    return n_hidden * (n_in + 2 + N_OUTPUTS) + N_OUTPUTS


def _closest_hidden_count(substrates, target_params: float) -> int:
    # invert the affine per-node cost; check both neighbors, ties go down
    n_in = sum(r * c for r, c in substrates)
    per_node = n_in + 2 + N_OUTPUTS
    raw = (target_params - N_OUTPUTS) / per_node
    lo = max(1, int(np.floor(raw)))
    hi = lo + 1
    d_lo = abs(params_for_hidden(substrates, lo) - target_params)
    d_hi = abs(params_for_hidden(substrates, hi) - target_params)
    return lo if d_lo <= d_hi else hi


def make_random_source(
    stats: ScratchStats,
    substrates,
    rng: np.random.Generator,
    init_lo: float = -0.5,
    init_hi: float = 0.5,
) -> SourceModule:
    """An untrained network whose parameter count matches a draw from the
    scratch-network size distribution as closely as the layer structure
    allows (nearest achievable count, ties toward fewer nodes)."""
    if not stats.param_counts:
        raise ValueError(
            "no scratch parameter counts available: run scratch training "
            "first, or pass an explicit parameter count"
        )
    drawn = stats.param_counts[int(rng.integers(len(stats.param_counts)))]
    n_hidden = _closest_hidden_count(substrates, drawn)
    n_in = sum(r * c for r, c in substrates)
    u = lambda *shape: rng.uniform(init_lo, init_hi, shape)
    net = TargetModule(
        substrates=[(int(r), int(c)) for r, c in substrates],
        hidden_bias=u(n_hidden),
        hidden_self=u(n_hidden),
        out_bias=u(N_OUTPUTS),
        w_in=u(n_in, n_hidden),
        w_out=u(n_hidden, N_OUTPUTS),
    )
    return make_source(net, label="random")
