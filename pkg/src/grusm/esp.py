"""Subpopulation-based neuroevolution.

Each recruit (one hidden node, or the transfer-connection bundle binding a
source network) evolves in its own subpopulation. Candidate networks are
assembled by drawing one member per subpopulation; every participant is
credited the network's score. Stagnation of the run-best score triggers a
burst (repopulating around each subpopulation's best genome ever), and a
second consecutive burst recruits new structure.

Determinism: every subpopulation owns an independent RNG stream keyed by
(run seed, recruit kind, ordinal), and assembly draws come from those
streams. Adding or removing one subpopulation therefore never perturbs the
random trajectory of the others, which is what makes a transfer run with an
inert source reproduce the matching scratch run exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nets import N_OUTPUTS, GrusmNetwork, NetworkConfigError, SourceModule, TargetModule
from .transfer import SourcePool, TransferLayout, instantiate_transfer, make_layout

KIND_FRESH = "fresh"
KIND_SOURCE = "source"

# stream-key codes; must stay stable so recorded runs replay
_KIND_CODE = {KIND_FRESH: 0, KIND_SOURCE: 1}


@dataclass
class EvolutionConfig:
    n_sub: int = 40
    assemblies_per_gen: int = 100
    trials_per_eval: int = 5
    p_mut: float = 0.4
    sigma_mut: float = 0.3
    delta_burst: float = 0.3
    threshold_b: int = 10
    h0: int = 4
    elite_frac: float = 0.25
    init_lo: float = -0.5
    init_hi: float = 0.5


@dataclass(frozen=True)
class BurstState:
    stagnation_counter: int = 0
    consecutive_bursts: int = 0
    threshold_b: int = 10


def detect_stagnation(
    state: BurstState, run_best_improved: bool
) -> tuple[bool, bool, BurstState]:
    """Advance the burst state machine by one generation.

    Improvement of the run-best score resets both counters. When the
    stagnation counter reaches the threshold a burst fires; a second
    consecutive burst additionally requests a new recruit.
    """
    thr = state.threshold_b
    if run_best_improved:
        return False, False, BurstState(0, 0, thr)
    counter = state.stagnation_counter + 1
    if counter < thr:
        return False, False, BurstState(counter, state.consecutive_bursts, thr)
    consecutive = state.consecutive_bursts + 1
    if consecutive >= 2:
        return True, True, BurstState(0, 0, thr)
    return True, False, BurstState(0, consecutive, thr)


class Subpopulation:
    """Fixed-size population of genomes for one recruit, with per-generation
    fitness ledgers and the best genome ever seen."""

    def __init__(self, kind: str, members: np.ndarray, rng: np.random.Generator,
                 source: SourceModule | None = None,
                 layout: TransferLayout | None = None):
        if members.ndim != 2 or members.shape[0] == 0:
            raise NetworkConfigError("subpopulation must be a non-empty 2-D array")
        self.kind = kind
        self.members = members
        self.rng = rng
        self.source = source
        self.layout = layout
        n = members.shape[0]
        self.fitness_sum = np.zeros(n)
        self.participations = np.zeros(n, dtype=np.int64)
        self.best_ever: np.ndarray | None = None
        self.best_ever_fitness = -math.inf

    @property
    def genome_length(self) -> int:
        return self.members.shape[1]

    def select(self) -> int:
        return int(self.rng.integers(self.members.shape[0]))

    def credit(self, idx: int, score: float):
        self.fitness_sum[idx] += score
        self.participations[idx] += 1

    def mean_fitness(self) -> np.ndarray:
        """Per-member mean; -inf where a member never participated."""
        out = np.full(self.members.shape[0], -math.inf)
        mask = self.participations > 0
        out[mask] = self.fitness_sum[mask] / self.participations[mask]
        return out

    def update_best_ever(self):
        means = self.mean_fitness()
        i = int(np.argmax(means))
        if means[i] > self.best_ever_fitness:
            self.best_ever_fitness = float(means[i])
            self.best_ever = self.members[i].copy()

    def reset_ledgers(self):
        self.fitness_sum[:] = 0.0
        self.participations[:] = 0


def assemble(subpops: list[Subpopulation]) -> list[int]:
    """One uniformly random member index per subpopulation, each drawn from
    that subpopulation's own stream."""
    if not subpops:
        raise NetworkConfigError("at least one subpopulation is required")
    return [sp.select() for sp in subpops]


def credit_fitness(subpops, participants, score: float):
    if not math.isfinite(score):
        raise ValueError(f"non-finite fitness {score}")
    for sp, idx in zip(subpops, participants):
        sp.credit(idx, score)


def evolve_generation(sp: Subpopulation, cfg: EvolutionConfig) -> Subpopulation:
    """Elitist truncation + one-point crossover + per-gene Gaussian mutation,
    all within the subpopulation. Skipped (members and ledgers untouched)
    when fewer than two members were evaluated this generation."""
    evaluated = np.nonzero(sp.participations > 0)[0]
    if evaluated.size < 2:
        return sp
    means = sp.fitness_sum[evaluated] / sp.participations[evaluated]
    order = evaluated[np.argsort(-means, kind="stable")]
    n = sp.members.shape[0]
    n_elite = min(max(2, int(cfg.elite_frac * n)), order.size)
    elites = sp.members[order[:n_elite]].copy()
    L = sp.genome_length
    rng = sp.rng
    n_off = n - n_elite
    children = np.empty((n_off, L))
    for c in range(n_off):
        i = int(rng.integers(n_elite))
        j = int(rng.integers(n_elite - 1))
        if j >= i:
            j += 1
        if L > 1:
            k = int(rng.integers(1, L))
            child = np.concatenate([elites[i, :k], elites[j, k:]])
        else:
            child = elites[i].copy()
        mask = rng.random(L) < cfg.p_mut
        noise = rng.normal(0.0, cfg.sigma_mut, L)
        child[mask] += noise[mask]
        children[c] = child
    sp.members = np.vstack([elites, children]) if n_off else elites
    sp.reset_ledgers()
    return sp


def burst(sp: Subpopulation, cfg: EvolutionConfig) -> Subpopulation:
    """Repopulate around the best genome ever: best + Cauchy(scale delta)
    per gene. No-op before any generation has been evaluated."""
    if sp.best_ever is None:
        return sp
    n, L = sp.members.shape
    sp.members = sp.best_ever[None, :] + cfg.delta_burst * sp.rng.standard_cauchy((n, L))
    sp.reset_ledgers()
    return sp


@dataclass
class GenerationStats:
    generation: int
    best_score: float
    run_best: float
    improved: bool
    burst_fired: bool
    recruit_added: bool
    n_subpops: int


class EspEngine:
    """Drives subpopulations of one run: assembly, crediting, evolution,
    bursts and recruitment. Episode evaluation is supplied by the caller.

    ``zero_transfer_out`` clamps the source-to-output transfer weights to
    zero in every assembled network; with it set, a run with a source
    attached is behaviorally identical to the matching scratch run.
    """

    def __init__(self, cfg: EvolutionConfig, substrates, seed: int,
                 source: SourceModule | None = None,
                 pool: SourcePool | None = None,
                 n_fresh: int | None = None,
                 zero_transfer_out: bool = False):
        self.cfg = cfg
        self.substrates = [(int(r), int(c)) for r, c in substrates]
        self.n_inputs = sum(r * c for r, c in self.substrates)
        self.seed = int(seed)
        self.pool = pool
        self.zero_transfer_out = zero_transfer_out
        self.subpops: list[Subpopulation] = []
        self._n_fresh_created = 0
        self._n_source_created = 0
        self.generation = 0
        self.burst_state = BurstState(0, 0, cfg.threshold_b)
        self.run_best = -math.inf
        self.best_network: GrusmNetwork | None = None

        if n_fresh is None:
            n_fresh = cfg.h0 if source is None else 1
        for _ in range(n_fresh):
            self._add_fresh_subpop()
        if source is not None:
            self._add_source_subpop(source)

    # -- construction -----------------------------------------------------

    def _stream(self, kind: str, ordinal: int) -> np.random.Generator:
        code = _KIND_CODE[kind]
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, 2, code, ordinal]))

    def _add_fresh_subpop(self):
        rng = self._stream(KIND_FRESH, self._n_fresh_created)
        self._n_fresh_created += 1
        L = self.n_inputs + 2 + N_OUTPUTS  # in-weights, self, bias, out-weights
        members = rng.uniform(self.cfg.init_lo, self.cfg.init_hi, (self.cfg.n_sub, L))
        self.subpops.append(Subpopulation(KIND_FRESH, members, rng))

    def _add_source_subpop(self, source: SourceModule):
        rng = self._stream(KIND_SOURCE, self._n_source_created)
        self._n_source_created += 1
        layout = make_layout(self.substrates, source)
        members = rng.uniform(self.cfg.init_lo, self.cfg.init_hi,
                              (self.cfg.n_sub, layout.genome_length))
        self.subpops.append(
            Subpopulation(KIND_SOURCE, members, rng, source=source, layout=layout))

    def has_source(self) -> bool:
        return any(sp.kind == KIND_SOURCE for sp in self.subpops)

    def add_recruit(self):
        """New subpopulation: an unused pooled source when none is attached
        yet, otherwise a fresh hidden node."""
        src = None
        if self.pool is not None and not self.has_source():
            src = self.pool.acquire()
        if src is not None:
            self._add_source_subpop(src)
        else:
            self._add_fresh_subpop()

    # -- evaluation -------------------------------------------------------

    def build_network(self, selections: list[int]) -> GrusmNetwork:
        fresh_rows = []
        src_entry = None
        for sp, idx in zip(self.subpops, selections):
            g = sp.members[idx].copy()
            if sp.kind == KIND_FRESH:
                fresh_rows.append(g)
            else:
                src_entry = (sp, g)
        n_in = self.n_inputs
        n_hid = len(fresh_rows)
        w_in = np.empty((n_in, n_hid))
        h_self = np.empty(n_hid)
        h_bias = np.empty(n_hid)
        w_out = np.empty((n_hid, N_OUTPUTS))
        for j, g in enumerate(fresh_rows):
            w_in[:, j] = g[:n_in]
            h_self[j] = g[n_in]
            h_bias[j] = g[n_in + 1]
            w_out[j, :] = g[n_in + 2:]
        target = TargetModule(
            substrates=self.substrates,
            hidden_bias=h_bias,
            hidden_self=h_self,
            out_bias=np.zeros(N_OUTPUTS),
            w_in=w_in,
            w_out=w_out,
        )
        sources = []
        if src_entry is not None:
            sp, g = src_entry
            links = instantiate_transfer(g, sp.layout)
            if self.zero_transfer_out:
                links.out_to_out[:] = 0.0
            sources.append((sp.source, links))
        return GrusmNetwork(target=target, sources=sources)

    def run_generation(self, evaluate) -> GenerationStats:
        """One full generation. ``evaluate(network, generation, assembly)``
        returns the finite score of one candidate."""
        cfg = self.cfg
        gen_best = -math.inf
        gen_best_net = None
        for a in range(cfg.assemblies_per_gen):
            sel = assemble(self.subpops)
            net = self.build_network(sel)
            score = float(evaluate(net, self.generation, a))
            credit_fitness(self.subpops, sel, score)
            if score > gen_best:
                gen_best = score
                gen_best_net = net
        for sp in self.subpops:
            sp.update_best_ever()
        improved = gen_best > self.run_best
        if improved:
            self.run_best = gen_best
            self.best_network = gen_best_net
        burst_now, add_now, self.burst_state = detect_stagnation(
            self.burst_state, improved)
        if burst_now:
            for sp in self.subpops:
                burst(sp, cfg)
        else:
            for sp in self.subpops:
                evolve_generation(sp, cfg)
        if add_now:
            self.add_recruit()
        stats = GenerationStats(
            generation=self.generation,
            best_score=gen_best,
            run_best=self.run_best,
            improved=improved,
            burst_fired=burst_now,
            recruit_added=add_now,
            n_subpops=len(self.subpops),
        )
        self.generation += 1
        return stats
