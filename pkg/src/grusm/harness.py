"""Experiment orchestration: run configurations, the scratch / transfer /
random conditions, trial-averaged evaluation, score curves, persistence,
and batch matrices.

A run is bit-reproducible from (config, seed): every random stream is keyed
off the run seed with a fixed purpose tag, and anything nondeterministic
(wall-clock) lives in a sidecar file, never in the run record itself.

Seed-stream registry (SeedSequence entropy lists):
    [seed, 1, gen, assembly, trial, attempt]      episode seed
    [seed, 1, gen, assembly, trial, 10+attempt]   action-noise stream
    [seed, 2, kind, ordinal]                      subpopulation streams
    [seed, 3, feature_mask]                       random-source generation
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvSpec, EpsilonRepeat, make_env, parse_env_spec
from .esp import EspEngine, EvolutionConfig
from .fileio import atomic_write_bytes, atomic_write_json, atomic_write_text
from .nets import (
    GrusmNetwork,
    NetworkRunner,
    SourceModule,
    decode_action,
    deserialize,
    load_network,
    make_source,
    network_doc,
    serialize,
)
from .transfer import ScratchStats, make_random_source

CONDITIONS = ("scratch", "transfer", "random")


class HarnessError(RuntimeError):
    pass


@dataclass
class RunConfig:
    env_spec: EnvSpec
    condition: str = "scratch"
    generations: int = 200
    seed: int = 0
    epsilon: float = 0.25
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    source_path: str | None = None
    source_label: str = ""
    random_stats: list | None = None

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise HarnessError(f"unknown condition {self.condition!r}")
        if self.generations <= 0:
            raise HarnessError("generations must be positive")
        if self.evolution.assemblies_per_gen <= 0 or self.evolution.trials_per_eval <= 0:
            raise HarnessError("assemblies and trials must be positive")
        if self.condition == "transfer" and not self.source_path:
            raise HarnessError("transfer condition requires --source")
        if self.condition == "random" and not self.random_stats:
            raise HarnessError(
                "random condition requires scratch parameter-count stats "
                "(run scratch first or pass --scratch-stats)")

    def to_doc(self) -> dict:
        ev = self.evolution
        return {
            "env": self.env_spec.to_doc(),
            "condition": self.condition,
            "generations": self.generations,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "evolution": {
                "n_sub": ev.n_sub,
                "assemblies_per_gen": ev.assemblies_per_gen,
                "trials_per_eval": ev.trials_per_eval,
                "p_mut": ev.p_mut,
                "sigma_mut": ev.sigma_mut,
                "delta_burst": ev.delta_burst,
                "threshold_b": ev.threshold_b,
                "h0": ev.h0,
                "elite_frac": ev.elite_frac,
                "init_lo": ev.init_lo,
                "init_hi": ev.init_hi,
            },
            "source_path": self.source_path,
            "source_label": self.source_label,
            "random_stats": self.random_stats,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "RunConfig":
        return cls(
            env_spec=EnvSpec.from_doc(doc["env"]),
            condition=doc["condition"],
            generations=int(doc["generations"]),
            seed=int(doc["seed"]),
            epsilon=float(doc["epsilon"]),
            evolution=EvolutionConfig(**doc["evolution"]),
            source_path=doc.get("source_path"),
            source_label=doc.get("source_label", ""),
            random_stats=doc.get("random_stats"),
        )


@dataclass
class ScoreCurve:
    """Best score achieved by any evaluation up to each generation."""

    values: list

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise HarnessError("score curve must be non-decreasing")

    def __len__(self):
        return len(self.values)

    def value_at(self, generation: int) -> float:
        """Curve value at a 1-based generation index."""
        if not 1 <= generation <= len(self.values):
            raise HarnessError(
                f"generation {generation} outside curve of length {len(self.values)}")
        return self.values[generation - 1]


@dataclass
class RunRecord:
    config: RunConfig
    curve: ScoreCurve
    max_score: float
    best_net: GrusmNetwork
    population: dict
    wall_seconds: float | None = None

    def generations_to(self, threshold: float):
        """First 1-based generation whose curve value reaches ``threshold``,
        or None if the run never got there."""
        for i, v in enumerate(self.curve.values):
            if v >= threshold:
                return i + 1
        return None

    def to_doc(self) -> dict:
        return {
            "format": 1,
            "config": self.config.to_doc(),
            "curve": self.curve.values,
            "max_score": self.max_score,
            "best_net": network_doc(self.best_net),
            "population": self.population,
        }


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _seed_int(entropy: list) -> int:
    words = np.random.SeedSequence(entropy).generate_state(2)
    return int(words[0]) << 32 | int(words[1])


def evaluate_individual(net: GrusmNetwork, env, trials: int, run_seed: int,
                        generation: int, assembly: int, epsilon: float) -> float:
    """Mean score over ``trials`` independently seeded episodes, each from a
    fresh recurrent state. A failing episode is retried once on a fresh
    derived seed; a second failure is fatal."""
    if trials < 1:
        raise HarnessError("trials must be >= 1")
    runner = NetworkRunner(net)
    total = 0.0
    for t in range(trials):
        last_error = None
        for attempt in (0, 1):
            key = [run_seed, 1, generation, assembly, t, attempt]
            noise_rng = np.random.default_rng(
                np.random.SeedSequence([run_seed, 1, generation, assembly, t,
                                        10 + attempt]))
            wrapped = EpsilonRepeat(env, epsilon, noise_rng)
            try:
                obs = wrapped.reset(_seed_int(key))
                runner.reset()
                score = 0.0
                terminal = False
                flat = obs.flat()
                while not terminal:
                    action = decode_action(runner.step(flat))
                    obs, reward, terminal = wrapped.step(action)
                    flat = obs.flat()
                    score += reward
                total += score
                last_error = None
                break
            except (KeyboardInterrupt, SystemExit):
                raise
            except Exception as exc:  # noqa: BLE001 - env failures are opaque
                last_error = exc
        if last_error is not None:
            raise HarnessError(
                f"environment failed twice at generation {generation}, "
                f"assembly {assembly}, trial {t}: {last_error}") from last_error
    return total / trials


def load_source_file(path, label: str = "") -> SourceModule:
    net = load_network(path)
    if net.sources:
        raise HarnessError(
            f"{path}: network already carries a source; nested sources are "
            "not supported as transfer material")
    return make_source(net.target, label=label)


def _random_source_for(config: RunConfig) -> SourceModule:
    mask = sum(bit << i for i, bit in enumerate(config.env_spec.features.as_bits()))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3, mask]))
    stats = ScratchStats(param_counts=list(config.random_stats))
    return make_random_source(stats, config.env_spec.substrates, rng,
                              init_lo=config.evolution.init_lo,
                              init_hi=config.evolution.init_hi)


def _population_doc(engine: EspEngine) -> dict:
    subpops = []
    for sp in engine.subpops:
        doc = {
            "kind": sp.kind,
            "genome_length": sp.genome_length,
            "members": [[float(x) for x in row] for row in sp.members],
            "best_ever": ([float(x) for x in sp.best_ever]
                          if sp.best_ever is not None else None),
            "best_ever_fitness": (sp.best_ever_fitness
                                  if math.isfinite(sp.best_ever_fitness) else None),
        }
        if sp.source is not None:
            doc["source_label"] = sp.source.label
            doc["source_digest"] = sp.source.digest
        subpops.append(doc)
    return {"subpopulations": subpops}


def run_experiment(config: RunConfig, progress=None) -> RunRecord:
    """Execute one full evolutionary run and return its record."""
    spec = config.env_spec
    source = None
    if config.condition == "transfer":
        source = load_source_file(config.source_path, label=config.source_label)
    elif config.condition == "random":
        source = _random_source_for(config)
    env = make_env(spec)
    engine = EspEngine(config.evolution, spec.substrates, config.seed,
                       source=source)
    trials = config.evolution.trials_per_eval

    def eval_fn(net, generation, assembly):
        return evaluate_individual(net, env, trials, config.seed, generation,
                                   assembly, config.epsilon)

    t0 = time.monotonic()
    curve = []
    try:
        for gen in range(config.generations):
            stats = engine.run_generation(eval_fn)
            curve.append(stats.run_best)
            if progress:
                progress(stats)
    finally:
        close = getattr(env, "close", None)
        if close:
            close()
    wall = time.monotonic() - t0
    if engine.best_network is None:
        raise HarnessError("run produced no evaluated network")
    return RunRecord(
        config=config,
        curve=ScoreCurve(curve),
        max_score=curve[-1],
        best_net=engine.best_network,
        population=_population_doc(engine),
        wall_seconds=wall,
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def curve_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["generation", "best_score"])
    for i, v in enumerate(record.curve.values):
        writer.writerow([i + 1, repr(v)])
    return buf.getvalue()


def save_run(record: RunRecord, out_dir):
    """Write run.json, curve.csv, best_net.json and the meta.json sidecar.

    The source path is stored relative to the run directory so the record's
    bytes do not depend on where the output tree lives.
    """
    os.makedirs(out_dir, exist_ok=True)
    doc = record.to_doc()
    if doc["config"].get("source_path"):
        doc["config"]["source_path"] = os.path.relpath(
            doc["config"]["source_path"], out_dir)
    atomic_write_bytes(os.path.join(out_dir, "run.json"),
                       (json.dumps(doc, indent=2) + "\n").encode())
    atomic_write_text(os.path.join(out_dir, "curve.csv"), curve_csv(record))
    atomic_write_bytes(os.path.join(out_dir, "best_net.json"),
                       serialize(record.best_net))
    atomic_write_json(os.path.join(out_dir, "meta.json"),
                      {"wall_seconds": record.wall_seconds})


def load_run(run_dir) -> RunRecord:
    with open(os.path.join(run_dir, "run.json")) as f:
        doc = json.load(f)
    if doc.get("format") != 1:
        raise HarnessError(f"{run_dir}: unsupported run record format")
    wall = None
    meta_path = os.path.join(run_dir, "meta.json")
    if os.path.exists(meta_path):
        with open(meta_path) as f:
            wall = json.load(f).get("wall_seconds")
    config = RunConfig.from_doc(doc["config"])
    if config.source_path and not os.path.isabs(config.source_path):
        config.source_path = os.path.normpath(
            os.path.join(run_dir, config.source_path))
    return RunRecord(
        config=config,
        curve=ScoreCurve(doc["curve"]),
        max_score=float(doc["max_score"]),
        best_net=deserialize(json.dumps(doc["best_net"])),
        population=doc["population"],
        wall_seconds=wall,
    )


def find_runs(root) -> list:
    """All run directories under ``root`` (directories holding run.json)."""
    hits = []
    for dirpath, _dirnames, filenames in os.walk(root):
        if "run.json" in filenames:
            hits.append(dirpath)
    return sorted(hits)


# ---------------------------------------------------------------------------
# Batch matrices
# ---------------------------------------------------------------------------

DEFAULT_BATCH_GAMES = ["h", "v", "hv", "hs", "hvs", "hvd", "hvsl", "hvsdl"]


def _manifest_evolution(doc: dict) -> EvolutionConfig:
    return EvolutionConfig(**doc.get("evolution", {}))


def _manifest_env(doc: dict, letters: str) -> EnvSpec:
    return parse_env_spec(
        f"miniarcade:{letters}",
        rows=int(doc.get("rows", 6)),
        cols=int(doc.get("cols", 8)),
        max_steps=int(doc.get("max_steps", 600)),
    )


def run_dir_name(letters: str, condition: str, source: str | None, seed: int) -> str:
    src = source if source else "none"
    game = letters if letters else "none"
    return f"{game}__{condition}__{src}__s{seed}"


def _execute(config: RunConfig, out_dir, skip_existing: bool, progress=None):
    if skip_existing and os.path.exists(os.path.join(out_dir, "run.json")):
        return out_dir
    record = run_experiment(config, progress=progress)
    save_run(record, out_dir)
    return out_dir


def _batch_worker(config_doc: dict, out_dir, skip_existing: bool):
    _execute(RunConfig.from_doc(config_doc), out_dir, skip_existing)
    return out_dir


def _run_phase(tasks, jobs: int, skip_existing: bool, log):
    """Execute (label, config, out_dir) tasks, possibly in parallel. Runs
    are independent, so the job count never affects their contents."""
    if jobs <= 1 or len(tasks) <= 1:
        for label, config, out_dir in tasks:
            log(f"[batch] {label}")
            _execute(config, out_dir, skip_existing)
        return
    import concurrent.futures as cf
    with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = {
            pool.submit(_batch_worker, config.to_doc(), out_dir, skip_existing):
            label for label, config, out_dir in tasks}
        for fut in cf.as_completed(futures):
            fut.result()
            log(f"[batch] done {futures[fut]}")


def run_batch(manifest: dict, out_root, skip_existing: bool = False,
              jobs: int = 1, log=print) -> list:
    """Run the full experiment matrix described by a manifest.

    Scratch runs execute first; their best networks become the transfer
    sources (one per game, from the highest-scoring scratch run) and their
    parameter counts drive the size-matched random controls. Transfer runs
    cover every ordered source/target pair of distinct games.
    """
    games = list(manifest.get("games", DEFAULT_BATCH_GAMES))
    conditions = list(manifest.get("conditions", CONDITIONS))
    seeds = [int(s) for s in manifest.get("seeds", [0, 1, 2])]
    generations = int(manifest.get("generations", 200))
    epsilon = float(manifest.get("epsilon", 0.25))
    evolution = _manifest_evolution(manifest)
    unknown = set(conditions) - set(CONDITIONS)
    if unknown:
        raise HarnessError(f"unknown conditions in manifest: {sorted(unknown)}")
    if len(set(games)) != len(games):
        raise HarnessError("duplicate games in manifest")

    os.makedirs(out_root, exist_ok=True)
    produced = []

    def make_config(letters, condition, seed, **kw):
        return RunConfig(
            env_spec=_manifest_env(manifest, letters),
            condition=condition,
            generations=generations,
            seed=seed,
            epsilon=epsilon,
            evolution=evolution,
            **kw,
        )

    # phase 1: scratch
    scratch_tasks = []
    if "scratch" in conditions:
        for letters in games:
            for seed in seeds:
                out_dir = os.path.join(
                    out_root, run_dir_name(letters, "scratch", None, seed))
                scratch_tasks.append(
                    (f"scratch {letters or '(none)'} seed {seed}",
                     make_config(letters, "scratch", seed), out_dir))
        _run_phase(scratch_tasks, jobs, skip_existing, log)
        produced += [t[2] for t in scratch_tasks]

    need_scratch = any(c in conditions for c in ("transfer", "random"))
    if need_scratch and "scratch" not in conditions:
        raise HarnessError("transfer/random conditions need scratch runs in "
                           "the same manifest")

    sources: dict = {}
    stats: dict = {}
    if need_scratch:
        for letters in games:
            records = [load_run(os.path.join(
                out_root, run_dir_name(letters, "scratch", None, seed)))
                for seed in seeds]
            best = max(records, key=lambda r: r.max_score)
            src_path = os.path.join(out_root, f"source_{letters or 'none'}.json")
            atomic_write_bytes(src_path, serialize(best.best_net))
            sources[letters] = src_path
            stats[letters] = [r.best_net.target.param_count() for r in records]
            atomic_write_json(
                os.path.join(out_root, f"stats_{letters or 'none'}.json"),
                {"game": letters, "param_counts": stats[letters]})

    # phase 2: random controls and all ordered transfer pairs
    tasks = []
    if "random" in conditions:
        for letters in games:
            for seed in seeds:
                tasks.append(
                    (f"random {letters or '(none)'} seed {seed}",
                     make_config(letters, "random", seed,
                                 random_stats=stats[letters]),
                     os.path.join(out_root,
                                  run_dir_name(letters, "random", None, seed))))
    if "transfer" in conditions:
        for src_letters in games:
            for tgt_letters in games:
                if src_letters == tgt_letters:
                    continue
                for seed in seeds:
                    tasks.append(
                        (f"transfer {src_letters}->{tgt_letters} seed {seed}",
                         make_config(tgt_letters, "transfer", seed,
                                     source_path=sources[src_letters],
                                     source_label=src_letters),
                         os.path.join(
                             out_root,
                             run_dir_name(tgt_letters, "transfer",
                                          src_letters, seed))))
    _run_phase(tasks, jobs, skip_existing, log)
    produced += [t[2] for t in tasks]
    return produced
