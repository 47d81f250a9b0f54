"""Command-line front end.

Exit codes: 0 success, 1 usage error (bad flags, unknown subcommand),
2 runtime failure (missing files, protocol violations, degenerate data).
Every output file is written atomically, and every subcommand is
deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import difflib
import json
import os
import re
import shlex
import sys

import numpy as np

from .analysis import AnalysisError, te_graph, write_analysis
from .envs import (
    EnvConfigError,
    EnvProtocolError,
    EnvUsageError,
    make_env,
    parse_env_spec,
)
from .envs.baselines import uniform_random_policy
from .envs.external import check_protocol
from .esp import EvolutionConfig
from .harness import (
    HarnessError,
    RunConfig,
    load_run,
    run_batch,
    run_experiment,
    save_run,
)
from .fileio import atomic_write_bytes, atomic_write_text
from .nets import (
    GrusmNetwork,
    NetworkConfigError,
    NetworkFormatError,
    load_network,
    serialize,
)
from .transfer import ScratchStats, make_random_source

_SUBCOMMANDS = ("run", "batch", "analyze", "graph", "env-check",
                "make-random-source", "show")
_RUNTIME_ERRORS = (HarnessError, AnalysisError, EnvConfigError, EnvUsageError,
                   EnvProtocolError, NetworkConfigError, NetworkFormatError,
                   OSError, ValueError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exception (exit code 1)
    and suggests the closest known flag or subcommand."""

    all_options: set = set()

    def error(self, message):
        hint = ""
        m = re.search(r"unrecognized arguments: (\S+)", message)
        if m and m.group(1).startswith("-"):
            close = difflib.get_close_matches(
                m.group(1), sorted(self.all_options), n=1, cutoff=0.5)
            if close:
                hint = f" (did you mean {close[0]}?)"
        m = re.search(r"invalid choice: '([^']+)'", message)
        if m:
            close = difflib.get_close_matches(m.group(1), _SUBCOMMANDS, n=1,
                                              cutoff=0.5)
            if close:
                hint = f" (did you mean {close[0]}?)"
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}{hint}")


def _env_seed_default() -> int:
    raw = os.environ.get("GRUSM_SEED", "0")
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"GRUSM_SEED must be an integer, got {raw!r}") from exc


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _build_run_config(args) -> RunConfig:
    doc = {
        "env": None,
        "condition": "scratch",
        "generations": 200,
        "seed": None,
        "epsilon": 0.25,
        "evolution": {},
        "source": None,
        "source_label": None,
        "scratch_stats": None,
    }
    if args.config:
        with open(args.config) as f:
            doc = _merge(doc, json.load(f))
    flag_values = {
        "env": args.env,
        "condition": args.condition,
        "generations": args.generations,
        "seed": args.seed,
        "epsilon": args.epsilon,
        "source": args.source,
        "source_label": args.source_label,
        "scratch_stats": args.scratch_stats,
    }
    for k, v in flag_values.items():
        if v is not None:
            doc[k] = v
    ev_flags = {"assemblies_per_gen": args.assemblies,
                "trials_per_eval": args.trials}
    for k, v in ev_flags.items():
        if v is not None:
            doc["evolution"][k] = v

    if not doc["env"]:
        raise UsageError("an environment is required (--env or config file)")
    if doc["condition"] != "transfer" and doc["source"]:
        raise UsageError("--source only applies to --condition transfer")
    if doc["seed"] is None:
        doc["seed"] = _env_seed_default()

    random_stats = None
    if doc["condition"] == "random":
        if not doc["scratch_stats"]:
            raise UsageError("--condition random requires --scratch-stats")
        with open(doc["scratch_stats"]) as f:
            stats_doc = json.load(f)
        random_stats = [int(c) for c in stats_doc["param_counts"]]

    source_label = doc["source_label"]
    if source_label is None and doc["source"]:
        source_label = os.path.splitext(os.path.basename(doc["source"]))[0]

    return RunConfig(
        env_spec=parse_env_spec(doc["env"]),
        condition=doc["condition"],
        generations=int(doc["generations"]),
        seed=int(doc["seed"]),
        epsilon=float(doc["epsilon"]),
        evolution=EvolutionConfig(**doc["evolution"]),
        source_path=doc["source"],
        source_label=source_label or "",
        random_stats=random_stats,
    )


def cmd_run(args) -> int:
    config = _build_run_config(args)

    def progress(stats):
        if args.verbose:
            tag = " burst" if stats.burst_fired else ""
            tag += " +recruit" if stats.recruit_added else ""
            print(f"gen {stats.generation + 1}: best {stats.best_score:.3f} "
                  f"run-best {stats.run_best:.3f}{tag}", file=sys.stderr)

    record = run_experiment(config, progress=progress)
    save_run(record, args.out)
    print(f"max_score={record.max_score} generations={len(record.curve)} "
          f"out={args.out}")
    return 0


# ---------------------------------------------------------------------------
# batch
# ---------------------------------------------------------------------------

def cmd_batch(args) -> int:
    with open(args.manifest) as f:
        manifest = json.load(f)
    out = args.out or manifest.get("out_dir")
    if not out:
        raise UsageError("an output directory is required "
                         "(--out or \"out_dir\" in the manifest)")
    dirs = run_batch(manifest, out, skip_existing=args.skip_existing,
                     jobs=args.jobs,
                     log=lambda msg: print(msg, file=sys.stderr))
    print(f"completed {len(dirs)} runs under {out}")
    return 0


# ---------------------------------------------------------------------------
# analyze / graph
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    report = write_analysis(args.runs_dir, args.out,
                            features_path=args.features)
    for control in ("scratch", "random"):
        reg = report["regression"].get(control, {})
        if "skipped" in reg:
            print(f"te vs {control}: {reg['skipped']}")
        elif reg.get("degenerate"):
            print(f"te vs {control}: constant TE, not significant")
        else:
            print(f"te vs {control}: R={reg['r']:.3f} p={reg['p']:.3g} "
                  f"over {reg['n_pairs']} pairs")
    print(f"report written to {args.out}")
    return 0


def cmd_graph(args) -> int:
    with open(args.report) as f:
        report = json.load(f)
    key = f"te_{args.control}_edges"
    if key not in report:
        raise AnalysisError(f"{args.report}: no {key} section")
    edges = {tuple(k.split("->", 1)): v for k, v in report[key].items()}
    dot = te_graph(edges, games=sorted(report.get("games", {})))
    if args.out:
        atomic_write_text(args.out, dot)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(dot)
    return 0


# ---------------------------------------------------------------------------
# env-check
# ---------------------------------------------------------------------------

def _check_builtin(spec_text: str) -> list:
    spec = parse_env_spec(spec_text)
    problems = []
    streams = []
    for _ in range(2):
        env = make_env(spec)
        rng = np.random.default_rng(1234)
        policy = uniform_random_policy(rng)
        obs = env.reset(7)
        trace = [obs.flat().tobytes()]
        for _ in range(100):
            obs, reward, terminal = env.step(policy(obs))
            trace.append((obs.flat().tobytes(), reward, terminal))
            if terminal:
                break
        streams.append(trace)
    if streams[0] != streams[1]:
        problems.append("same seed and actions produced different trajectories")
    return problems


def cmd_env_check(args) -> int:
    if args.external:
        problems = check_protocol(shlex.split(args.external))
        label = args.external
    elif args.spec:
        if args.spec.startswith("external:"):
            problems = check_protocol(parse_env_spec(args.spec).command)
        else:
            problems = _check_builtin(args.spec)
        label = args.spec
    else:
        raise UsageError("give an env spec or --external <command>")
    if problems:
        for p in problems:
            print(f"problem: {p}", file=sys.stderr)
        raise EnvProtocolError(f"{label}: {len(problems)} problem(s) found")
    print(f"{label}: ok")
    return 0


# ---------------------------------------------------------------------------
# make-random-source
# ---------------------------------------------------------------------------

def cmd_make_random_source(args) -> int:
    spec = parse_env_spec(args.env)
    with open(args.scratch_stats) as f:
        stats_doc = json.load(f)
    stats = ScratchStats(param_counts=[int(c) for c in stats_doc["param_counts"]])
    seed = args.seed if args.seed is not None else _env_seed_default()
    mask = sum(bit << i for i, bit in enumerate(spec.features.as_bits()))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3, mask]))
    src = make_random_source(stats, spec.substrates, rng)
    atomic_write_bytes(args.out, serialize(GrusmNetwork(target=src.net)))
    print(f"wrote {args.out}: {src.net.n_hidden} hidden units, "
          f"{src.net.param_count()} parameters, digest {src.digest[:12]}")
    return 0


# ---------------------------------------------------------------------------
# show
# ---------------------------------------------------------------------------

def _show_network(net: GrusmNetwork):
    t = net.target
    subs = " + ".join(f"{r}x{c}" for r, c in t.substrates)
    print(f"network: inputs {t.n_inputs} ({subs}), hidden {t.n_hidden}, "
          f"outputs {t.n_outputs}, {t.param_count()} parameters")
    if net.source is not None:
        s = net.source
        print(f"source: label {s.label!r}, {s.net.n_hidden} hidden, "
              f"digest {s.digest[:12]}")
    else:
        print("source: none")


def cmd_show(args) -> int:
    path = args.path
    if os.path.isdir(path):
        path = os.path.join(path, "run.json")
    with open(path) as f:
        doc = json.load(f)
    if "curve" in doc and "config" in doc:
        record = load_run(os.path.dirname(os.path.abspath(path)))
        cfg = record.config
        print(f"run: {cfg.env_spec.name} condition={cfg.condition}"
              + (f" source={cfg.source_label}" if cfg.source_label else ""))
        print(f"seed {cfg.seed}, {len(record.curve)} generations, "
              f"epsilon {cfg.epsilon}")
        vals = record.curve.values
        head = ", ".join(f"{v:.2f}" for v in vals[:5])
        print(f"curve: [{head}{', ...' if len(vals) > 5 else ''}] "
              f"max {record.max_score}")
        if record.wall_seconds is not None:
            print(f"wall clock: {record.wall_seconds:.1f}s")
        _show_network(record.best_net)
    elif "target" in doc:
        with open(path, "rb") as f:
            from .nets import deserialize
            _show_network(deserialize(f.read()))
    else:
        raise HarnessError(f"{path}: neither a run record nor a network file")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="grusm", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("run", help="one evolutionary run")
    p.add_argument("--env", help="env spec, e.g. miniarcade:hvs")
    p.add_argument("--condition", choices=["scratch", "transfer", "random"])
    p.add_argument("--source", help="network file reused as frozen source")
    p.add_argument("--source-label", dest="source_label")
    p.add_argument("--scratch-stats", dest="scratch_stats",
                   help="stats JSON for the size-matched random source")
    p.add_argument("--generations", type=int)
    p.add_argument("--assemblies", type=int,
                   help="candidate networks per generation")
    p.add_argument("--trials", type=int, help="episodes averaged per evaluation")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file of config overrides")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run an experiment matrix")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--skip-existing", action="store_true")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("analyze", help="metrics over recorded runs")
    p.add_argument("runs_dir")
    p.add_argument("--features", help="JSON map game -> 5 feature booleans")
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("graph", help="DOT graph from a report")
    p.add_argument("report")
    p.add_argument("--control", choices=["scratch", "random"],
                   default="scratch")
    p.add_argument("--out")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("env-check",
                       help="validate an environment's protocol and determinism")
    p.add_argument("spec", nargs="?")
    p.add_argument("--external", help="command line of an external env process")
    p.set_defaults(func=cmd_env_check)

    p = sub.add_parser("make-random-source",
                       help="random network sized like recorded scratch results")
    p.add_argument("--env", required=True)
    p.add_argument("--scratch-stats", dest="scratch_stats", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_random_source)

    p = sub.add_parser("show", help="pretty-print a network or run record")
    p.add_argument("path")
    p.set_defaults(func=cmd_show)

    options = set()
    for sp in sub.choices.values():
        for action in sp._actions:
            options.update(action.option_strings)
    _Parser.all_options = options
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_usage()
                             + "grusm: error: a subcommand is required")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else 1
    except _RUNTIME_ERRORS as exc:
        print(f"grusm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
