"""Transfer-effectiveness analysis over persisted run records.

Everything here is a pure function of recorded curves and scores; no
environment is ever touched. The headline metric compares a transfer setup
against a control condition on the same target game, normalized by the
spread of scores observed on that game, and a leave-one-out regression
checks how well five cheap indicators predict it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .envs import GameFeatures
from .fileio import atomic_write_json, atomic_write_text
from .harness import RunRecord, find_runs, load_run

# Generation sample points for 200-generation runs; shorter runs scale the
# series proportionally (ceil), preserving the early-heavy weighting.
BASE_SAMPLES = (1, 10, 50, 100, 200)
BASE_LENGTH = 200

SIGNIFICANCE_ALPHA = 0.05


class AnalysisError(RuntimeError):
    pass


@dataclass(frozen=True)
class SetupKey:
    """One experimental cell: a target game under one condition."""

    target: str
    condition: str
    source: str | None = None

    def __post_init__(self):
        if (self.source is not None) != (self.condition == "transfer"):
            raise AnalysisError(
                "source must be given exactly for the transfer condition")


@dataclass(frozen=True)
class IndicatorVector:
    feature_similarity: int
    source_feature_complexity: int
    target_feature_complexity: int
    source_training_complexity: float
    target_training_complexity: float

    def __post_init__(self):
        for name in ("feature_similarity", "source_feature_complexity",
                     "target_feature_complexity"):
            v = getattr(self, name)
            if not 0 <= v <= 5:
                raise AnalysisError(f"{name} {v} outside [0, 5]")
        if self.source_training_complexity < 0 or self.target_training_complexity < 0:
            raise AnalysisError("training complexities must be >= 0")

    def as_row(self) -> list:
        return [
            float(self.feature_similarity),
            float(self.source_feature_complexity),
            float(self.target_feature_complexity),
            float(self.source_training_complexity),
            float(self.target_training_complexity),
        ]


@dataclass(frozen=True)
class RegressionFit:
    coefficients: tuple
    n_pairs: int

    def __post_init__(self):
        if len(self.coefficients) != 6:
            raise AnalysisError("expected intercept + 5 indicator coefficients")
        if not all(math.isfinite(c) for c in self.coefficients):
            raise AnalysisError("regression coefficients must be finite")


@dataclass(frozen=True)
class RegressionPair:
    source: str
    target: str
    indicators: IndicatorVector
    te: float


@dataclass
class LooResult:
    predictions: list
    r: float
    p: float
    degenerate: bool = False


@dataclass(frozen=True)
class AnalysisRun:
    """The slice of a run record the metrics need."""

    game: str
    condition: str
    source: str | None
    curve: tuple
    max_score: float
    features: tuple | None = None

    @classmethod
    def from_record(cls, record: RunRecord) -> "AnalysisRun":
        spec = record.config.env_spec
        game = spec.features.letters() if spec.kind == "miniarcade" else spec.name
        source = record.config.source_label or None
        if record.config.condition != "transfer":
            source = None
        return cls(
            game=game,
            condition=record.config.condition,
            source=source,
            curve=tuple(record.curve.values),
            max_score=record.max_score,
            features=spec.features.as_bits(),
        )


# ---------------------------------------------------------------------------
# Success and transfer effectiveness
# ---------------------------------------------------------------------------

def sample_generations(length: int) -> list:
    """The five sampled generations for runs of the given length."""
    if length < 1:
        raise AnalysisError("run length must be >= 1")
    return [math.ceil(s * length / BASE_LENGTH) for s in BASE_SAMPLES]


def success(curves, length: int | None = None) -> float:
    """Sum over the sampled generations of the mean curve value there."""
    values = [list(getattr(c, "values", c)) for c in curves]
    if not values:
        raise AnalysisError("success of an empty curve set is undefined")
    if length is None:
        length = max(len(v) for v in values)
    samples = sample_generations(length)
    need = max(samples)
    for v in values:
        if len(v) < need:
            raise AnalysisError(
                f"curve of length {len(v)} cannot be sampled at generation {need}")
    total = 0.0
    for g in samples:
        total += sum(v[g - 1] for v in values) / len(values)
    return total


def _runs_for(key: SetupKey, runs) -> list:
    hits = [r for r in runs
            if r.game == key.target and r.condition == key.condition
            and (key.condition != "transfer" or r.source == key.source)]
    if not hits:
        raise AnalysisError(f"no runs recorded for {key}")
    return hits


def score_range(game: str, runs) -> tuple:
    maxes = [r.max_score for r in runs if r.game == game]
    if not maxes:
        raise AnalysisError(f"no runs recorded for game {game!r}")
    return min(maxes), max(maxes)


def transfer_effectiveness(setup: SetupKey, control: SetupKey, runs) -> float:
    """Success difference between setup and control on one game, divided by
    the spread of max scores across every run of that game."""
    if setup.target != control.target:
        raise AnalysisError("setup and control must share a target game")
    lo, hi = score_range(setup.target, runs)
    if hi == lo:
        raise AnalysisError(
            f"game {setup.target!r} is degenerate: zero max-score range")
    s = success([r.curve for r in _runs_for(setup, runs)])
    c = success([r.curve for r in _runs_for(control, runs)])
    return (s - c) / (hi - lo)


# ---------------------------------------------------------------------------
# Indicators
# ---------------------------------------------------------------------------

def training_complexity(game: str, runs) -> float:
    """Mean over a game's scratch runs of the first generation whose curve
    reaches the worst scratch run's final score."""
    scratch = [r for r in runs if r.game == game and r.condition == "scratch"]
    if not scratch:
        raise AnalysisError(f"game {game!r} has no scratch runs")
    threshold = min(max(r.curve) for r in scratch)
    gens = []
    for r in scratch:
        for i, v in enumerate(r.curve):
            if v >= threshold:
                gens.append(i + 1)
                break
    return sum(gens) / len(gens)


def indicators(source: str, target: str, features: dict, runs) -> IndicatorVector:
    try:
        fs = features[source]
        ft = features[target]
    except KeyError as exc:
        raise AnalysisError(f"no feature vector for game {exc.args[0]!r}") from exc
    if len(fs) != 5 or len(ft) != 5:
        raise AnalysisError("feature vectors must have 5 entries")
    return IndicatorVector(
        feature_similarity=sum(1 for a, b in zip(fs, ft) if a and b),
        source_feature_complexity=sum(1 for a in fs if a),
        target_feature_complexity=sum(1 for b in ft if b),
        source_training_complexity=training_complexity(source, runs),
        target_training_complexity=training_complexity(target, runs),
    )


# ---------------------------------------------------------------------------
# Leave-one-out regression
# ---------------------------------------------------------------------------

def _design(pairs) -> np.ndarray:
    return np.array([[1.0] + p.indicators.as_row() for p in pairs])


def fit_ols(pairs) -> RegressionFit:
    X = _design(pairs)
    y = np.array([p.te for p in pairs])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        warnings.warn("singular design matrix; using minimum-norm least squares",
                      RuntimeWarning, stacklevel=2)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return RegressionFit(coefficients=tuple(float(c) for c in coef),
                         n_pairs=len(pairs))


def correlation_significance(r: float, n: int) -> float:
    """Two-tailed p-value for a Pearson correlation over n samples."""
    if n < 3:
        raise AnalysisError("need at least 3 samples for a p-value")
    denom = 1.0 - r * r
    if denom <= 0.0:
        return 0.0
    t = r * math.sqrt((n - 2) / denom)
    return float(2.0 * stats.t.sf(abs(t), df=n - 2))


def loo_predict(pairs) -> LooResult:
    """Predict each pair's TE from a model trained on all pairs with a
    different target game, then correlate predictions with the truth."""
    n = len(pairs)
    if n < 8:
        raise AnalysisError(f"need at least 8 pairs, got {n}")
    targets = {p.target for p in pairs}
    if len(targets) < 2:
        raise AnalysisError("need pairs covering at least 2 target games")
    X = _design(pairs)
    y = np.array([p.te for p in pairs])
    preds = np.empty(n)
    for i, pair in enumerate(pairs):
        mask = np.array([q.target != pair.target for q in pairs])
        fit = fit_ols([q for q, keep in zip(pairs, mask) if keep])
        preds[i] = X[i] @ np.array(fit.coefficients)
    if np.ptp(preds) == 0.0 or np.ptp(y) == 0.0:
        return LooResult(predictions=list(preds), r=math.nan, p=math.nan,
                         degenerate=True)
    r = float(np.corrcoef(preds, y)[0, 1])
    return LooResult(predictions=list(preds), r=r,
                     p=correlation_significance(r, n))


# ---------------------------------------------------------------------------
# Graph export
# ---------------------------------------------------------------------------

def te_graph(tes: dict, games=None) -> str:
    """DOT digraph with an edge for every strictly positive TE."""
    nodes = set(games or [])
    for s, t in tes:
        nodes.add(s)
        nodes.add(t)
    lines = ["digraph te {"]
    for g in sorted(nodes):
        lines.append(f'  "{g}";')
    for (s, t), v in sorted(tes.items()):
        if v is not None and v > 0.0:
            lines.append(f'  "{s}" -> "{t}" [label="{v:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def _feature_map(runs, override=None) -> dict:
    feats = {}
    for r in runs:
        if r.features is not None:
            feats[r.game] = tuple(bool(b) for b in r.features)
    for game, bits in (override or {}).items():
        feats[game] = tuple(bool(b) for b in bits)
    return feats


def _setup_label(condition: str, source) -> str:
    return f"transfer:{source}" if condition == "transfer" else condition


def analyze_runs(runs, features_override=None) -> dict:
    """The full report: per-game successes and ranges, per-pair TE values
    and indicators, both leave-one-out regressions."""
    if not runs:
        raise AnalysisError("no run records found")
    features = _feature_map(runs, features_override)
    games = sorted({r.game for r in runs})

    game_docs = {}
    for game in games:
        lo, hi = score_range(game, runs)
        setups = sorted({(_setup_label(r.condition, r.source))
                         for r in runs if r.game == game})
        successes = {}
        for label in setups:
            if label.startswith("transfer:"):
                key = SetupKey(game, "transfer", label.split(":", 1)[1])
            else:
                key = SetupKey(game, label)
            successes[label] = success([r.curve for r in _runs_for(key, runs)])
        game_docs[game] = {
            "n_runs": sum(1 for r in runs if r.game == game),
            "max_score_range": [lo, hi],
            "success": successes,
            "training_threshold": min(
                max(r.curve) for r in runs
                if r.game == game and r.condition == "scratch"
            ) if any(r.game == game and r.condition == "scratch"
                     for r in runs) else None,
            "training_complexity": (
                training_complexity(game, runs)
                if any(r.game == game and r.condition == "scratch" for r in runs)
                else None),
        }

    pair_keys = sorted({(r.source, r.game) for r in runs
                        if r.condition == "transfer" and r.source})
    pair_docs = []
    te_scratch_map = {}
    te_random_map = {}
    reg_pairs = {"scratch": [], "random": []}
    for src, tgt in pair_keys:
        setup = SetupKey(tgt, "transfer", src)
        ind = indicators(src, tgt, features, runs)
        doc = {
            "source": src,
            "target": tgt,
            "indicators": {
                "feature_similarity": ind.feature_similarity,
                "source_feature_complexity": ind.source_feature_complexity,
                "target_feature_complexity": ind.target_feature_complexity,
                "source_training_complexity": ind.source_training_complexity,
                "target_training_complexity": ind.target_training_complexity,
            },
        }
        for control_name, te_map in (("scratch", te_scratch_map),
                                     ("random", te_random_map)):
            if any(r.game == tgt and r.condition == control_name for r in runs):
                te = transfer_effectiveness(
                    setup, SetupKey(tgt, control_name), runs)
                doc[f"te_{control_name}"] = te
                te_map[(src, tgt)] = te
                reg_pairs[control_name].append(
                    RegressionPair(src, tgt, ind, te))
            else:
                doc[f"te_{control_name}"] = None
        pair_docs.append(doc)

    regression = {}
    for control_name, pairs in reg_pairs.items():
        targets = {p.target for p in pairs}
        if len(pairs) >= 8 and len(targets) >= 2:
            fit = fit_ols(pairs)
            loo = loo_predict(pairs)
            regression[control_name] = {
                "n_pairs": len(pairs),
                "coefficients": list(fit.coefficients),
                "predictions": loo.predictions,
                "r": None if loo.degenerate else loo.r,
                "p": None if loo.degenerate else loo.p,
                "significant": (not loo.degenerate
                                and loo.p < SIGNIFICANCE_ALPHA),
                "degenerate": loo.degenerate,
            }
        else:
            regression[control_name] = {
                "n_pairs": len(pairs),
                "skipped": "needs >= 8 pairs over >= 2 target games",
            }

    return {
        "format": 1,
        "games": game_docs,
        "pairs": pair_docs,
        "regression": regression,
        "te_scratch_edges": {f"{s}->{t}": v
                             for (s, t), v in sorted(te_scratch_map.items())},
        "te_random_edges": {f"{s}->{t}": v
                            for (s, t), v in sorted(te_random_map.items())},
    }


def learning_curves_csv(runs) -> str:
    """Long-format per-generation mean and standard error for every
    (game, condition, source) group."""
    groups = {}
    for r in runs:
        groups.setdefault((r.game, r.condition, r.source or ""), []).append(r)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["game", "condition", "source", "generation", "mean", "stderr"])
    for key in sorted(groups):
        members = groups[key]
        length = min(len(m.curve) for m in members)
        for g in range(length):
            vals = np.array([m.curve[g] for m in members])
            mean = float(vals.mean())
            stderr = (float(vals.std(ddof=1) / math.sqrt(len(vals)))
                      if len(vals) > 1 else 0.0)
            writer.writerow([key[0], key[1], key[2], g + 1,
                             repr(mean), repr(stderr)])
    return buf.getvalue()


def load_features_file(path) -> dict:
    """Feature vectors from JSON: either a flat map game -> bits, or a table
    with a "games" section. Bits may be 5 booleans or a feature-letter
    string; unconfirmed (null) entries are rejected."""
    with open(path) as f:
        doc = json.load(f)
    table = doc["games"] if isinstance(doc.get("games"), dict) else doc
    out = {}
    for game, bits in table.items():
        if isinstance(bits, str):
            out[game] = GameFeatures.from_letters(bits).as_bits()
        else:
            if len(bits) != 5:
                raise AnalysisError(
                    f"feature vector for {game!r} must have 5 entries")
            if any(b is None for b in bits):
                raise AnalysisError(
                    f"feature vector for {game!r} has unconfirmed (null) "
                    "entries; complete the table before analyzing")
            out[game] = tuple(bool(b) for b in bits)
    return out


def write_analysis(runs_dir, report_path, features_path=None) -> dict:
    """Load every run record under ``runs_dir`` and write the report JSON
    plus the two DOT graphs and the learning-curve CSV next to it."""
    run_dirs = find_runs(runs_dir)
    if not run_dirs:
        raise AnalysisError("no run records found")
    runs = [AnalysisRun.from_record(load_run(d)) for d in run_dirs]
    override = load_features_file(features_path) if features_path else None
    report = analyze_runs(runs, features_override=override)

    out_dir = os.path.dirname(os.path.abspath(report_path))
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_json(report_path, report)

    def unpack(edges):
        return {tuple(k.split("->", 1)): v for k, v in edges.items()}

    games = sorted({r.game for r in runs})
    atomic_write_text(os.path.join(out_dir, "te_scratch.dot"),
                      te_graph(unpack(report["te_scratch_edges"]), games))
    atomic_write_text(os.path.join(out_dir, "te_random.dot"),
                      te_graph(unpack(report["te_random_edges"]), games))
    atomic_write_text(os.path.join(out_dir, "learning_curves.csv"),
                      learning_curves_csv(runs))
    return report
