"""Metrics over recorded curves: success, TE, indicators, regression, DOT."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grusm.analysis import (
    AnalysisError,
    AnalysisRun,
    IndicatorVector,
    LooResult,
    RegressionFit,
    RegressionPair,
    SetupKey,
    analyze_runs,
    correlation_significance,
    fit_ols,
    indicators,
    learning_curves_csv,
    load_features_file,
    loo_predict,
    sample_generations,
    score_range,
    success,
    te_graph,
    training_complexity,
    transfer_effectiveness,
    write_analysis,
)

import reference


def run(game, condition, curve, source=None, max_score=None, features=None):
    return AnalysisRun(
        game=game,
        condition=condition,
        source=source,
        curve=tuple(float(v) for v in curve),
        max_score=float(max_score if max_score is not None else max(curve)),
        features=features,
    )


def ind(sim=1, sc=1, tc=1, st_=1.0, tt=1.0):
    return IndicatorVector(sim, sc, tc, st_, tt)


class TestSampling:
    def test_full_length_series(self):
        assert sample_generations(200) == [1, 10, 50, 100, 200]

    def test_scaled_series_for_short_runs(self):
        assert sample_generations(30) == [1, 2, 8, 15, 30]

    def test_degenerate_length(self):
        assert sample_generations(1) == [1, 1, 1, 1, 1]

    def test_rejects_nonpositive(self):
        with pytest.raises(AnalysisError):
            sample_generations(0)


class TestSuccess:
    def test_constant_curve(self):
        assert success([[100.0] * 200]) == pytest.approx(500.0)

    def test_mean_of_two_runs(self):
        assert success([[100.0] * 200, [200.0] * 200]) == pytest.approx(750.0)

    def test_short_curve_rejected(self):
        with pytest.raises(AnalysisError, match="sampled"):
            success([[1.0] * 200, [1.0] * 199])

    def test_empty_set_rejected(self):
        with pytest.raises(AnalysisError, match="empty"):
            success([])

    def test_scaled_sampling_weights_early_generations(self):
        # 30-generation ramp 1..30 sampled at [1,2,8,15,30]
        curve = list(range(1, 31))
        assert success([curve]) == pytest.approx(1 + 2 + 8 + 15 + 30)


class TestSetupKey:
    def test_transfer_requires_source(self):
        with pytest.raises(AnalysisError):
            SetupKey("h", "transfer")
        with pytest.raises(AnalysisError):
            SetupKey("h", "scratch", source="v")
        SetupKey("h", "transfer", source="v")


class TestTransferEffectiveness:
    def widen(self, game, lo, hi):
        # spectator runs that only widen the game's score range
        return [run(game, "transfer", [lo], source="pad", max_score=lo),
                run(game, "transfer", [hi], source="pad", max_score=hi)]

    def test_identical_curve_sets_give_zero(self):
        runs = [run("g", "transfer", [5.0, 7.0], source="a"),
                run("g", "scratch", [5.0, 7.0])] + self.widen("g", 0, 10)
        te = transfer_effectiveness(SetupKey("g", "transfer", "a"),
                                    SetupKey("g", "scratch"), runs)
        assert te == 0.0

    def test_difference_over_range(self):
        runs = [run("g", "transfer", [20.0], source="a", max_score=20.0),
                run("g", "scratch", [10.0], max_score=10.0)]
        runs += self.widen("g", 0.0, 200.0)
        te = transfer_effectiveness(SetupKey("g", "transfer", "a"),
                                    SetupKey("g", "scratch"), runs)
        # successes 100 vs 50, range 200
        assert te == pytest.approx(0.25)

    def test_denominator_from_three_run_fixture(self):
        runs = [run("g", "transfer", [9.0], source="a", max_score=10.0),
                run("g", "scratch", [1.0], max_score=30.0),
                run("g", "random", [0.0], max_score=50.0)]
        assert score_range("g", runs) == (10.0, 50.0)
        te = transfer_effectiveness(SetupKey("g", "transfer", "a"),
                                    SetupKey("g", "scratch"), runs)
        # successes 45 vs 5, denominator 40
        assert te == pytest.approx(1.0)

    def test_zero_range_is_degenerate(self):
        runs = [run("g", "transfer", [5.0], source="a", max_score=5.0),
                run("g", "scratch", [5.0], max_score=5.0)]
        with pytest.raises(AnalysisError, match="degenerate"):
            transfer_effectiveness(SetupKey("g", "transfer", "a"),
                                   SetupKey("g", "scratch"), runs)

    def test_targets_must_match(self):
        with pytest.raises(AnalysisError, match="target"):
            transfer_effectiveness(SetupKey("g", "transfer", "a"),
                                   SetupKey("h", "scratch"), [])

    def test_missing_setup_runs(self):
        runs = [run("g", "scratch", [1.0]), run("g", "random", [2.0])]
        with pytest.raises(AnalysisError, match="no runs"):
            transfer_effectiveness(SetupKey("g", "transfer", "a"),
                                   SetupKey("g", "scratch"), runs)

    @given(st.lists(st.floats(0, 50), min_size=1, max_size=6),
           st.lists(st.floats(0, 50), min_size=1, max_size=6))
    @settings(max_examples=30, deadline=None)
    def test_antisymmetric_under_swap(self, a_vals, b_vals):
        runs = ([run("g", "scratch", [v]) for v in a_vals]
                + [run("g", "random", [v]) for v in b_vals]
                + self.widen("g", -1.0, 60.0))
        a, b = SetupKey("g", "scratch"), SetupKey("g", "random")
        te_ab = transfer_effectiveness(a, b, runs)
        te_ba = transfer_effectiveness(b, a, runs)
        assert te_ab == -te_ba

    @given(st.floats(0.1, 100.0), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_scale_equivariance(self, c, seed):
        rng = np.random.default_rng(seed)
        base = [run("g", "scratch", np.sort(rng.uniform(0, 10, 4))),
                run("g", "random", np.sort(rng.uniform(0, 10, 4))),
                run("g", "transfer", np.sort(rng.uniform(0, 10, 4)), source="a"),
                run("g", "transfer", [20.0], source="pad", max_score=20.0)]
        scaled = [run(r.game, r.condition, [v * c for v in r.curve],
                      source=r.source, max_score=r.max_score * c)
                  for r in base]
        setup, control = SetupKey("g", "transfer", "a"), SetupKey("g", "scratch")
        te1 = transfer_effectiveness(setup, control, base)
        te2 = transfer_effectiveness(setup, control, scaled)
        assert te2 == pytest.approx(te1, rel=1e-9, abs=1e-12)


class TestIndicators:
    FEATS = {"s": (1, 1, 0, 0, 0), "t": (1, 0, 1, 0, 0)}

    def scratch_runs(self):
        return [run("s", "scratch", [0.0, 5.0]), run("t", "scratch", [3.0])]

    def test_popcounts_and_similarity(self):
        iv = indicators("s", "t", self.FEATS, self.scratch_runs())
        assert iv.feature_similarity == 1
        assert iv.source_feature_complexity == 2
        assert iv.target_feature_complexity == 2

    def test_identical_games_similarity_equals_complexity(self):
        feats = {"s": (1, 1, 0, 1, 0)}
        runs = [run("s", "scratch", [1.0])]
        iv = indicators("s", "s", feats, runs)
        assert iv.feature_similarity == iv.source_feature_complexity == 3

    def test_training_complexity_fixture(self):
        # max scores {10, 20, 30} -> threshold 10; crossings at gens {3, 1, 2}
        runs = [run("g", "scratch", [1.0, 5.0, 10.0]),
                run("g", "scratch", [20.0, 20.0, 20.0]),
                run("g", "scratch", [9.0, 15.0, 30.0])]
        assert training_complexity("g", runs) == pytest.approx(2.0)

    def test_missing_scratch_runs(self):
        with pytest.raises(AnalysisError, match="scratch"):
            training_complexity("g", [run("g", "random", [1.0])])

    def test_missing_feature_vector(self):
        with pytest.raises(AnalysisError, match="feature"):
            indicators("s", "x", self.FEATS, self.scratch_runs())

    def test_indicator_bounds_validated(self):
        with pytest.raises(AnalysisError):
            IndicatorVector(6, 0, 0, 1.0, 1.0)
        with pytest.raises(AnalysisError):
            IndicatorVector(1, 0, 0, -1.0, 1.0)


def random_pairs(rng, n, n_targets, coef=None):
    targets = [f"t{i}" for i in range(n_targets)]
    pairs = []
    for i in range(n):
        iv = IndicatorVector(
            int(rng.integers(0, 6)), int(rng.integers(0, 6)),
            int(rng.integers(0, 6)), float(rng.uniform(0, 30)),
            float(rng.uniform(0, 30)))
        row = [1.0] + iv.as_row()
        if coef is not None:
            te = float(np.dot(row, coef))
        else:
            te = float(rng.normal())
        pairs.append(RegressionPair(f"s{i}", targets[i % n_targets], iv, te))
    return pairs


class TestLooRegression:
    def test_recovers_exact_linear_model(self):
        rng = np.random.default_rng(3)
        coef = np.array([0.2, -0.1, 0.05, 0.3, -0.02, 0.01])
        pairs = random_pairs(rng, 14, 5, coef=coef)
        res = loo_predict(pairs)
        actual = [p.te for p in pairs]
        np.testing.assert_allclose(res.predictions, actual, atol=1e-9)
        assert res.r == pytest.approx(1.0, abs=1e-12)
        assert res.p < 1e-30

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(11)
        pairs = random_pairs(rng, 10, 4)
        res = loo_predict(pairs)
        for i, pair in enumerate(pairs):
            fold = [p for p in pairs if p.target != pair.target]
            X = [p.indicators.as_row() for p in fold]
            y = [p.te for p in fold]
            beta = reference.ols_fit(X, y)
            expect = float(np.dot([1.0] + pair.indicators.as_row(), beta))
            assert res.predictions[i] == pytest.approx(expect, abs=1e-8)

    def test_constant_te_flagged(self):
        rng = np.random.default_rng(5)
        pairs = [RegressionPair(p.source, p.target, p.indicators, 0.7)
                 for p in random_pairs(rng, 9, 3)]
        res = loo_predict(pairs)
        assert res.degenerate
        assert math.isnan(res.r) and math.isnan(res.p)

    def test_too_few_pairs(self):
        rng = np.random.default_rng(0)
        with pytest.raises(AnalysisError, match="8 pairs"):
            loo_predict(random_pairs(rng, 7, 3))

    def test_single_target_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(AnalysisError, match="target"):
            loo_predict(random_pairs(rng, 9, 1))

    def test_singular_design_warns_and_stays_finite(self):
        iv = ind()
        pairs = [RegressionPair(f"s{i}", f"t{i % 3}", iv, float(i))
                 for i in range(9)]
        with pytest.warns(RuntimeWarning, match="singular"):
            res = loo_predict(pairs)
        assert all(math.isfinite(v) for v in res.predictions)

    def test_fold_independence(self):
        rng = np.random.default_rng(21)
        pairs = random_pairs(rng, 12, 4)
        res = loo_predict(pairs)
        i = 5
        tainted = [
            RegressionPair(p.source, p.target, p.indicators,
                           p.te + 100.0 if p.target == pairs[i].target else p.te)
            for p in pairs]
        res2 = loo_predict(tainted)
        assert res2.predictions[i] == pytest.approx(res.predictions[i], abs=1e-9)

    def test_fit_requires_six_finite_coefficients(self):
        with pytest.raises(AnalysisError):
            RegressionFit(coefficients=(1.0,) * 5, n_pairs=8)
        with pytest.raises(AnalysisError):
            RegressionFit(coefficients=(1.0,) * 5 + (math.inf,), n_pairs=8)

    def test_significance_matches_scipy_pearsonr(self):
        from scipy import stats as sps
        rng = np.random.default_rng(8)
        x = rng.normal(size=25)
        y = 0.4 * x + rng.normal(size=25)
        r, p_ref = sps.pearsonr(x, y)
        assert correlation_significance(float(r), 25) == pytest.approx(
            float(p_ref), rel=1e-9)

    def test_perfect_correlation_p_zero(self):
        assert correlation_significance(1.0, 10) == 0.0


class TestTeGraph:
    def test_edgeless_when_nothing_positive(self):
        dot = te_graph({("a", "b"): 0.0, ("b", "a"): -0.5})
        assert "->" not in dot
        assert '"a";' in dot and '"b";' in dot

    def test_single_positive_edge_with_label(self):
        dot = te_graph({("a", "b"): 0.1})
        assert '"a" -> "b" [label="0.100"];' in dot

    def test_zero_is_strictly_excluded(self):
        assert "->" not in te_graph({("a", "b"): 0.0})

    def test_rounding_to_three_decimals(self):
        dot = te_graph({("a", "b"): 0.123456})
        assert 'label="0.123"' in dot

    def test_extra_games_become_isolated_nodes(self):
        dot = te_graph({}, games=["x", "y"])
        assert '"x";' in dot and '"y";' in dot

    def test_deterministic_output(self):
        tes = {("b", "a"): 0.2, ("a", "b"): 0.1, ("c", "a"): 0.05}
        assert te_graph(tes) == te_graph(dict(reversed(list(tes.items()))))


def corpus(seed=0):
    """Two games, full condition set, curves with usable variation."""
    rng = np.random.default_rng(seed)
    runs = []
    for game, features in (("h", (1, 0, 0, 0, 0)), ("v", (0, 1, 0, 0, 0))):
        other = "v" if game == "h" else "h"
        for cond, src in (("scratch", None), ("random", None),
                          ("transfer", other)):
            for _ in range(2):
                curve = np.maximum.accumulate(rng.uniform(0, 10, 6))
                runs.append(run(game, cond, curve, source=src,
                                features=features))
    return runs


class TestPipeline:
    def test_report_structure(self):
        report = analyze_runs(corpus())
        assert set(report["games"]) == {"h", "v"}
        g = report["games"]["h"]
        assert set(g["success"]) == {"scratch", "random", "transfer:v"}
        assert g["max_score_range"][0] <= g["max_score_range"][1]
        assert len(report["pairs"]) == 2
        for pair in report["pairs"]:
            assert pair["te_scratch"] is not None
            assert pair["te_random"] is not None
        assert set(report["te_scratch_edges"]) <= {"h->v", "v->h"}
        # only 2 pairs: regression skipped with the reason recorded
        assert "skipped" in report["regression"]["scratch"]

    def test_empty_corpus_rejected(self):
        with pytest.raises(AnalysisError, match="no run records found"):
            analyze_runs([])

    def test_te_values_match_direct_computation(self):
        runs = corpus()
        report = analyze_runs(runs)
        expect = transfer_effectiveness(SetupKey("v", "transfer", "h"),
                                        SetupKey("v", "scratch"), runs)
        assert report["te_scratch_edges"]["h->v"] == pytest.approx(expect)

    def test_learning_curves_long_format(self):
        runs = [run("g", "scratch", [1.0, 3.0]),
                run("g", "scratch", [3.0, 5.0])]
        lines = learning_curves_csv(runs).splitlines()
        assert lines[0] == "game,condition,source,generation,mean,stderr"
        first = lines[1].split(",")
        assert first[:4] == ["g", "scratch", "", "1"]
        assert float(first[4]) == 2.0
        assert float(first[5]) == pytest.approx(1.0)

    def test_learning_curves_groups_by_source(self):
        runs = [run("g", "transfer", [1.0], source="a"),
                run("g", "transfer", [2.0], source="b")]
        body = learning_curves_csv(runs).splitlines()[1:]
        assert len(body) == 2
        assert body[0].startswith("g,transfer,a,")
        assert body[1].startswith("g,transfer,b,")

    def test_features_file_accepts_letters_and_bits(self, tmp_path):
        p = tmp_path / "features.json"
        p.write_text(json.dumps({"g1": "hv", "g2": [True, False, False, False, True]}))
        feats = load_features_file(p)
        assert feats["g1"] == (True, True, False, False, False)
        assert feats["g2"] == (True, False, False, False, True)
        p.write_text(json.dumps({"bad": [True]}))
        with pytest.raises(AnalysisError, match="5 entries"):
            load_features_file(p)

    def test_features_file_table_format_with_nulls(self, tmp_path):
        p = tmp_path / "table.json"
        p.write_text(json.dumps({
            "note": "whatever",
            "features": ["a", "b", "c", "d", "e"],
            "games": {"g": [True, None, False, False, False]},
        }))
        with pytest.raises(AnalysisError, match="unconfirmed"):
            load_features_file(p)
        p.write_text(json.dumps({
            "games": {"g": [True, True, False, False, False]}}))
        assert load_features_file(p) == {"g": (True, True, False, False, False)}

    def test_shipped_atari_table_is_guarded(self):
        import pathlib
        table = (pathlib.Path(__file__).resolve().parent.parent
                 / "data" / "atari_features.json")
        with pytest.raises(AnalysisError, match="unconfirmed"):
            load_features_file(table)


class TestWriteAnalysis:
    def test_emits_all_artifacts(self, tmp_path):
        from grusm.harness import run_batch
        manifest = {
            "games": ["h", "hs"],
            "conditions": ["scratch", "transfer", "random"],
            "seeds": [0],
            "generations": 2,
            "evolution": {"assemblies_per_gen": 5, "trials_per_eval": 1},
        }
        run_batch(manifest, tmp_path / "runs", log=lambda *a: None)
        report = write_analysis(tmp_path / "runs", tmp_path / "out" / "report.json")
        out = tmp_path / "out"
        assert (out / "report.json").exists()
        assert (out / "te_scratch.dot").exists()
        assert (out / "te_random.dot").exists()
        assert (out / "learning_curves.csv").exists()
        on_disk = json.loads((out / "report.json").read_text())
        assert on_disk == report
        dot = (out / "te_scratch.dot").read_text()
        assert dot.startswith("digraph te {")
        assert '"h";' in dot and '"hs";' in dot

    def test_empty_dir_raises(self, tmp_path):
        (tmp_path / "r").mkdir()
        with pytest.raises(AnalysisError, match="no run records found"):
            write_analysis(tmp_path / "r", tmp_path / "report.json")

    def test_from_record_extracts_game_and_features(self, tmp_path):
        from grusm.envs import parse_env_spec
        from grusm.esp import EvolutionConfig
        from grusm.harness import RunConfig, run_experiment
        cfg = RunConfig(
            env_spec=parse_env_spec("miniarcade:hv"),
            condition="scratch",
            generations=1,
            seed=0,
            evolution=EvolutionConfig(assemblies_per_gen=3, trials_per_eval=1),
        )
        ar = AnalysisRun.from_record(run_experiment(cfg))
        assert ar.game == "hv"
        assert ar.condition == "scratch"
        assert ar.source is None
        assert ar.features == (True, True, False, False, False)
        assert ar.max_score == ar.curve[-1]
