import io
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mitl.data import SynthParams, synth_generate
from mitl.exceptions import ConfigInfeasible, LengthMismatch, MissingBaseline, TooShort
from mitl.harness import (
    RESULT_COLUMNS,
    PipelineConfig,
    RunResult,
    cell_seed,
    feature_selection_experiment,
    featsel_configs,
    full_grid,
    paired_ttest,
    pipeline_features,
    prepare,
    read_results,
    run_pipeline,
    sample_labeled,
    summarize,
    sweep,
    write_results,
)


@pytest.fixture(scope="module")
def small_sets():
    return synth_generate(SynthParams(n_subjects=3, n_trials_per_class=15), seed=2)


def result(config, acc, n_l=4, repeat=0, subject="S01"):
    return RunResult("d", subject, config, "none", "csp", "none", "lda", "offline",
                     "cross_subject", n_l, repeat, 0, acc)


# ---------------------------------------------------------------- t-test

def test_ttest_reference_values():
    r = paired_ttest([1, 2, 3], [0, 0, 0])
    assert r.t == pytest.approx(3.4641, abs=1e-4)
    assert r.df == 2
    assert r.p == pytest.approx(0.0742, abs=1e-3)
    assert not r.significant


def test_ttest_degenerate_and_errors():
    r = paired_ttest([0.5, 0.7], [0.5, 0.7])
    assert (r.t, r.p) == (0.0, 1.0)
    with pytest.raises(LengthMismatch):
        paired_ttest([1, 2], [1, 2, 3])
    with pytest.raises(TooShort):
        paired_ttest([1], [2])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=40))
def test_ttest_matches_scipy_and_is_antisymmetric(pairs):
    a, b = map(np.array, zip(*pairs))
    d = a - b
    if np.std(d) < 1e-9:
        return
    r = paired_ttest(a, b)
    ref = stats.ttest_rel(a, b)
    assert r.t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert r.p == pytest.approx(ref.pvalue, abs=1e-8)
    s = paired_ttest(b, a)
    assert s.t == pytest.approx(-r.t) and s.p == pytest.approx(r.p)


# ------------------------------------------------------------- summarize

def test_summarize_improvement_and_exclusions():
    rows = summarize([result("CSP-LDA", 0.6), result("X", 0.66),
                      result("CSP-LDA", 0.1, n_l=0), result("X", 0.9, n_l=0)])
    by = {r.config: r for r in rows}
    assert by["X"].improvement == pytest.approx(10.0)
    assert by["CSP-LDA"].mean == pytest.approx(0.6)
    assert by["CSP-LDA"].improvement == 0.0
    with pytest.raises(MissingBaseline):
        summarize([result("X", 0.5)])


def test_summarize_std_across_nl_means_and_pairing():
    res = []
    for n_l, base in ((4, 0.6), (8, 0.7)):
        for r in range(3):
            res.append(result("CSP-LDA", base + 0.01 * r, n_l, r))
            res.append(result("B", base + 0.05 + 0.02 * r, n_l, r))
    by = {r.config: r for r in summarize(res)}
    assert by["B"].std == pytest.approx(np.std([0.67, 0.77], ddof=1))
    diffs = [0.05 + 0.01 * r for r in range(3)] * 2
    ref = stats.ttest_1samp(diffs, 0.0)
    assert by["B"].ttest.t == pytest.approx(ref.statistic)
    assert by["B"].n == 6


# --------------------------------------------------------------- configs

def test_full_grid_shape():
    grid = full_grid()
    assert len(grid) == 27 and len({c.name for c in grid}) == 27
    assert {"CSP-LDA", "EA-RCSP-wAR", "PS-CCSP-CLDA"} <= {c.name for c in grid}
    online = full_grid("online")
    assert all(c.clf != "war" for c in online)
    assert "EA-RCSP-OwAR" in {c.name for c in online}
    assert all(c.wt == 2.0 for c in full_grid(transfer="cross_session"))


def test_config_round_trips():
    c = PipelineConfig(align="ps", spatial="rcsp", clf="owar", beta=0.3, mode="online")
    assert PipelineConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c
    assert PipelineConfig.from_name("EA-RCSP-wAR") == PipelineConfig(align="ea", spatial="rcsp",
                                                                    clf="war")
    with pytest.raises(ValueError):
        PipelineConfig(mode="online", clf="war")
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"bogus": 1})


def test_featsel_configs_names():
    names = [c.name for c in featsel_configs()]
    assert len(names) == 24
    assert {"CSP-LDA", "CSP20-ReliefF6-LDA", "EA-RCSP20-CReliefF6-wAR"} <= set(names)


# -------------------------------------------------------------- sampling

def test_cell_seed_is_stable_and_distinct():
    assert cell_seed(0, "S01", 4, 0) == cell_seed(0, "S01", 4, 0)
    seeds = {cell_seed(b, s, n, r) for b in (0, 1) for s in ("S01", "S02")
             for n in (4, 8) for r in range(5)}
    assert len(seeds) == 40
    assert 0 <= cell_seed(7, "S09", 20, 29) < 2**63


@given(st.integers(2, 30), st.integers(0, 2**31))
def test_labeled_draw_has_both_classes(n_l, seed):
    y = np.resize([-1, 1], 40)
    idx = sample_labeled(y, n_l, np.random.default_rng(seed))
    assert len(idx) == n_l == len(set(idx))
    assert set(y[idx]) == {-1, 1}


def test_stratified_draw():
    y = np.resize([-1, 1], 40)
    idx = sample_labeled(y, 9, np.random.default_rng(0), stratified=True)
    counts = sorted([np.sum(y[idx] == -1), np.sum(y[idx] == 1)])
    assert counts == [4, 5]


# -------------------------------------------------------------- pipeline

def test_infeasible_cells(small_sets):
    for cfg in (PipelineConfig(), PipelineConfig(spatial="ccsp", clf="lda"),
                PipelineConfig(spatial="ccsp", clf="clda", select="relieff", n_filters=3),
                PipelineConfig(align="ea", spatial="ccsp", clf="owar", mode="online")):
        with pytest.raises(ConfigInfeasible):
            run_pipeline(cfg, small_sets[1:], small_sets[0], 0, 1)
    res = run_pipeline(PipelineConfig(spatial="ccsp", clf="war"), small_sets[1:], small_sets[0],
                       0, 1)
    assert 0 <= res.accuracy <= 1


def test_twenty_features_reach_classifier(small_sets):
    cfg = PipelineConfig(n_filters=4, clf="clda")
    lab = sample_labeled(small_sets[0].y, 8, np.random.default_rng(0))
    F = pipeline_features(cfg, small_sets[1:], small_sets[0], lab, np.random.default_rng(1))
    assert F.labeled.shape[1] == 8 and F.source.shape[1] == 8
    assert F.evaluation.shape[0] == small_sets[0].n_trials - 8
    F = pipeline_features(replace(cfg, select="crelieff", n_select=3), small_sets[1:],
                          small_sets[0], lab, np.random.default_rng(1))
    assert F.evaluation.shape[1] == 3 and len(F.selected) == 3


def test_twenty_filters_on_full_size_synth():
    sets = synth_generate(SynthParams(n_subjects=2, n_trials_per_class=10, channels=22), 0)
    cfg = PipelineConfig(n_filters=10, clf="lda")
    lab = sample_labeled(sets[0].y, 8, np.random.default_rng(0))
    F = pipeline_features(cfg, sets[1:], sets[0], lab, np.random.default_rng(0))
    assert F.labeled.shape[1] == 20


def test_online_alignment_uses_labeled_trials_only(small_sets):
    from mitl.alignment import align_covariances, reference_from_covariances

    target = prepare(small_sets[0])
    cfg = PipelineConfig(align="ea", spatial="ccsp", clf="clda", mode="online")
    lab = np.array([0, 1, 2, 3])
    F = pipeline_features(cfg, small_sets[1:], target, lab, np.random.default_rng(0))
    ref = reference_from_covariances(target.covs[lab], "ea")
    from mitl.spatial import features_from_covs

    expected = features_from_covs(align_covariances(target.covs[lab], ref), F.bank)
    np.testing.assert_allclose(F.labeled, expected)


def test_csp6_arm_is_standard_pipeline(small_sets):
    cfgs = featsel_configs(aligns=("none",), spatials=("csp",), clfs=("lda",))
    a = sweep(small_sets, cfgs[:1], n_l_grid=(8,), repeats=3)
    b = sweep(small_sets, [PipelineConfig()], n_l_grid=(8,), repeats=3)
    assert [r.accuracy for r in a] == [r.accuracy for r in b]
    assert cfgs[0].name == "CSP-LDA"


def test_sweep_pairing_bounds_and_determinism(small_sets):
    cfgs = [PipelineConfig(), PipelineConfig(align="ea", spatial="rcsp", clf="war")]
    res = sweep(small_sets, cfgs, n_l_grid=(0, 4), repeats=2, base_seed=3)
    # CSP-LDA at N_l = 0 is infeasible and skipped
    assert not any(r.config == "CSP-LDA" and r.n_l == 0 for r in res)
    assert all(0 <= r.accuracy <= 1 for r in res)
    seeds = {}
    for r in res:
        seeds.setdefault((r.target_subject, r.n_l, r.repeat), set()).add(r.seed)
    assert all(len(s) == 1 for s in seeds.values())
    again = sweep(small_sets, cfgs, n_l_grid=(0, 4), repeats=2, base_seed=3, n_jobs=2)
    assert again == res
    reordered = sweep(small_sets, cfgs[::-1], n_l_grid=(0, 4), repeats=2, base_seed=3)
    key = lambda r: (r.config, r.target_subject, r.n_l, r.repeat)  # noqa: E731
    assert sorted(reordered, key=key) == sorted(res, key=key)


def test_cross_session_protocol():
    p = SynthParams(n_subjects=2, n_trials_per_class=12, n_sessions=2, session_scale=0.2)
    res = sweep(synth_generate(p, 0), full_grid(transfer="cross_session")[:3], n_l_grid=(4,),
                repeats=1, transfer="cross-session")
    assert {r.transfer for r in res} == {"cross_session"}
    assert {r.target_subject for r in res} == {"S01", "S02"}


def test_csv_round_trip(tmp_path, small_sets):
    res = sweep(small_sets, [PipelineConfig()], n_l_grid=(4,), repeats=2, dataset="syn")
    write_results(res, tmp_path / "r.csv")
    text = (tmp_path / "r.csv").read_text(encoding="utf-8")
    assert text.splitlines()[0] == ",".join(RESULT_COLUMNS)
    assert read_results(tmp_path / "r.csv") == res
    buf = io.StringIO()
    write_results(res, buf)
    assert buf.getvalue() == text


def test_grid_summary_pinned():
    sets = synth_generate(SynthParams(n_subjects=3, n_trials_per_class=20), seed=4)
    cfgs = [c for c in full_grid() if c.spatial == "rcsp" or c.name == "CSP-LDA"]
    rows = summarize(sweep(sets, cfgs, n_l_grid=(4, 12), repeats=3, base_seed=1))
    got = {r.config: round(r.mean, 6) for r in rows}
    assert got == PINNED_GRID


PINNED_GRID = {
    'CSP-LDA': 0.725309,
    'RCSP-LDA': 0.856922,
    'RCSP-CLDA': 0.965608,
    'RCSP-wAR': 0.944665,
    'EA-RCSP-LDA': 0.868386,
    'EA-RCSP-CLDA': 0.955688,
    'EA-RCSP-wAR': 0.950617,
    'PS-RCSP-LDA': 0.873898,
    'PS-RCSP-CLDA': 0.957672,
    'PS-RCSP-wAR': 0.95679,
}


def test_featsel_experiment_pinned():
    sets = synth_generate(SynthParams(n_subjects=3, n_trials_per_class=20, channels=20), seed=4)
    cfgs = featsel_configs(aligns=("ea",), spatials=("csp",), clfs=("lda",))
    rows = summarize(feature_selection_experiment(sets, (8, 16), repeats=3, configs=cfgs),
                     baseline="EA-CSP-LDA")
    got = {r.config: round(r.mean, 6) for r in rows}
    assert got == PINNED_FEATSEL


PINNED_FEATSEL = {
    'EA-CSP-LDA': 0.626736,
    'EA-CSP20-ReliefF6-LDA': 0.631944,
    'EA-CSP20-CReliefF6-LDA': 0.671296,
}


def test_normalization_and_relieff_flags_reach_pipeline(small_sets):
    lab = sample_labeled(small_sets[0].y, 8, np.random.default_rng(0))
    base = PipelineConfig(spatial="ccsp", clf="clda", select="crelieff", n_select=3)

    def feats(cfg):
        return pipeline_features(cfg, small_sets[1:], small_sets[0], lab,
                                 np.random.default_rng(1))

    ref = feats(base)
    assert not np.allclose(feats(replace(base, trace_normalize=False)).bank.filters,
                           ref.bank.filters)
    for flag in ("relief_replace", "relief_range_normalize"):
        cfg = replace(base, **{flag: False})
        assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
        assert feats(cfg).evaluation.shape == ref.evaluation.shape
