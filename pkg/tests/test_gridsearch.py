import csv

import pytest

from lfpseg.gridsearch import (
    DEFAULT_AXES,
    GridSpec,
    SplitSpec,
    correlate_score_snr,
    finetune_low_snr,
    param_grid,
    pooled_report,
    run_grid,
    run_protocol,
    select_top_k,
    split_dataset,
    write_results_csv,
)
from lfpseg.metrics import evaluate
from lfpseg.pipeline import run_detector
from lfpseg.signal_io import SynthSpec, synth_record


def small_corpus(snrs, seed=100):
    return [synth_record(SynthSpec(duration_s=30, target_snr_db=s, n_interictal=2, n_ictal=1,
                                   ictal_duration_range_s=(6, 9), rng_seed=seed + i))
            for i, s in enumerate(snrs)]


@pytest.fixture(scope="module")
def corpus():
    return small_corpus([25, 15, 30, 10])


def test_grid_cardinality():
    assert len(param_grid(GridSpec("zdr"))) == 27
    assert len(param_grid(GridSpec("ampde"))) == 12
    assert len(param_grid(GridSpec("zdr", {"threshold_sigma": (5.0,)}))) == 1


def test_grid_order_is_sorted_product():
    g = param_grid(GridSpec("ampde"))
    assert g[0] == {"delta_s": 1.5, "threshold_sigma": 3}
    assert g[1] == {"delta_s": 1.5, "threshold_sigma": 4}
    assert g[-1] == {"delta_s": 2.5, "threshold_sigma": 6}
    assert set(DEFAULT_AXES["zdr"]) == {"threshold_sigma", "delta_s", "lag_s"}


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec("zdr", {"threshold_sigma": ()})
    with pytest.raises(ValueError):
        GridSpec("zdr", {"no_such_field": (1.0,)})
    with pytest.raises(ValueError):
        GridSpec("nope")


@pytest.mark.parametrize("n, n_train", [(10, 7), (68, 48), (2, 1), (3, 2)])
def test_split_sizes(n, n_train):
    train, val = split_dataset(range(n), SplitSpec(0.7, seed=3))
    assert len(train) == n_train and len(val) == n - n_train
    assert sorted(train + val) == list(range(n))


def test_split_deterministic():
    a = split_dataset(range(20), SplitSpec(seed=1))
    assert a == split_dataset(range(20), SplitSpec(seed=1))
    assert a != split_dataset(range(20), SplitSpec(seed=2))
    with pytest.raises(ValueError):
        SplitSpec(1.0)
    with pytest.raises(ValueError):
        split_dataset([1])


def test_single_cell_equals_evaluate(corpus):
    spec = GridSpec("zdr", {"threshold_sigma": (4.0,), "delta_s": (3.0,), "lag_s": (0.25,)})
    (res,) = run_grid(corpus[:1], spec)
    _, seg = run_detector(spec.base.with_values(res.params), corpus[0].signal)
    assert res.mean_score == pytest.approx(evaluate(corpus[0].reference, seg).score, abs=1e-12)


def test_cached_peaks_match_direct_run(corpus):
    spec = GridSpec("ampde", {"threshold_sigma": (3.0, 5.0), "delta_s": (1.5, 2.5)})
    for res in run_grid(corpus[:2], spec):
        cfg = spec.base.with_values(res.params)
        for rec, (rid, rep) in zip(corpus[:2], res.per_record_scores):
            assert rid == rec.session_id
            _, seg = run_detector(cfg, rec.signal)
            assert rep == evaluate(rec.reference, seg)


def test_ranking_and_top_k(corpus):
    spec = GridSpec("zdr", {"threshold_sigma": (4.0, 6.0), "delta_s": (3.0, 5.0), "lag_s": (0.25,)})
    res = run_grid(corpus, spec)
    scores = [g.mean_score for g in res]
    assert scores == sorted(scores, reverse=True)
    for g in res:
        assert g.mean_score == pytest.approx(sum(r.score for _, r in g.per_record_scores) / len(corpus))
    top = select_top_k(res, 10)
    assert len(top.top) == 4
    assert top.average_score == pytest.approx(sum(scores) / 4)
    assert top.recommended == res[0].params
    assert select_top_k(res, 1).average_score == res[0].mean_score


def test_adding_a_worse_cell_keeps_rank_one(corpus):
    axes = {"threshold_sigma": (4.0,), "delta_s": (3.0,), "lag_s": (0.25,)}
    best = run_grid(corpus, GridSpec("zdr", axes))[0]
    worse = run_grid(corpus, GridSpec("zdr", {**axes, "threshold_sigma": (4.0, 60.0)}))
    assert worse[0].params == best.params
    assert worse[0].mean_score == best.mean_score


def test_finetune(corpus):
    spec = GridSpec("zdr", {"threshold_sigma": (4.0, 5.0, 6.0), "delta_s": (3.0, 4.0),
                            "lag_s": (0.25,)})
    base = {"threshold_sigma": 5.0, "delta_s": 3.0, "lag_s": 0.25}
    high_only = [r for r in corpus if r.snr_db >= 20]
    assert finetune_low_snr(high_only, base, spec) == base
    tuned = finetune_low_snr(corpus, base, spec)
    low = [r for r in corpus if r.snr_db < 20]
    assert len(low) == 2
    score = lambda p: pooled_report(low, spec.base.with_values(p))[1]
    mean = lambda p: sum(rep.score for _, rep in score(p)) / len(low)
    assert mean(tuned) >= mean(base) - 1e-12
    assert set(tuned) == set(base)


def test_correlate_score_snr():
    pairs = [(5, 0.2), (10, 0.4), (20, 0.5)]
    r = correlate_score_snr(pairs)
    assert r > 0.9
    assert correlate_score_snr([(s, -v) for s, v in pairs]) == pytest.approx(-r)
    with pytest.raises(ValueError):
        correlate_score_snr([(5, 0.5), (10, 0.5)])


def test_serial_equals_parallel(corpus, tmp_path):
    spec = GridSpec("ampde", {"threshold_sigma": (3.0, 6.0), "delta_s": (2.0,)})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results_csv(run_grid(corpus, spec, workers=1), a)
    write_results_csv(run_grid(corpus, spec, workers=3), b)
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    assert len(rows) == 2 and rows[0]["rank"] == "1"
    assert "mean_precision_ictal" in rows[0] and "mean_score" in rows[0]


def test_protocol_summary(corpus):
    spec = GridSpec("zdr", {"threshold_sigma": (4.0, 5.0), "delta_s": (3.0,), "lag_s": (0.25,)})
    out = run_protocol(corpus, spec, SplitSpec(0.5, seed=2), k=2)
    s = out.summary()
    assert s["n_train"] == 2 and s["n_validation"] == 2
    assert set(s["train_ids"]).isdisjoint(s["validation_ids"])
    assert s["n_configurations"] == 2
    assert 0.0 <= s["validation"]["score"] <= 1.0
    full = run_protocol(corpus, spec, None, k=2, finetune=False)
    assert full.train_ids == full.validation_ids
    assert full.finetuned == full.selection.recommended
