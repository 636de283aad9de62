import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfpseg.signal_io import Signal, SynthSpec, synth_record
from lfpseg.zdensity_rode import Peak, PeakTrain, ZdrParams, ZdrState, zdr_new, zdr_process, zdr_step

RAW = dict(notch=None)


def trained(values, rate=100.0, **kw):
    params = ZdrParams(lag_s=len(values) / rate, **{**RAW, **kw})
    st_ = zdr_new(params, rate)
    for v in values:
        assert zdr_step(st_, v) is None
    assert st_.trained
    return st_


@pytest.mark.parametrize("lag_s, n", [(0.25, 500), (0.125, 250), (0.5, 1000)])
def test_lag_in_samples(lag_s, n):
    assert zdr_new(ZdrParams(lag_s=lag_s), 2000.0).buffer_size() == n


def test_lag_too_short():
    with pytest.raises(ValueError):
        zdr_new(ZdrParams(lag_s=0.0001), 2000.0)


def test_params_validation():
    with pytest.raises(ValueError):
        ZdrParams(influence=1.5)
    with pytest.raises(ValueError):
        ZdrParams(threshold_sigma=0)


def test_peak_on_rising_then_falling_outlier():
    s = trained([1.0, -1.0] * 5, threshold_sigma=5)
    assert s.mu == pytest.approx(0.0) and s.sigma == pytest.approx(1.0)
    assert zdr_step(s, 6.0) is None  # confirmed one sample later
    assert zdr_step(s, 0.0) == Peak(10, 6.0)


def test_below_threshold_no_peak():
    s = trained([1.0, -1.0] * 5, threshold_sigma=5)
    assert zdr_step(s, 4.0) is None
    assert zdr_step(s, 0.0) is None


def test_sigma_floor_on_flat_training():
    s = trained([0.0] * 10, threshold_sigma=5)
    zdr_step(s, 100.0)
    assert s.prev_outlier
    assert zdr_step(s, 0.0) == Peak(10, 100.0)


def test_no_detection_during_training():
    s = zdr_new(ZdrParams(lag_s=0.1, **RAW), 100.0)
    out = [zdr_step(s, v) for v in [0, 0, 0, 50, 0, 0, 0, 0, 0, 0]]
    assert out == [None] * 10


def test_one_sided_ignores_negative_outliers():
    base = [1.0, -1.0] * 5
    two = trained(base, threshold_sigma=5, two_sided=True)
    one = trained(base, threshold_sigma=5, two_sided=False)
    two.step(-8.0)
    one.step(-8.0)
    assert two.prev_outlier and not one.prev_outlier


def test_signal_shorter_than_lag():
    with pytest.raises(ValueError):
        zdr_process(ZdrParams(lag_s=0.125), Signal(np.zeros(250), 2000.0))


def test_baseline_noise_few_false_peaks():
    rec = synth_record(SynthSpec(n_ictal=0, n_interictal=0, rng_seed=7))
    assert len(zdr_process(ZdrParams(threshold_sigma=6), rec.signal)) <= 3


def test_injected_transients_found():
    rng = np.random.default_rng(11)
    x = rng.standard_normal(20000)
    pos = [3000, 7000, 11000, 15000, 19000]
    for p in pos:
        x[p - 2 : p + 3] += 8 * np.array([0.25, 0.6, 1.0, 0.6, 0.25])
    pk = zdr_process(ZdrParams(threshold_sigma=5, **RAW), Signal(x, 2000.0))
    assert len(pk) == 5
    assert np.all(np.abs(pk.indices - pos) <= 5)


def fold(params, x, rate):
    s = zdr_new(params, rate)
    peaks = [p for p in (zdr_step(s, v) for v in x) if p is not None]
    return PeakTrain.from_peaks(peaks, rate), s


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), tau=st.sampled_from([2.0, 3.0, 4.0]),
       infl=st.floats(0.0, 1.0), two_sided=st.booleans())
def test_fold_equals_batch(seed, tau, infl, two_sided):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(600) + 6 * (rng.random(600) < 0.03)
    params = ZdrParams(lag_s=0.05, threshold_sigma=tau, influence=infl, two_sided=two_sided, **RAW)
    batch = zdr_process(params, Signal(x, 1000.0))
    folded, state = fold(params, x, 1000.0)
    assert batch == folded
    assert state.buffer_size() == 50


def test_causal_one_sample_lookahead(rng):
    x = rng.standard_normal(3000) + 8 * (rng.random(3000) < 0.01)
    y = x.copy()
    m = 1700
    y[m:] = rng.standard_normal(3000 - m) * 5
    params = ZdrParams(lag_s=0.05, threshold_sigma=3, **RAW)
    a = zdr_process(params, Signal(x, 1000.0)).indices
    b = zdr_process(params, Signal(y, 1000.0)).indices
    np.testing.assert_array_equal(a[a < m - 1], b[b < m - 1])


def test_memory_independent_of_length(rng):
    params = ZdrParams(lag_s=0.125, **RAW)
    s = zdr_new(params, 2000.0)
    s.feed(rng.standard_normal(200_000).tolist())
    assert s.buffer_size() == 250


def test_running_stats_match_exact(rng):
    params = ZdrParams(lag_s=0.1, threshold_sigma=3, **RAW)
    s = zdr_new(params, 1000.0)
    x = rng.standard_normal(5000) * 1e3 + 1e4 + 5e3 * (rng.random(5000) < 0.02)
    for i in range(0, 5000, 37):
        s.feed(x[i : i + 37].tolist())
        if s.trained:
            buf = np.asarray(s.buffer)
            assert s.mu == pytest.approx(buf.mean(), rel=1e-9)
            assert s.sigma == pytest.approx(buf.std(), rel=1e-9)


def test_influence_one_tracks_raw_window(rng):
    x = rng.standard_normal(2000) + 10 * (rng.random(2000) < 0.05)
    s = zdr_new(ZdrParams(lag_s=0.1, influence=1.0, threshold_sigma=3, **RAW), 1000.0)
    s.feed(x.tolist())
    tail = x[-100:]
    assert s.mu == pytest.approx(tail.mean(), rel=1e-9, abs=1e-12)
    assert s.sigma == pytest.approx(tail.std(), rel=1e-9)


def test_influence_zero_freezes_during_burst(rng):
    s = zdr_new(ZdrParams(lag_s=0.1, influence=0.0, threshold_sigma=4, **RAW), 1000.0)
    s.feed(rng.standard_normal(500).tolist())
    sigma_before = s.sigma
    s.feed([50.0 + rng.standard_normal() for _ in range(300)])  # burst longer than the lag
    assert s.sigma <= sigma_before
    assert abs(s.mu) < 5.0


def test_noise_outlier_rate():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(200_000)
    for tau in (4.0, 5.0):
        s = zdr_new(ZdrParams(lag_s=0.5, threshold_sigma=tau, **RAW), 2000.0)
        hits = 0
        for v in x.tolist():
            s.step(v)
            hits += s.prev_outlier
        rate = hits / (x.size - s.lag)
        assert rate <= 2 * 0.5 * math.erfc(tau / math.sqrt(2)) + 1e-3


def test_threshold_nesting_on_record(record20):
    sets = [set(zdr_process(ZdrParams(threshold_sigma=t), record20.signal).indices.tolist())
            for t in (6.0, 5.0, 4.0)]
    assert sets[0] <= sets[1] <= sets[2]


def test_peaktrain_validation():
    with pytest.raises(ValueError):
        PeakTrain([3, 2], [0.0, 0.0], 100.0)
    with pytest.raises(ValueError):
        PeakTrain([1, 2], [0.0], 100.0)
    assert PeakTrain([10], [1.0], 100.0).times_s[0] == pytest.approx(0.1)


def test_state_class_exported():
    assert isinstance(zdr_new(ZdrParams(), 2000.0), ZdrState)
