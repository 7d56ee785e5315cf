import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hfnilm.dataset import ActivationParams, NormStats, SampleSet
from hfnilm.evaluation import (
    EvalReport,
    RollingConfig,
    choose_threshold_max_f1,
    classification_metrics,
    evaluate_activations,
    evaluate_rolling,
    regression_metrics,
    reite,
    roc_auc,
    rolling_window_predict,
    window_score,
    window_truth,
)
from hfnilm.model import Disaggregator
from hfnilm.nn import Network, build_architecture
from hfnilm.series import PowerSeries

from oracles import naive_rolling, pairwise_auc


def test_regression_metrics_example():
    mae, r, e_hat, e = regression_metrics([100.0, 0.0, 50.0], [100.0, 20.0, 30.0])
    assert mae == pytest.approx(40.0 / 3)
    # 150 W-samples vs 150 W-samples of 6 s each
    assert e_hat == pytest.approx(150 * 6 / 3600) and e == pytest.approx(150 * 6 / 3600)
    assert r == 0.0


def test_reite_cases():
    assert reite(0.0, 0.0) == 0.0
    assert reite(2.0, 1.0) == 0.5
    assert reite(1.0, 2.0) == 0.5
    assert reite(0.0, 3.0) == 1.0


def test_regression_length_mismatch():
    with pytest.raises(ValueError):
        regression_metrics([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        regression_metrics([], [])


def test_classification_zero_denominators():
    m = classification_metrics([0, 0, 0], [0, 0, 0])
    assert m["precision"] == m["recall"] == m["f1"] == 0.0
    assert m["accuracy"] == 1.0
    m = classification_metrics([1, 0, 1, 0], [1, 1, 0, 0])
    assert (m["tp"], m["fp"], m["tn"], m["fn"]) == (1, 1, 1, 1)
    assert m["f1"] == pytest.approx(0.5)


def test_window_score_families():
    assert window_score(np.array([0.0, 3.0, 1.0])) == 3.0
    np.testing.assert_array_equal(window_score(np.array([[1.0, 2.0], [5.0, 0.0]])), [2.0, 5.0])
    rects = np.array([[0.1, 0.5, 900.0], [0.6, 0.6, 800.0], [0.7, 0.2, 50.0]])
    np.testing.assert_array_equal(window_score(rects, "rectangles"), [900.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        window_score(rects, "lstm")


def test_roc_perfect_and_inverted():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])[1] == 1.0
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])[1] == 0.0
    pts, auc = roc_auc([0.5] * 6, [0, 1, 0, 1, 1, 0])
    assert auc == 0.5
    assert pts[0][:2] == (0.0, 0.0) and pts[-1][:2] == (1.0, 1.0)


def test_roc_requires_both_classes():
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 500), st.integers(0, 2**32 - 1), st.integers(2, 50))
def test_auc_matches_pairwise(n, seed, levels):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    # few levels force ties
    scores = rng.integers(0, levels, n) / levels
    assert abs(roc_auc(scores, labels)[1] - pairwise_auc(scores, labels)) <= 1e-12


@given(st.lists(st.floats(0, 1), min_size=2, max_size=40), st.randoms(use_true_random=False))
def test_roc_monotone(scores, r):
    labels = [r.random() < 0.5 for _ in scores]
    labels[0], labels[1] = True, False
    pts, _ = roc_auc(scores, labels)
    fpr = [p[0] for p in pts]
    tpr = [p[1] for p in pts]
    assert fpr == sorted(fpr) and tpr == sorted(tpr)


def test_max_f1_threshold_separable():
    thr = choose_threshold_max_f1([0.1, 0.2, 0.7, 0.9], [0, 0, 1, 1])
    assert 0.2 < thr < 0.7


def test_max_f1_all_positive_candidate():
    thr = choose_threshold_max_f1([0.5, 0.5, 0.5], [1, 1, 0])
    assert thr < 0.5


def _constant_disaggregator(window=16, value=0.3):
    spec = build_architecture("autoencoder", window, code_units=8)
    net = Network(spec, seed=0)
    net.params = [np.zeros_like(p) for p in net.params]
    net.params[-1][...] = value
    return Disaggregator(net, NormStats((1.0,), 1000.0))


def test_constant_model_auc_half():
    rng = np.random.default_rng(0)
    n, w = 40, 16
    samples = SampleSet(
        rng.uniform(0, 3000, (n, w, 1)), rng.uniform(0, 2000, (n, w)), np.zeros((n, 3)), (np.arange(n) % 2).astype(np.int8)
    )
    rep = evaluate_activations(_constant_disaggregator(w), samples)
    assert abs(rep.auc - 0.5) <= 1e-9
    assert rep.n == n


def test_rolling_factor():
    assert RollingConfig(130, 15).factor == 1.3
    assert RollingConfig(130).factor == 1.0
    with pytest.raises(ValueError):
        RollingConfig(10, 5)


def _toy_model(w):
    ramp = np.linspace(0.5, 1.5, w)

    def predict(windows):
        x = np.asarray(windows)[..., 0]
        return 0.4 * x * ramp + 0.001 * x**2 / (1 + x.mean(axis=-1, keepdims=True))

    return predict


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**16), st.integers(4, 40), st.integers(0, 9))
def test_rolling_matches_naive(seed, w, a):
    if 2 * a >= w:
        a = 0
    agg = np.random.default_rng(seed).uniform(0, 3000, 120)
    model = _toy_model(w)
    fast = rolling_window_predict(model, agg, RollingConfig(w, a), chunk=7).values
    slow = naive_rolling(lambda x: model(x[None, :, None])[0], agg, w, a)
    np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-6)


def test_rolling_too_short():
    with pytest.raises(ValueError):
        rolling_window_predict(_toy_model(8), np.ones(5), RollingConfig(8))


def test_window_truth_trailing_partial_window():
    truth = np.zeros(10)
    truth[8:10] = 2000.0
    params = ActivationParams(1000.0, 6.0, 60.0, min_off=0.0)
    labels = window_truth(PowerSeries(0.0, 6.0, truth), 4, params)
    np.testing.assert_array_equal(labels, [False, False, True])
    # an activation straddling a boundary is in no window
    straddle = np.zeros(10)
    straddle[3:5] = 2000.0
    np.testing.assert_array_equal(window_truth(PowerSeries(0.0, 6.0, straddle), 4, params), [False, False, False])


def test_evaluate_rolling_example():
    truth = np.zeros(10)
    truth[8:10] = 2000.0
    pred = truth.copy()
    pred[1] = 300.0
    rep = evaluate_rolling(pred, truth, 4, 500.0, ActivationParams(1000.0, 6.0, 60.0, min_off=0.0))
    assert rep.n == 3
    assert (rep.tp, rep.fp, rep.tn, rep.fn) == (1, 0, 2, 0)
    assert rep.auc == 1.0
    assert rep.mae == pytest.approx(30.0)


def test_evaluate_rolling_grid_mismatch():
    with pytest.raises(ValueError):
        evaluate_rolling(np.zeros(5), np.zeros(6), 4, 1.0, ActivationParams(1.0, 6.0, 60.0))


def test_report_round_trip(tmp_path):
    rep = EvalReport(mae=1.5, auc=0.75, roc=[(0.0, 0.0, float("inf")), (1.0, 1.0, 0.1)], appliance="kettle", n=4)
    rep.write_json(tmp_path / "r.json")
    back = EvalReport.from_dict(json.loads((tmp_path / "r.json").read_text()))
    # unset metrics are NaN, so compare serialized forms
    assert json.dumps(back.to_dict(), sort_keys=True) == json.dumps(rep.to_dict(), sort_keys=True)
    assert back.roc == rep.roc
    rep.write_roc_csv(tmp_path / "roc.csv")
    assert (tmp_path / "roc.csv").read_text().splitlines()[0] == "fpr,tpr,threshold"
