import numpy as np
import pytest

from tdln.extratrees import predict_forest
from tdln.network import DeepNetParams, extract_features
from tdln.pipeline import (PipelineConfig, TdlnModel, detect_labeled, detect_online, evaluate, fit_offline,
                           predict_windows)
from tdln.preprocess import RawSeries, apply_norm, WindowSpec
from tdln.numerics import ShapeError

from conftest import small_config


def test_feature_extraction():
    params = DeepNetParams.init(0, 52, 18)
    assert extract_features(params, np.zeros((30, 52))).shape == (180,)
    zero = params.with_arrays([np.zeros_like(a) for a in params.arrays()])
    w = np.random.default_rng(0).normal(size=(30, 52))
    assert np.all(extract_features(zero, w) == 0)
    assert np.array_equal(extract_features(params, w), extract_features(params, w.copy()))


def test_modes_and_metadata(small_models):
    full, dl, ml = small_models["full"], small_models["dl_only"], small_models["ml_only"]
    assert full.forest.n_features == 6 and dl.forest is None and ml.deep is None
    assert ml.forest.n_features == 10 * 4
    assert len(full.metadata["validation_fdr"]) == 3
    assert "validation_macro_fdr" in full.metadata
    # same seed and data: the forest never touches the network weights
    assert all(np.array_equal(a, b) for a, b in zip(full.deep.arrays(), dl.deep.arrays()))


def test_detect_online_counts(small_models):
    model = small_models["full"]
    rng = np.random.default_rng(0)
    assert len(detect_online(model, rng.normal(size=(10, 4)))) == 1
    dets = detect_online(model, rng.normal(size=(9, 4)))
    assert len(dets) == 1 and dets[0].provisional
    wide = model.with_mode("full")
    wide.window = WindowSpec(30, 20)
    assert len(detect_online(small_models["dl_only"].__class__(**{**wide.__dict__, "forest": None,
                                                                   "mode": "dl_only"}),
                             rng.normal(size=(500, 4)))) == 24
    with pytest.raises(ShapeError, match="3 channels, model expects 4"):
        detect_online(model, rng.normal(size=(20, 3)))


def test_full_mode_composition(small_models):
    model = small_models["full"]
    rng = np.random.default_rng(1)
    buf = rng.normal(size=(40, 4))
    dets = detect_online(model, buf)
    normed = apply_norm(buf, model.norm)
    for d in dets:
        win = normed[d.start:d.start + 10]
        c, p = predict_forest(model.forest, extract_features(model.deep, win))
        assert d.predicted == c and np.array_equal(d.probabilities, p)
        assert abs(d.probabilities.sum() - 1) <= 1e-9
    again = detect_online(model, buf)
    assert all(np.array_equal(a.probabilities, b.probabilities) for a, b in zip(dets, again))


def test_ml_and_dl_routes(small_models):
    rng = np.random.default_rng(2)
    win = rng.normal(size=(3, 10, 4))
    ml = small_models["ml_only"]
    _, p = predict_windows(ml, win)
    assert np.array_equal(p, ml.forest.predict_proba(win.reshape(3, -1)))
    dl = small_models["dl_only"]
    from tdln.network import predict_proba
    assert np.array_equal(predict_windows(dl, win)[1], predict_proba(dl.deep, win))


def test_labeled_detection_and_eval(small_data, small_models):
    _, test = small_data
    dets = detect_labeled(small_models["full"], test)
    assert all(d.truth is not None for d in dets)
    for d in dets:
        assert set(test.labels[d.start:d.start + 10]) == {d.truth}
    rep = evaluate(small_models["full"], test)
    assert rep.total == len(dets)
    bigger = RawSeries(test.values, np.where(test.labels == 2, 3, test.labels), 4)
    with pytest.raises(ValueError):
        evaluate(small_models["full"], bigger)


def test_fit_offline_errors(small_data):
    train, _ = small_data
    with pytest.raises(ValueError):
        fit_offline(RawSeries(train.values, np.zeros(len(train), int), 1), small_config())
    with pytest.raises(ValueError):
        PipelineConfig(mode="trees_only")
    with pytest.raises(ValueError):
        fit_offline(train, small_config(window=None) if False else PipelineConfig(
            WindowSpec(500, 20), small_config().train, small_config().net, small_config().forest))


def test_model_invariant_checks(small_models):
    full = small_models["full"]
    with pytest.raises(ShapeError):
        TdlnModel(full.norm, full.window, "ml_only", 3, 4, None, full.forest)
    with pytest.raises(ValueError):
        TdlnModel(full.norm, full.window, "full", 3, 4, full.deep, None)


def test_refine_rounds_extend_curve(small_data):
    train, _ = small_data
    m = fit_offline(train, small_config(refine_rounds=2))
    assert len(m.metadata["curve"]["val_accuracy"]) == 4
    assert m.forest.n_features == 6
