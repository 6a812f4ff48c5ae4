import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from oracles import find_linear_separator
from fedprint.classifiers import (
    ForestModel,
    GbmModel,
    SvmModel,
    TreeNode,
    apply_scaler,
    default_grid,
    fit_scaler,
    grid_search_cv,
    load_model,
    predict,
    predict_dataset,
    save_model,
    stratified_folds,
    train_forest,
    train_gbm,
    train_model,
    train_svm,
)
from fedprint.classifiers.gbm import log_loss, sigmoid
from fedprint.classifiers.scaler import Scaler
from fedprint.classifiers.svm import make_kernel
from fedprint.errors import (
    ArityMismatch,
    ConfigError,
    CorruptModel,
    EmptyGrid,
    SingleClassDataset,
    TooFewSamples,
)
from fedprint.session import Label


def accuracy(model, ds):
    return np.mean([p.label is t for p, t in zip(predict_dataset(model, ds), ds.labels)])


def blobs(seed=0, n=20, sep=5.0, spread=0.3):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, spread, (n, 2))
    b = rng.normal(sep, spread, (n, 2))
    return make_dataset(np.vstack([a, b]), ["CNN"] * n + ["RNN"] * n)


XOR = make_dataset([[0, 0], [1, 1], [0, 1], [1, 0]], ["CNN", "CNN", "RNN", "RNN"])


# --- scaler ----------------------------------------------------------------------------


def test_scaler_examples():
    s = fit_scaler(np.array([[0.0, 3.0], [10.0, 3.0]]))
    assert apply_scaler(s, [[0.0, 3.0], [10.0, 3.0]]).tolist() == [[-1.0, 3.0], [1.0, 3.0]]
    # unseen rows use the training statistics
    assert apply_scaler(s, [[5.0, 7.0]]).tolist() == [[0.0, 7.0]]
    with pytest.raises(ArityMismatch):
        apply_scaler(s, [[1.0, 2.0, 3.0]])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 20).flatmap(lambda n: st.lists(st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=3), min_size=n, max_size=n)))
def test_scaler_centers_training_rows(rows):
    X = np.array(rows)
    s = fit_scaler(X)
    Z = apply_scaler(s, X)
    assert np.all(s.std >= 0)
    for j in range(3):
        if s.std[j] > 0:
            assert abs(Z[:, j].mean()) <= 1e-9
        else:
            assert Z[:, j].tolist() == X[:, j].tolist()
    assert Scaler.from_dict(json.loads(json.dumps(s.to_dict()))).transform(X).tolist() == Z.tolist()


# --- forest ------------------------------------------------------------------------------


def test_forest_single_split_example():
    ds = make_dataset([0.0, 1.0], ["CNN", "RNN"])
    m = train_forest(ds, {"n_trees": 1, "max_depth": 1, "bootstrap": False}, seed=0)
    t = m.trees[0]
    assert (t.feature, t.threshold) == (0, 0.5)
    assert predict(m, [0.0]).label is Label.CNN and predict(m, [1.0]).label is Label.RNN


def test_forest_errors_and_params():
    with pytest.raises(SingleClassDataset):
        train_forest(make_dataset([0, 1], ["CNN", "CNN"]))
    with pytest.raises(ConfigError):
        train_forest(XOR, {"bogus": 1})
    m = train_forest(blobs(), {"n_trees": 7})
    assert len(m.trees) == 7 and m.params["m_try"] == 2


def test_forest_vote_share_and_ties():
    cnn = TreeNode(counts=(1, 0), prediction=Label.CNN)
    rnn = TreeNode(counts=(0, 1), prediction=Label.RNN)
    m = ForestModel([cnn, cnn, rnn], {}, 0, ("f0",), (5, 5))
    lab, share = predict(m, [0.0])
    assert lab is Label.CNN and share == pytest.approx(2 / 3)
    even = ForestModel([cnn, rnn], {}, 0, ("f0",), (5, 5))
    assert predict(even, [0.0]).label is Label.CNN
    more_rnn = ForestModel([cnn, rnn], {}, 0, ("f0",), (3, 6))
    assert predict(more_rnn, [0.0]).label is Label.RNN


def test_forest_same_seed_same_bytes():
    ds = blobs(1, spread=2.0)
    a = save_model(train_forest(ds, {"n_trees": 20}, seed=42))
    b = save_model(train_forest(ds, {"n_trees": 20}, seed=42))
    c = save_model(train_forest(ds, {"n_trees": 20}, seed=43))
    assert a == b and a != c


def test_forest_with_feature_subsampling_serialises():
    rng = np.random.default_rng(4)
    ds = make_dataset(rng.normal(size=(30, 8)), rng.choice(["CNN", "RNN"], 30))
    m = train_forest(ds, {"n_trees": 5}, seed=1)
    assert save_model(load_model(save_model(m))) == save_model(m)


def test_forest_fits_training_set_to_purity():
    rng = np.random.default_rng(2)
    ds = make_dataset(rng.normal(size=(30, 3)), rng.choice(["CNN", "RNN"], 30))
    m = train_forest(ds, {"n_trees": 1, "bootstrap": False, "m_try": 3})
    assert accuracy(m, ds) == 1.0


# --- svm ----------------------------------------------------------------------------------


def test_svm_separable_blobs():
    ds = blobs(0)
    signs = ds.y.tolist()
    assert find_linear_separator([tuple(r) for r in ds.X], signs) is not None
    m = train_svm(ds, C=1.0, kernel="linear")
    assert accuracy(m, ds) == 1.0
    assert m.converged


def test_svm_xor_rbf():
    m = train_svm(XOR, C=10.0, kernel="rbf", gamma=1.0)
    assert accuracy(m, XOR) == 1.0


def test_svm_conflicting_duplicates():
    ds = make_dataset([[0, 0], [0, 0], [1, 1], [1, 1], [2, 2]], ["CNN", "RNN", "CNN", "RNN", "CNN"])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        m = train_svm(ds, C=1.0)
    assert accuracy(m, ds) < 1.0


def test_svm_dual_feasibility():
    for seed in range(10):
        ds = blobs(seed, sep=1.0, spread=1.0)
        for kernel, gamma in (("linear", None), ("rbf", 0.5)):
            m = train_svm(ds, C=2.0, kernel=kernel, gamma=gamma)
            alpha = np.abs(m.coef)
            assert len(m.coef) >= 1
            assert np.all(alpha <= 2.0 + 1e-12)
            if m.converged:
                assert abs(m.coef.sum()) <= 1e-6


def test_svm_zero_decision_is_cnn():
    m = SvmModel(np.zeros((1, 1)), np.array([0.0]), 0.0, make_kernel("linear"), 1.0,
                 Scaler(np.zeros(1), np.ones(1)), ("f0",), {})
    assert predict(m, [3.0]) == (Label.CNN, 0.0)


def test_svm_errors():
    with pytest.raises(SingleClassDataset):
        train_svm(make_dataset([0, 1], ["RNN", "RNN"]))
    with pytest.raises(ConfigError):
        train_svm(XOR, C=0)
    with pytest.raises(ConfigError):
        train_svm(XOR, kernel="rbf")
    with pytest.raises(ConfigError):
        train_svm(XOR, kernel="poly")


# --- gbm -----------------------------------------------------------------------------------


def test_gbm_balanced_initial_score_is_zero():
    assert train_gbm(blobs(), n_rounds=3).initial_score == 0.0
    imbalanced = make_dataset([0, 1, 2], ["CNN", "CNN", "RNN"])
    assert train_gbm(imbalanced, n_rounds=1).initial_score == pytest.approx(math.log(2))


def test_gbm_separable_1d_margins():
    ds = make_dataset([0, 1, 2, 3, 10, 11, 12, 13], ["CNN"] * 4 + ["RNN"] * 4)
    m = train_gbm(ds, n_rounds=10, learning_rate=0.1, max_depth=3)
    F = m.raw_score(ds.X)
    assert accuracy(m, ds) == 1.0
    assert np.all(F * ds.y > 0)
    staged = list(m.staged_scores(ds.X))
    assert len(staged) == 10 and np.array_equal(staged[-1], F)


def test_gbm_loss_recorded_and_consistent():
    rng = np.random.default_rng(4)
    ds = make_dataset(rng.normal(size=(25, 3)), rng.choice(["CNN", "RNN"], 25))
    m = train_gbm(ds, n_rounds=15)
    y01 = (ds.y > 0).astype(float)
    assert len(m.losses) == len(m.trees) == 15
    assert m.losses[-1] == pytest.approx(log_loss(y01, m.raw_score(ds.X)), rel=1e-12)
    assert all(b <= a + 1e-12 for a, b in zip(m.losses, m.losses[1:]))


def test_gbm_half_probability_is_cnn():
    m = GbmModel(0.0, [], 0.1, 3, ("f0",), [])
    lab, p = predict(m, [1.0])
    assert lab is Label.CNN and p == 0.5
    assert sigmoid(np.array([-800.0, 0.0, 800.0])).tolist() == [0.0, 0.5, 1.0]


def test_gbm_errors():
    with pytest.raises(SingleClassDataset):
        train_gbm(make_dataset([0, 1], ["CNN", "CNN"]))
    with pytest.raises(ConfigError):
        train_gbm(XOR, learning_rate=0)


# --- properties shared by the three learners ---------------------------------------------------


def threshold_separable(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(4, 30)), int(rng.integers(1, 5))
    X = rng.normal(size=(n, d))
    j = int(rng.integers(d))
    cut = float(np.median(X[:, j]))
    labels = np.where(X[:, j] <= cut, "CNN", "RNN")
    if len(set(labels)) < 2:
        labels[0] = "RNN" if labels[0] == "CNN" else "CNN"
        X[0, j] = cut + 5 if labels[0] == "RNN" else cut - 5
    return make_dataset(X, labels)


@pytest.mark.parametrize("seed", range(15))
def test_axis_threshold_data_fit_perfectly(seed):
    ds = threshold_separable(seed)
    assert accuracy(train_forest(ds, {"n_trees": 25}, seed=seed), ds) == 1.0
    # effectively hard margin: tiny gaps need large multipliers
    assert accuracy(train_svm(ds, C=1e6, kernel="linear"), ds) == 1.0
    assert accuracy(train_gbm(ds, n_rounds=50, learning_rate=0.3, max_depth=2), ds) == 1.0


@pytest.mark.parametrize("seed", range(8))
def test_monotone_rescaling_keeps_training_decisions(seed):
    rng = np.random.default_rng(100 + seed)
    X = rng.normal(size=(20, 3))
    labels = rng.choice(["CNN", "RNN"], 20)
    labels[:2] = ["CNN", "RNN"]
    j = seed % 3
    Xr = X.copy()
    Xr[:, j] = np.exp(2 * X[:, j]) + 7  # strictly increasing
    a, b = make_dataset(X, labels), make_dataset(Xr, labels)
    fa, fb = train_forest(a, {"n_trees": 15}, seed=seed), train_forest(b, {"n_trees": 15}, seed=seed)
    assert [p.label for p in predict_dataset(fa, a)] == [p.label for p in predict_dataset(fb, b)]
    ga, gb = train_gbm(a, n_rounds=20), train_gbm(b, n_rounds=20)
    assert [p.label for p in predict_dataset(ga, a)] == [p.label for p in predict_dataset(gb, b)]


# --- cross-validation ------------------------------------------------------------------------


def test_default_grid_sizes():
    assert [len(default_grid(k)) for k in ("forest", "svm", "gbm")] == [9, 16, 12]
    with pytest.raises(ConfigError):
        default_grid("knn")


def test_stratified_folds_balance_and_determinism():
    ds = make_dataset(np.arange(16.0), ["CNN"] * 8 + ["RNN"] * 8)
    f1 = stratified_folds(ds, 5, 7)
    assert f1.tolist() == stratified_folds(ds, 5, 7).tolist()
    for lab in ("CNN", "RNN"):
        per = np.bincount(f1[np.array([v.value == lab for v in ds.labels])], minlength=5)
        assert per.max() - per.min() <= 1


def test_grid_single_point_and_tie():
    ds = blobs(3)
    r = grid_search_cv(ds, "forest", [{"n_trees": 3}], seed=0)
    assert r.chosen == 0 and len(r.mean_accuracy) == 1 and r.k_folds == 5
    tie = grid_search_cv(ds, "forest", [{"n_trees": 3}, {"n_trees": 5}], seed=0)
    assert tie.mean_accuracy == [1.0, 1.0] and tie.chosen == 0


def test_grid_prefers_separating_point():
    # 10 vs 4 rows: a tiny C cannot overcome the class imbalance in the bias
    X = np.r_[np.linspace(0, 1, 10), np.linspace(3, 4, 4)]
    ds = make_dataset(X, ["CNN"] * 10 + ["RNN"] * 4)
    r = grid_search_cv(ds, "svm", [{"C": 1e-4}, {"C": 100.0}], seed=0)
    assert r.mean_accuracy[1] == 1.0 and r.mean_accuracy[0] < 1.0 and r.chosen == 1


def test_grid_errors():
    with pytest.raises(EmptyGrid):
        grid_search_cv(blobs(), "forest", [])
    with pytest.raises(TooFewSamples):
        grid_search_cv(make_dataset([0, 1, 2], ["CNN", "CNN", "RNN"]), "forest")
    small = make_dataset(np.arange(6.0), ["CNN"] * 3 + ["RNN"] * 3)
    assert grid_search_cv(small, "forest", [{"n_trees": 3}]).k_folds == 3
    with pytest.raises(ConfigError):
        train_model("svm", small, {"depth": 3})


# --- persistence -------------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["forest", "svm", "gbm"])
def test_save_load_round_trip(kind):
    ds = blobs(5, sep=1.5, spread=1.0)
    params = {"forest": {"n_trees": 15}, "svm": {"C": 1.0, "kernel": "rbf", "gamma": 0.5}, "gbm": {"n_rounds": 20}}[kind]
    m = train_model(kind, ds, params, seed=3)
    back = load_model(save_model(m))
    assert save_model(back) == save_model(m)
    rows = np.random.default_rng(0).normal(0.75, 2.0, (1000, 2))
    assert [predict(m, r) for r in rows] == [predict(back, r) for r in rows]
    if kind == "svm":
        assert np.abs(m.decision(rows) - back.decision(rows)).max() <= 1e-12
    if kind == "gbm":
        assert np.abs(m.raw_score(rows) - back.raw_score(rows)).max() <= 1e-12


def test_load_rejects_corruption():
    blob = save_model(train_forest(blobs(), {"n_trees": 2}))
    with pytest.raises(CorruptModel):
        load_model(blob[: len(blob) // 2])
    doc = json.loads(blob)
    doc["params"]["n_trees"] = 3
    with pytest.raises(CorruptModel, match="checksum"):
        load_model(json.dumps(doc).encode())
    doc = json.loads(blob)
    doc["format_version"] = 2
    with pytest.raises(CorruptModel, match="format_version"):
        load_model(json.dumps(doc).encode())
    with pytest.raises(CorruptModel):
        load_model(b"[]")


def test_model_file_keys():
    doc = json.loads(save_model(train_gbm(blobs(), n_rounds=2)))
    assert set(doc) == {"format_version", "classifier_kind", "schema", "params", "seed", "payload", "checksum"}
    assert doc["classifier_kind"] == "gbm" and doc["schema"] == ["f0", "f1"]


def test_predict_arity_and_projection():
    ds = make_dataset(np.random.default_rng(0).normal(size=(10, 3)), ["CNN", "RNN"] * 5, ("a", "b", "c"))
    m = train_forest(ds.project(["c", "a"]), {"n_trees": 3})
    with pytest.raises(ArityMismatch):
        predict(m, [1.0, 2.0, 3.0])
    # wider dataset is projected by name
    assert len(predict_dataset(m, ds)) == 10
    with pytest.raises(ArityMismatch):
        predict_dataset(m, make_dataset(np.zeros((2, 2)), ["CNN", "RNN"], ("a", "b")))
