from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import exact_cart_predict
from infraclust.regression import (Dataset, ExperimentRecord, ForestParams, cross_validate, default_grid,
                                   fit_and_evaluate, fold_indices, linear_fit, linear_predict, load_model,
                                   r_squared, read_dataset_csv, records_to_dataset, rmse, save_model,
                                   split_dataset, train_forest, write_dataset_csv)


def dataset(x, y) -> Dataset:
    x = np.asarray(x, dtype=float)
    return Dataset(x, np.asarray(y, dtype=float), tuple(f"f{j}" for j in range(x.shape[1])),
                   tuple(f"r{i}" for i in range(len(x))))


def xor_data(seed: int, n: int = 200) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=(n, 2)).astype(float)
    return dataset(x, np.logical_xor(x[:, 0], x[:, 1]).astype(float))


def test_r_squared_examples():
    y = np.array([1.0, 2.0, 3.0])
    assert r_squared(y, y) == 1.0
    assert r_squared(y, np.full(3, y.mean())) == 0.0
    assert r_squared(y, [1.0, 2.0, 4.0]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        r_squared([1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        r_squared([1.0], [1.0])


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5355, abs=1e-4)
    assert rmse([2.0], [-1.5]) == 3.5


def test_split_examples():
    ds = dataset(np.arange(100)[:, None], np.arange(100))
    train, test = split_dataset(ds, 0.75, seed=0)
    assert (len(train), len(test)) == (75, 25)
    assert sorted(train.keys + test.keys) == sorted(ds.keys)
    again, _ = split_dataset(ds, 0.75, seed=0)
    assert again.keys == train.keys
    tiny = dataset([[0.0], [1.0]], [0.0, 1.0])
    a, b = split_dataset(tiny, 0.5)
    assert (len(a), len(b)) == (1, 1)
    with pytest.raises(ValueError):
        split_dataset(dataset([[0.0]], [0.0]))
    with pytest.raises(ValueError):
        split_dataset(ds, 1.0)


def test_record_validation():
    rec = ExperimentRecord("s1", "zone", (1.0, 2.0), 3.5)
    assert rec.one_hot == (0.0, 0.0, 1.0)
    assert sum(rec.one_hot) == 1
    with pytest.raises(ValueError):
        ExperimentRecord("s1", "random", (1.0,), 1.0)
    with pytest.raises(ValueError):
        ExperimentRecord("s1", "zone", (math.nan,), 1.0)
    with pytest.raises(ValueError):
        ExperimentRecord("s1", "zone", (1.0,), -1.0)


def test_dataset_csv_round_trip(tmp_path):
    recs = [ExperimentRecord(f"s{i}", s, (float(i), float(i % 3)), float(i) / 3)
            for i in range(5) for s in ("betweenness", "maxflow")]
    ds = records_to_dataset(recs, ["a", "b"])
    assert ds.columns == ("a", "b", "strategy_betweenness", "strategy_maxflow", "strategy_zone")
    path = tmp_path / "d.csv"
    write_dataset_csv(ds, path)
    back = read_dataset_csv(path)
    assert back.columns == ds.columns and back.keys == ds.keys
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y)


def test_constant_target():
    rng = np.random.default_rng(0)
    ds = dataset(rng.normal(size=(30, 3)), np.full(30, 4.25))
    model = train_forest(ds, ForestParams(n_trees=10), seed=0)
    assert np.all(model.predict(rng.normal(size=(9, 3))) == 4.25)


def test_single_tree_interpolates():
    rng = np.random.default_rng(1)
    ds = dataset(rng.normal(size=(40, 3)), rng.normal(size=40))
    model = train_forest(ds, ForestParams(1, None, 1, 1.0, bootstrap=False), seed=0)
    assert np.array_equal(model.predict(ds.x), ds.y)


@pytest.mark.parametrize("seed", range(5))
def test_single_tree_matches_exact_cart(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(40, 3))
    y = np.sin(2 * x[:, 0]) + x[:, 1] ** 2 + 0.1 * rng.normal(size=40)
    probe = rng.normal(size=(200, 3))
    for depth in (1, 2, 3, 4):
        model = train_forest(dataset(x, y), ForestParams(1, depth, 1, 1.0, bootstrap=False), seed=0)
        assert np.allclose(model.predict(x), exact_cart_predict(x, y, x, depth))
        if depth <= 2:
            # deeper nodes hold few rows, where several columns can tie and
            # only the fitted values (not unseen-point routing) are unique
            assert np.allclose(model.predict(probe), exact_cart_predict(x, y, probe, depth))


def test_xor_forest_beats_linear():
    train, test = xor_data(0), xor_data(1)
    model = train_forest(train, ForestParams(100, 8), seed=0)
    assert r_squared(test.y, model.predict(test.x)) > 0.9
    coef = linear_fit(train)
    assert abs(r_squared(test.y, linear_predict(coef, test.x))) < 0.05


def test_linear_fit_recovers_plane():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 2))
    coef = linear_fit(dataset(x, 1.5 + 2 * x[:, 0] - x[:, 1]))
    assert np.allclose(coef, [1.5, 2.0, -1.0])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n_trees=st.integers(1, 8), depth=st.sampled_from([1, 3, None]))
def test_forest_properties(seed, n_trees, depth):
    rng = np.random.default_rng(seed)
    ds = dataset(rng.integers(0, 5, size=(30, 4)), rng.exponential(size=30))
    params = ForestParams(n_trees, depth, 1, 0.5)
    model = train_forest(ds, params, seed=seed)
    probe = rng.integers(-1, 6, size=(15, 4)).astype(float)
    pred = model.predict(probe)
    assert np.allclose(pred, model.predict_trees(probe).mean(axis=0))
    assert np.all(pred >= ds.y.min() - 1e-12) and np.all(pred <= ds.y.max() + 1e-12)
    assert np.array_equal(pred, train_forest(ds, params, seed=seed).predict(probe))
    if depth is not None:
        assert all(t.depth <= depth for t in model.trees)
    # a constant column, appended or prepended, never changes predictions
    const = np.full((30, 1), 7.0)
    for stack, probe_stack in ((lambda a: np.hstack([a, const]), lambda p: np.hstack([p, np.full((15, 1), 3.0)])),
                               (lambda a: np.hstack([const, a]), lambda p: np.hstack([np.full((15, 1), 3.0), p]))):
        wide = dataset(stack(ds.x), ds.y)
        assert np.array_equal(train_forest(wide, params, seed=seed).predict(probe_stack(probe)), pred)


def test_fold_indices_partition():
    parts = fold_indices(10, 3, seed=0)
    assert sorted(np.concatenate(parts).tolist()) == list(range(10))
    assert sorted(len(p) for p in parts) == [3, 3, 4]
    with pytest.raises(ValueError):
        fold_indices(2, 3, 0)
    with pytest.raises(ValueError):
        fold_indices(10, 1, 0)


def test_cross_validate_examples():
    ds = xor_data(2, 60)
    one = ForestParams(5, 2)
    assert cross_validate(ds, [one], seed=0).best == one
    dup = cross_validate(ds, [one, one], seed=0)
    assert dup.scores[0][1] == dup.scores[1][1]
    res = cross_validate(ds, [ForestParams(5, 1), ForestParams(5, 2), ForestParams(10, 2)], seed=0)
    assert res.best == ForestParams(5, 2)
    with pytest.raises(ValueError):
        cross_validate(ds, [], seed=0)
    assert len(default_grid()) == 9


def test_fit_and_evaluate_report():
    train, test = xor_data(3, 90), xor_data(4, 40)
    rep = fit_and_evaluate(train, test, [ForestParams(20, 4)], folds=3, seed=0)
    assert rep.test_r2 > 0.9
    assert set(rep.row()) >= {"train_r2", "test_r2", "train_rmse", "test_rmse"}


def test_model_persistence(tmp_path):
    rng = np.random.default_rng(5)
    ds = dataset(rng.normal(size=(50, 3)), rng.normal(size=50))
    model = train_forest(ds, ForestParams(7, 4), seed=3)
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    probe = rng.normal(size=(20, 3))
    assert np.array_equal(back.predict(probe), model.predict(probe))
    assert back.params == model.params and back.columns == model.columns
    doc = json.loads(path.read_text())
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_model(path)
