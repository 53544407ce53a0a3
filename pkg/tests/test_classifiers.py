import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfsentinel.classifiers import (ClassifierConfig, TrainedClassifier, UnfittedClassifier,
                                    fit_classifier, informative_columns, knn_fit, lda_fit,
                                    randf_fit, standardize_apply, standardize_fit)
from rfsentinel.errors import ConstantFeatureError, InvalidArgumentError, NotFittedError


def blobs(seed, classes=3, per_class=20, p=3, spread=10.0):
    rng = np.random.default_rng(seed)
    centres = spread * np.eye(classes, p)
    y = np.repeat(np.arange(classes), per_class)
    return centres[y] + rng.normal(size=(y.size, p)), y


def test_standardize_hand_column():
    params = standardize_fit(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(standardize_apply(params, [[1.0], [2.0], [3.0]]).ravel(), [-1, 0, 1])


@given(st.integers(0, 10**6))
def test_standardized_training_columns(seed):
    x = np.random.default_rng(seed).normal(3, 5, size=(30, 4))
    z = standardize_apply(standardize_fit(x), x)
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(z.std(axis=0, ddof=1), 1, atol=1e-9)


def test_constant_column_is_an_error():
    with pytest.raises(ConstantFeatureError):
        standardize_fit(np.array([[1.0, 2.0], [1.0, 3.0]]))
    assert informative_columns(np.array([[1.0, 2.0], [1.0, 3.0]])) == [1]


def test_one_nearest_neighbour_recalls_training_rows():
    x, y = blobs(0)
    model = knn_fit(x, y, 3, k=1)
    assert np.array_equal(model.predict_codes(x), y)


def test_knn_geometric_example():
    x = np.array([[10.0, 0, 0], [10.5, 0, 0], [9.5, 0, 0], [-10.0, 0, 0], [-10.5, 0, 0], [-9.5, 0, 0]])
    model = knn_fit(x, np.array([1, 1, 1, 0, 0, 0]), 2, k=3)
    assert model.predict_codes(np.array([[9.0, 0, 0]])).tolist() == [1]


def test_knn_vote_tie_goes_to_smallest_class():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    model = knn_fit(x, np.array([1, 1, 0, 0]), 2, k=4)
    assert model.predict_codes(np.array([[0.0]])).tolist() == [0]


def test_knn_distance_tie_goes_to_lower_row():
    model = knn_fit(np.array([[1.0], [-1.0]]), np.array([1, 0]), 2, k=1)
    assert model.predict_codes(np.array([[0.0]])).tolist() == [1]


def test_knn_k_above_rows():
    with pytest.raises(InvalidArgumentError):
        knn_fit(np.ones((3, 1)), np.array([0, 1, 0]), 2, k=4)


@given(st.integers(0, 10**6), st.floats(0.1, 10))
def test_knn_predictions_survive_common_scaling(seed, c):
    x, y = blobs(seed, spread=2.0)
    q = np.random.default_rng(seed + 1).normal(size=(15, 3))
    a = knn_fit(x, y, 3).predict_codes(q)
    b = knn_fit(c * x, y, 3).predict_codes(c * q)
    assert np.array_equal(a, b)


def test_lda_separated_clusters():
    rng = np.random.default_rng(1)
    x = np.r_[rng.normal(size=(30, 2)), rng.normal(size=(30, 2)) + [10, 0]]
    y = np.repeat([0, 1], 30)
    assert np.array_equal(lda_fit(x, y, 2).predict_codes(x), y)


def test_lda_equal_means_follow_priors():
    x = np.array([[1.0], [-1.0], [1.0], [-1.0], [1.0], [-1.0], [2.0], [-2.0]])
    y = np.array([0, 0, 1, 1, 1, 1, 1, 1])
    model = lda_fit(x, y, 2)
    assert set(model.predict_codes(np.linspace(-3, 3, 7)[:, None]).tolist()) == {1}


def test_lda_needs_two_rows_per_class():
    with pytest.raises(InvalidArgumentError):
        lda_fit(np.array([[0.0], [1.0], [2.0]]), np.array([0, 0, 1]), 2)


@given(st.integers(0, 10**6), st.floats(0, 1))
def test_lda_scores_are_affine(seed, alpha):
    x, y = blobs(seed, spread=3.0)
    model = lda_fit(x, y, 3)
    a, b = np.random.default_rng(seed).normal(size=(2, 3))
    lhs = model.scores(alpha * a + (1 - alpha) * b)
    rhs = alpha * model.scores(a) + (1 - alpha) * model.scores(b)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_forest_threshold_data():
    x = np.linspace(0, 1, 40)[:, None]
    y = (x[:, 0] > 0.37).astype(int)
    assert np.array_equal(randf_fit(x, y, 2, n_trees=25, seed=3).predict_codes(x), y)


def test_forest_is_deterministic():
    x, y = blobs(2, spread=1.5)
    probe = np.random.default_rng(9).normal(size=(20, 3))
    a = randf_fit(x, y, 3, n_trees=20, seed=11).predict_codes(probe)
    b = randf_fit(x, y, 3, n_trees=20, seed=11).predict_codes(probe)
    assert np.array_equal(a, b)


def test_forest_beats_single_trees_on_most_datasets():
    wins = 0
    for seed in range(20):
        x, y = blobs(seed, per_class=15, spread=1.5)
        forest = randf_fit(x, y, 3, n_trees=30, seed=seed)
        acc = np.mean(forest.predict_codes(x) == y)
        tree_accs = [np.mean(t.predict_codes(x) == y) for t in forest.trees]
        wins += acc >= max(tree_accs)
    assert wins >= 18


def test_forest_needs_training_rows():
    with pytest.raises(InvalidArgumentError):
        fit_classifier("randf", np.empty((0, 2)), [])


@pytest.mark.parametrize("kind", ["knn", "da", "randf"])
def test_every_classifier_solves_separated_toy_set(kind):
    x, y = blobs(4)
    clf = fit_classifier(kind, x, y + 1, config=ClassifierConfig(n_trees=30))
    assert clf.predict(x) == (y + 1).tolist()


@pytest.mark.parametrize("kind", ["knn", "da", "randf"])
def test_json_round_trip(kind):
    x, y = blobs(5, spread=2.0)
    clf = fit_classifier(kind, x, y, selected=[0, 2], config=ClassifierConfig(n_trees=10))
    back = TrainedClassifier.from_dict(clf.to_dict())
    probe = np.random.default_rng(0).normal(size=(25, 3))
    assert back.predict(probe) == clf.predict(probe)
    assert back.selected == (0, 2)


def test_tree_records_are_nested():
    x, y = blobs(6, classes=2, spread=3.0)
    tree = fit_classifier("randf", x, y, config=ClassifierConfig(n_trees=1)).to_dict()["params"]["trees"][0]
    assert set(tree) == {"feature", "threshold", "left", "right"}


def test_unknown_kind_and_unfitted_model():
    with pytest.raises(InvalidArgumentError):
        fit_classifier("svm", np.eye(3), [0, 1, 2])
    with pytest.raises(NotFittedError):
        UnfittedClassifier().predict(np.eye(2))


def test_predictions_stay_in_catalogue():
    x, y = blobs(7)
    labels = np.array([5, 9, 12])[y]
    clf = fit_classifier("knn", x, labels)
    wild = np.random.default_rng(1).normal(0, 100, size=(50, 3))
    assert set(clf.predict(wild)) <= {5, 9, 12}
