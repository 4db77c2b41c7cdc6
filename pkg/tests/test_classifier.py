import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentsnet.classifier import (
    LinearModel,
    accuracy,
    decision_function,
    load_model,
    predict,
    predict_batch,
    save_model,
    train,
)
from momentsnet.errors import ContainerError, ShapeError, TrainingError


def _clouds(seed=0, n=40, margin=1.0):
    """Two 2-D clouds separated by a gap of 2 * margin along the first axis."""
    rng = np.random.default_rng(seed)
    pos = rng.random((n, 2)) + [margin, -0.5]
    neg = -rng.random((n, 2)) + [-margin, 0.5]
    X = np.vstack([pos, neg])
    y = np.array([1] * n + [0] * n)
    return X, y


@pytest.mark.parametrize("solver", ["dcd", "sgd"])
def test_separable_clouds_reach_full_accuracy(solver):
    X, y = _clouds()
    model = train(X, y, C=10.0, max_epochs=100, seed=0, solver=solver)
    assert accuracy(model, X, y) == 1.0
    for row, label in zip(X[::7], y[::7]):
        assert predict(model, row) == label


@pytest.mark.parametrize("solver", ["dcd", "sgd"])
def test_objective_history_non_increasing(solver):
    X, y = _clouds(1)
    y[::5] = 1 - y[::5]  # label noise keeps the hinge loss positive
    model = train(X, y, C=1.0, max_epochs=30, seed=3, solver=solver)
    history = np.array(model.objective_history)
    assert np.all(np.diff(history, axis=0) <= 0)


@pytest.mark.parametrize("solver", ["dcd", "sgd"])
def test_reproducible(solver):
    X, y = _clouds(2)
    a = train(X, y, seed=5, solver=solver)
    b = train(X, y, seed=5, solver=solver)
    assert a.weights.tobytes() == b.weights.tobytes() and a.biases.tobytes() == b.biases.tobytes()


@pytest.mark.parametrize("solver", ["dcd", "sgd"])
def test_duplicating_every_point_gives_identical_model(solver):
    X, y = _clouds(3)
    a = train(X, y, seed=1, solver=solver)
    b = train(np.vstack([X, X]), np.concatenate([y, y]), seed=1, solver=solver)
    assert a.weights.tobytes() == b.weights.tobytes() and a.biases.tobytes() == b.biases.tobytes()


def test_weight_norm_shrinks_with_c():
    X, y = _clouds(4)
    y[::4] = 1 - y[::4]
    norms = [np.linalg.norm(train(X, y, C=C, max_epochs=200, seed=0).weights) for C in (1e-3, 1e-1, 1e1)]
    assert norms[0] < norms[1] < norms[2]


def test_multiclass_one_vs_rest():
    rng = np.random.default_rng(0)
    centers = np.array([[0, 6], [6, 0], [-6, -6]])
    X = np.vstack([c + rng.standard_normal((30, 2)) for c in centers])
    y = np.repeat(["a", "b", "c"], 30)
    model = train(X, y, seed=0)
    assert model.classes == ["a", "b", "c"] and model.weights.shape == (3, 2)
    assert accuracy(model, X, y) >= 0.95


def test_dcd_matches_svm_dual_optimum():
    # brute-force check: at the optimum every margin violator is a support vector
    X, y = _clouds(5)
    y[::6] = 1 - y[::6]
    model = train(X, y, C=1.0, max_epochs=500, seed=0, tol=1e-8)
    Xb = np.hstack([X, np.ones((len(X), 1))])
    w = np.append(model.weights[1], model.biases[1])
    Y = np.where(y == 1, 1.0, -1.0)
    # primal objective is minimal: small random perturbations never decrease it
    def objective(v):
        return 0.5 * v @ v + np.maximum(0, 1 - Y * (Xb @ v)).sum()
    base = objective(w)
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert objective(w + 1e-4 * rng.standard_normal(3)) >= base - 1e-9


def test_errors():
    X, y = _clouds()
    with pytest.raises(TrainingError):
        train(X, np.zeros(len(X)))
    with pytest.raises(TrainingError):
        train(X, y, C=0)
    with pytest.raises(ShapeError):
        train(X, y[:-1])
    with pytest.raises(TrainingError):
        train(X, y, solver="adam")


def test_predict_rules():
    model = LinearModel(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), np.array([0.5, 2.0, 0.5]), ["x", "y", "z"])
    assert predict(model, np.zeros(2)) == "y"  # argmax of biases
    tie = LinearModel(np.zeros((3, 2)), np.zeros(3), [0, 1, 2])
    assert predict(tie, np.array([1.0, 2.0])) == 0  # ties go to the lowest index
    with pytest.raises(ShapeError):
        predict(model, np.zeros(3))


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_positive_scaling_keeps_argmax(seed, alpha):
    rng = np.random.default_rng(seed)
    model = LinearModel(rng.standard_normal((4, 5)), np.zeros(4), [0, 1, 2, 3])
    x = rng.standard_normal(5)
    assert predict(model, x) == predict(model, alpha * x)


def test_accuracy_examples():
    X = np.random.default_rng(0).random((90, 3))
    y = np.repeat(np.arange(9), 10)
    constant = LinearModel(np.zeros((9, 3)), np.eye(9)[4], list(range(9)))
    assert accuracy(constant, X, y) == pytest.approx(1 / 9)
    X2, y2 = _clouds()
    assert accuracy(train(X2, y2, C=10, max_epochs=100), X2, y2) == 1.0
    with pytest.raises(ShapeError):
        accuracy(constant, np.zeros((0, 3)), [])
    with pytest.raises(ShapeError):
        accuracy(constant, X, y[:-1])
    with pytest.raises(ShapeError):
        accuracy(constant, np.zeros((4, 2)), [0, 1, 2, 3])


def test_batch_and_decision_function_agree():
    X, y = _clouds(6)
    model = train(X, y)
    scores = decision_function(model, X)
    assert scores.shape == (len(X), 2)
    assert predict_batch(model, X) == [model.classes[i] for i in scores.argmax(axis=1)]


def test_model_container_round_trip(tmp_path):
    X, y = _clouds(7)
    model = train(X, y)
    path = tmp_path / "m.mnlm"
    save_model(model, path)
    raw = path.read_bytes()
    assert raw[:4] == b"MNLM" and raw[4] == 1
    assert len(raw) == 13 + 8 * 2 * 3
    back = load_model(path)
    np.testing.assert_array_equal(back.weights, model.weights)
    np.testing.assert_array_equal(back.biases, model.biases)
    assert back.classes == [0, 1]
    path.write_bytes(raw[:-1])
    with pytest.raises(ContainerError):
        load_model(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ContainerError):
        load_model(path)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_separable_margin_property(seed):
    X, y = _clouds(seed, n=25, margin=1.0)
    assert accuracy(train(X, y, C=10.0, max_epochs=100, seed=seed), X, y) == 1.0
