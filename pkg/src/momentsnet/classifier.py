"""One-vs-rest linear SVM with seeded dual coordinate descent or subgradient solvers."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContainerError, ShapeError, TrainingError

__all__ = ["LinearModel", "train", "predict", "predict_batch", "decision_function", "accuracy", "save_model", "load_model"]


@dataclass
class LinearModel:
    weights: np.ndarray  # (num_classes, feature_dim)
    biases: np.ndarray  # (num_classes,)
    classes: list
    C: float = 1.0
    objective_history: list = field(default_factory=list, repr=False)

    @property
    def feature_dim(self):
        return self.weights.shape[1]

    @property
    def num_classes(self):
        return self.weights.shape[0]


def _dedupe(X, codes):
    """Collapse identical (row, class index) pairs; keeps first-occurrence order."""
    keyed = np.column_stack([X, codes.astype(X.dtype)])
    _, first, counts = np.unique(keyed, axis=0, return_index=True, return_counts=True)
    order = np.argsort(first, kind="stable")
    return first[order], counts[order]


def _objective(W, X, Y, weights, lam):
    margins = np.maximum(0.0, 1.0 - Y * (X @ W.T))
    return 0.5 * lam * np.sum(W * W, axis=1) + (weights[:, None] * margins).sum(axis=0) / len(X)


def _prepare(features, labels, C):
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"features {X.shape} and labels {y.shape} do not align")
    if C <= 0:
        raise TrainingError(f"C must be positive, got {C}")
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise TrainingError(f"training needs at least 2 classes, got {classes}")
    codes = np.array([classes.index(v) for v in y.tolist()])
    keep, counts = _dedupe(X, codes)
    X, codes = X[keep], codes[keep]
    weights = counts / counts.mean()
    Xb = np.hstack([X, np.ones((len(X), 1))])
    Y = np.where(codes[:, None] == np.arange(len(classes))[None, :], 1.0, -1.0)
    return Xb, Y, weights, classes


def _sgd_epoch(state, Xb, Y, weights, lam, order):
    """One Pegasos pass; W is stored as scale[:, None] * V to keep updates O(d)."""
    V, scale, vnorm2 = state["V"], state["scale"], state["vnorm2"]
    radius2 = 1.0 / lam
    for i in order:
        state["t"] += 1
        t = state["t"]
        eta = 1.0 / (lam * t)
        x = Xb[i]
        raw = V @ x
        viol = Y[i] * scale * raw < 1.0
        decay = 1.0 - 1.0 / t
        if decay == 0.0:
            V[:] = 0.0
            scale[:] = 1.0
            vnorm2[:] = 0.0
            raw[:] = 0.0
        else:
            scale *= decay
        if viol.any():
            coef = eta * weights[i] * Y[i, viol] / scale[viol]
            vnorm2[viol] += 2 * coef * raw[viol] + coef**2 * state["xx"][i]
            V[viol] += coef[:, None] * x
        wnorm2 = scale**2 * vnorm2
        over = wnorm2 > radius2
        if over.any():
            scale[over] *= np.sqrt(radius2 / wnorm2[over])
        tiny = scale < 1e-8
        if tiny.any():
            V[tiny] *= scale[tiny, None]
            vnorm2[tiny] *= scale[tiny] ** 2
            scale[tiny] = 1.0
    return scale[:, None] * V


def _dcd_epoch(state, Xb, Y, weights, C, order):
    """One dual coordinate descent pass over every class at once."""
    W, alpha, xx = state["W"], state["alpha"], state["xx"]
    upper = C * weights
    worst = 0.0
    for i in order:
        x = Xb[i]
        grad = Y[i] * (W @ x) - 1.0
        a = alpha[i]
        pg = np.where(a <= 0.0, np.minimum(grad, 0.0), np.where(a >= upper[i], np.maximum(grad, 0.0), grad))
        worst = max(worst, float(np.abs(pg).max()))
        move = np.abs(pg) > 1e-12
        if not move.any():
            continue
        new = np.clip(a - grad / xx[i], 0.0, upper[i])
        delta = np.where(move, new - a, 0.0)
        alpha[i] = a + delta
        W += (delta * Y[i])[:, None] * x
    state["violation"] = worst
    return W


def train(features, labels, C=1.0, max_epochs=50, seed=0, solver="dcd", tol=1e-3):
    """Fit one binary hinge-loss model per class against the rest.

    Every class minimizes lam/2 ||w||^2 + mean_i hinge_i with lam = 1 / (C n),
    i.e. the C-SVM objective 1/2 ||w||^2 + C sum_i hinge_i, with a constant
    bias feature regularized alongside the weights. All class subproblems
    share one seeded visiting order per epoch.

    ``solver="dcd"`` runs dual coordinate descent (stops early once the
    largest projected gradient drops below ``tol``); ``solver="sgd"`` runs
    Pegasos-style subgradient steps of size 1 / (lam t) with projection onto
    the radius 1/sqrt(lam) ball. The SGD rate depends on the feature norm,
    so it only suits well-scaled inputs.

    After every epoch each class keeps its lowest-objective iterate, so the
    recorded objective never increases. Exact duplicate examples are merged
    into a weight, which leaves the model unchanged when every example is
    repeated the same number of times.
    """
    if solver not in ("dcd", "sgd"):
        raise TrainingError(f"unknown solver {solver!r}")
    Xb, Y, weights, classes = _prepare(features, labels, C)
    n, d1 = Xb.shape
    K = len(classes)
    lam = 1.0 / (C * n)
    xx = np.einsum("ij,ij->i", Xb, Xb)
    state = {"xx": xx, "t": 0}
    if solver == "sgd":
        state.update(V=np.zeros((K, d1)), scale=np.ones(K), vnorm2=np.zeros(K))
    else:
        state.update(W=np.zeros((K, d1)), alpha=np.zeros((n, K)))
    rng = np.random.default_rng(seed)
    best = np.zeros((K, d1))
    best_obj = _objective(best, Xb, Y, weights, lam)
    history = [best_obj.copy()]
    for _ in range(max_epochs):
        order = rng.permutation(n)
        if solver == "sgd":
            W = _sgd_epoch(state, Xb, Y, weights, lam, order)
        else:
            W = _dcd_epoch(state, Xb, Y, weights, C, order)
        obj = _objective(W, Xb, Y, weights, lam)
        better = obj < best_obj
        best[better] = W[better]
        best_obj = np.where(better, obj, best_obj)
        history.append(best_obj.copy())
        if solver == "dcd" and state["violation"] < tol:
            break
    d = d1 - 1
    return LinearModel(best[:, :d].copy(), best[:, d].copy(), classes, float(C), history)


def decision_function(model, features):
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.feature_dim:
        raise ShapeError(f"feature dimension {X.shape[1]} != model dimension {model.feature_dim}")
    scores = X @ model.weights.T + model.biases
    return scores[0] if single else scores


def predict_batch(model, features):
    scores = decision_function(model, np.atleast_2d(features))
    return [model.classes[j] for j in np.argmax(scores, axis=1)]


def predict(model, feature):
    """Label with the highest score; ties go to the lowest class index."""
    scores = decision_function(model, np.asarray(feature).ravel())
    return model.classes[int(np.argmax(scores))]


def accuracy(model, features, labels):
    labels = list(np.asarray(labels).tolist())
    if not labels:
        raise ShapeError("accuracy needs a non-empty dataset")
    predicted = predict_batch(model, features)
    if len(predicted) != len(labels):
        raise ShapeError(f"{len(predicted)} predictions for {len(labels)} labels")
    return sum(p == t for p, t in zip(predicted, labels)) / len(labels)


_MAGIC = b"MNLM"
_VERSION = 1


def save_model(model, path):
    """MNLM container: magic, u8 version, u32 classes, u32 dims, f64 biases, f64 weights."""
    K, d = model.weights.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<BII", _VERSION, K, d))
        fh.write(np.asarray(model.biases, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())


def load_model(path, classes=None):
    """Read an MNLM file; class labels default to 0..K-1 (the container stores none)."""
    data = Path(path).read_bytes()
    header = 4 + struct.calcsize("<BII")
    if len(data) < header or data[:4] != _MAGIC:
        raise ContainerError(f"{path}: not an MNLM model file")
    version, K, d = struct.unpack_from("<BII", data, 4)
    if version != _VERSION:
        raise ContainerError(f"{path}: unsupported MNLM version {version}")
    if len(data) - header != 8 * K * (d + 1):
        raise ContainerError(f"{path}: payload size does not match {K} classes x {d} dims")
    biases = np.frombuffer(data, dtype="<f8", count=K, offset=header).copy()
    weights = np.frombuffer(data, dtype="<f8", count=K * d, offset=header + 8 * K).reshape(K, d).copy()
    classes = list(range(K)) if classes is None else list(classes)
    if len(classes) != K:
        raise ContainerError(f"{path}: {K} classes stored, {len(classes)} labels given")
    return LinearModel(weights, biases, classes)
