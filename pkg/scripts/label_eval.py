"""
Segment label classification over frozen embeddings: one-vs-rest logistic
regression with macro F1 and macro AUC
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn import metrics
from sklearn.preprocessing import StandardScaler

from errors import EvaluationError

LOGISTIC_LR = 0.1
LOGISTIC_ITERATIONS = 500
LOGISTIC_L2 = 1e-4


@dataclass
class LogisticHead:
    scaler: StandardScaler
    weights: np.ndarray  # d x C
    bias: np.ndarray  # C
    n_classes: int

    def scores(self, emb: np.ndarray) -> np.ndarray:
        """Per-class one-vs-rest probabilities σ(x·w_c + b_c)"""
        logits = self.scaler.transform(np.asarray(emb, dtype=np.float64)) @ self.weights + self.bias
        return 0.5 * (1.0 + np.tanh(0.5 * logits))

    def predict_proba(self, emb: np.ndarray) -> np.ndarray:
        raw = self.scores(emb)
        return raw / raw.sum(axis=1, keepdims=True)

    def predict(self, emb: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(emb), axis=1)


def fit_logistic(emb: np.ndarray, labels: Sequence[int], train_idx: Sequence[int], seed: int = 0,
                 lr: float = LOGISTIC_LR, iterations: int = LOGISTIC_ITERATIONS,
                 l2: float = LOGISTIC_L2) -> LogisticHead:
    """
    One-vs-rest logistic regression by full-batch gradient descent on
    standardised features, with an ℓ2 penalty on the weights.

    Raises:
        EvaluationError: fewer than two classes, or a class absent from the train split
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train_idx = np.asarray(train_idx, dtype=np.int64)
    n_classes = int(labels.max()) + 1 if labels.size else 0
    if n_classes < 2:
        raise EvaluationError(f"label classification needs at least 2 classes, got {n_classes}")
    missing = sorted(set(range(n_classes)) - set(labels[train_idx].tolist()))
    if missing:
        raise EvaluationError(f"class(es) {missing} missing from the train split")

    scaler = StandardScaler().fit(emb[train_idx])
    x = scaler.transform(emb[train_idx])
    targets = np.eye(n_classes)[labels[train_idx]]

    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.01, size=(x.shape[1], n_classes))
    bias = np.zeros(n_classes)
    n = x.shape[0]
    for _ in range(iterations):
        probs = 0.5 * (1.0 + np.tanh(0.5 * (x @ weights + bias)))
        residual = probs - targets
        weights -= lr * (x.T @ residual / n + l2 * weights)
        bias -= lr * residual.mean(axis=0)
    return LogisticHead(scaler=scaler, weights=weights, bias=bias, n_classes=n_classes)


def auc_score(scores: Sequence[float], binary_labels: Sequence[int]) -> float:
    """
    Probability that a random positive outranks a random negative (ties count ½)

    Raises:
        EvaluationError: only one class present
    """
    binary_labels = np.asarray(binary_labels)
    if len(np.unique(binary_labels)) < 2:
        raise EvaluationError("AUC is undefined when only one class is present")
    return float(metrics.roc_auc_score(binary_labels, np.asarray(scores, dtype=np.float64)))


def f1_score(predictions: Sequence[int], labels: Sequence[int], n_classes: Optional[int] = None,
             classes: Optional[Sequence[int]] = None) -> float:
    """
    Macro F1 with 0/0 := 0, averaged over classes (or range(n_classes));
    by default over every label seen in either argument
    """
    if len(predictions) != len(labels):
        raise EvaluationError(f"{len(predictions)} predictions for {len(labels)} labels")
    if classes is not None:
        class_list = [int(c) for c in classes]
    else:
        class_list = list(range(n_classes)) if n_classes is not None else None
    return float(metrics.f1_score(labels, predictions, labels=class_list, average="macro", zero_division=0))


def per_class_f1(predictions: Sequence[int], labels: Sequence[int], n_classes: int) -> np.ndarray:
    if len(predictions) != len(labels):
        raise EvaluationError(f"{len(predictions)} predictions for {len(labels)} labels")
    return metrics.f1_score(labels, predictions, labels=list(range(n_classes)), average=None, zero_division=0)


@dataclass
class MetricsReport:
    macro_f1: float
    macro_auc: float
    per_class: List[Dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"macro_f1": self.macro_f1, "macro_auc": self.macro_auc, "per_class": list(self.per_class)}


def classify_report(emb: np.ndarray, labels: Sequence[int], split: Tuple[np.ndarray, np.ndarray, np.ndarray],
                    seed: int = 0) -> MetricsReport:
    """
    Fit the logistic head on the train split, score the test split.
    Macro F1 averages the per-class F1 over the classes present in the test
    split; a predicted class with no test support does not enter the mean.
    Macro AUC averages one-vs-rest AUC over the classes with both
    positives and negatives in the test split.
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if emb.shape[0] != labels.shape[0]:
        raise EvaluationError(f"{emb.shape[0]} embeddings for {labels.shape[0]} labels")
    train_idx, _, test_idx = split
    head = fit_logistic(emb, labels, train_idx, seed=seed)

    test_labels = labels[test_idx]
    scores = head.scores(emb[test_idx])
    predictions = np.argmax(scores, axis=1)
    f1s = per_class_f1(predictions, test_labels, head.n_classes)

    per_class = []
    aucs = []
    for c in range(head.n_classes):
        positives = test_labels == c
        auc = None
        if 0 < positives.sum() < len(test_labels):
            auc = auc_score(scores[:, c], positives.astype(np.int64))
            aucs.append(auc)
        per_class.append({"class": c, "support": int(positives.sum()), "f1": float(f1s[c]), "auc": auc})
    if not aucs:
        raise EvaluationError("no class has both positives and negatives in the test split")

    return MetricsReport(
        macro_f1=f1_score(predictions, test_labels, classes=np.unique(test_labels)),
        macro_auc=float(np.mean(aucs)),
        per_class=per_class,
    )
