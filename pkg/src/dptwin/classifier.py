"""Tf-idf features and linear classifiers, non-private and DP-trained."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .accountant import PrivacyLedger, PrivacySpec, calibrate_sigma
from .corpus import Corpus
from .dp_optim import DpOptimConfig, OptimizerState, clip, dp_adam_step, noised_sum, poisson_sample

__all__ = ["TfidfVectorizer", "LinearClassifier", "ClassifierError",
           "train_tfidf_classifier", "dp_train_tfidf_classifier"]


class ClassifierError(ValueError):
    pass


class TfidfVectorizer:
    """Log-scaled term frequency x smoothed inverse document frequency, L2 rows."""

    def __init__(self, texts: list[str]):
        if not texts:
            raise ClassifierError("no documents to fit tf-idf on")
        vocab: dict[str, int] = {}
        df: dict[str, int] = {}
        for text in texts:
            words = set(text.lower().split())
            for w in sorted(words):
                if w not in vocab:
                    vocab[w] = len(vocab)
                df[w] = df.get(w, 0) + 1
        n = len(texts)
        self.vocab = vocab
        self.idf = np.empty(len(vocab))
        for w, j in vocab.items():
            self.idf[j] = math.log((1.0 + n) / (1.0 + df[w])) + 1.0

    def transform(self, texts: list[str]) -> np.ndarray:
        X = np.zeros((len(texts), len(self.vocab)))
        for i, text in enumerate(texts):
            for w in text.lower().split():
                j = self.vocab.get(w)
                if j is not None:
                    X[i, j] += 1.0
        X = np.log1p(X) * self.idf
        norms = np.linalg.norm(X, axis=1)
        norms[norms == 0] = 1.0
        return X / norms[:, None]


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


@dataclass
class LinearClassifier:
    vectorizer: TfidfVectorizer
    classes: tuple[str, ...]
    W: np.ndarray  # (n_features + 1, n_classes), last row is the bias

    def predict(self, texts: list[str]) -> list[str]:
        X = self.vectorizer.transform(texts)
        Z = X @ self.W[:-1] + self.W[-1]
        return [self.classes[i] for i in np.argmax(Z, axis=1)]

    def accuracy(self, corpus: Corpus, attribute: str) -> float:
        pred = self.predict(corpus.texts())
        truth = corpus.labels(attribute)
        return float(np.mean([p == t for p, t in zip(pred, truth)]))


def _targets(corpus: Corpus, attribute: str) -> tuple[tuple[str, ...], np.ndarray]:
    labels = corpus.labels(attribute)
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ClassifierError(f"attribute {attribute!r} has a single class in this corpus")
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.asarray([index[l] for l in labels], dtype=np.int64)


def _ce_loss_grad(W_flat: np.ndarray, X: np.ndarray, y: np.ndarray, n_classes: int,
                  reg: float) -> tuple[float, np.ndarray]:
    n, f = X.shape
    W = W_flat.reshape(f + 1, n_classes)
    Z = X @ W[:-1] + W[-1]
    P = _softmax(Z)
    nll = -np.log(P[np.arange(n), y] + 1e-300).mean()
    loss = nll + 0.5 * reg * float(np.sum(W * W))
    D = P.copy()
    D[np.arange(n), y] -= 1.0
    D /= n
    G = np.empty_like(W)
    G[:-1] = X.T @ D
    G[-1] = D.sum(axis=0)
    G += reg * W
    return loss, G.ravel()


def train_tfidf_classifier(
    train: Corpus, attribute: str, reg: float = 1e-4, tol: float = 1e-6
) -> LinearClassifier:
    """Deterministic multinomial logistic regression on tf-idf features."""
    vec = TfidfVectorizer(train.texts())
    X = vec.transform(train.texts())
    classes, y = _targets(train, attribute)
    k = len(classes)
    w0 = np.zeros((X.shape[1] + 1) * k)
    res = optimize.minimize(
        _ce_loss_grad,
        w0,
        args=(X, y, k, reg),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": tol, "ftol": 1e-14, "maxiter": 5000},
    )
    W = res.x.reshape(X.shape[1] + 1, k)
    return LinearClassifier(vectorizer=vec, classes=classes, W=W)


def per_sample_clf_grads(W: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row i: flat gradient of record i's cross-entropy (no regularizer)."""
    n, f = X.shape
    k = W.shape[1]
    Z = X @ W[:-1] + W[-1]
    P = _softmax(Z)
    D = P.copy()
    D[np.arange(n), y] -= 1.0
    out = np.empty((n, (f + 1) * k))
    for i in range(n):
        G = np.empty((f + 1, k))
        G[:-1] = np.outer(X[i], D[i])
        G[-1] = D[i]
        out[i] = G.ravel()
    return out


def dp_train_tfidf_classifier(
    train: Corpus,
    attribute: str,
    spec: PrivacySpec | None,
    optim: DpOptimConfig,
    epochs: int = 20,
) -> tuple[LinearClassifier, PrivacyLedger]:
    """Tf-idf linear model trained with per-sample clipping + Gaussian noising.

    ``spec=None`` (epsilon = infinity) runs the same loop with sigma = 0 and
    q = 1, which reduces to full-batch adaptive-moment descent.
    """
    vec = TfidfVectorizer(train.texts())
    X = vec.transform(train.texts())
    classes, y = _targets(train, attribute)
    k = len(classes)
    n = X.shape[0]
    dim = (X.shape[1] + 1) * k
    if spec is not None:
        q = spec.q
        steps = spec.steps
        sigma = calibrate_sigma(spec)
        B = max(1, int(round(q * n)))
        C = optim.clip_norm
    else:
        q, steps, sigma, B, C = 1.0, epochs, 0.0, n, math.inf
    ledger = PrivacyLedger()
    W = np.zeros((X.shape[1] + 1, k))
    state = OptimizerState.zeros(dim)
    noise_rng = np.random.default_rng(np.random.SeedSequence(entropy=optim.seed, spawn_key=(1,)))
    for step in range(steps):
        idx = poisson_sample(n, q, optim.seed, step)
        grads = per_sample_clf_grads(W, X[idx], y[idx]) if len(idx) else np.empty((0, dim))
        clipped = [clip(g, C) if math.isfinite(C) else g for g in grads]
        avg = noised_sum(clipped, C if math.isfinite(C) else 1e300, sigma, B, noise_rng, dim=dim)
        state, flat = dp_adam_step(state, W.ravel(), avg, optim)
        W = flat.reshape(W.shape)
    if spec is not None:
        ledger.append(sigma, q, steps)
    return LinearClassifier(vectorizer=vec, classes=classes, W=W), ledger
