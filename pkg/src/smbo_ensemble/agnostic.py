"""Agnostic-Bayes ensembles over a finite set of trained predictors.

The posterior over "which predictor has the smallest true risk" is sampled
with the bootstrap: resample the validation set with replacement, recompute
every predictor's empirical risk, keep the argmin.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True, eq=False)
class BootstrapWeights:
    """Resampling multiplicities, one nonnegative integer per validation example, summing to m."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a non-empty vector")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise ValueError("counts must be nonnegative integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def m(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def ones(cls, m: int) -> "BootstrapWeights":
        """The identity resample (S' = S)."""
        return cls(np.ones(m, dtype=np.int64))


def draw_bootstrap(m: int, seed=None) -> BootstrapWeights:
    """Uniform multinomial resample of ``m`` validation examples."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    return BootstrapWeights(rng.multinomial(m, np.full(m, 1.0 / m)))


def weighted_risk(loss_row, weights: BootstrapWeights | None = None) -> float:
    """Empirical risk on the resampled validation set, ``sum(counts * losses) / m``.

    ``weights=None`` means all-ones counts, i.e. the plain holdout risk, and
    is computed by the same arithmetic so the two agree bit for bit.
    """
    row = np.asarray(loss_row, dtype=float).ravel()
    if weights is None:
        weights = BootstrapWeights.ones(row.size)
    if weights.counts.size != row.size:
        raise ValueError(f"loss row has {row.size} entries but weights have {weights.counts.size}")
    return float(np.dot(weights.counts.astype(float), row) / weights.m)


class LossMatrix:
    """Per-example validation losses; rows are predictors, columns examples.

    Parameters
    ----------
    losses : array of shape (n_predictors, m)
    keys : sequence, optional
        One label per row (e.g. the config that produced the predictor).
    """

    def __init__(self, losses, keys: Sequence | None = None):
        losses = np.array(losses, dtype=float)
        if losses.ndim != 2 or losses.shape[0] < 1 or losses.shape[1] < 1:
            raise ValueError("losses must be a non-empty 2-D array")
        if not np.all(np.isfinite(losses)):
            raise ValueError("losses must be finite")
        losses.setflags(write=False)
        self.losses = losses
        self.keys = list(keys) if keys is not None else list(range(losses.shape[0]))
        if len(self.keys) != losses.shape[0]:
            raise ValueError("need one key per row")

    @property
    def shape(self):
        return self.losses.shape

    def risks(self, weights: BootstrapWeights | None = None) -> np.ndarray:
        m = self.losses.shape[1]
        counts = (weights.counts if weights is not None else np.ones(m, dtype=np.int64)).astype(float)
        if counts.size != m:
            raise ValueError(f"weights cover {counts.size} examples, matrix has {m}")
        return self.losses @ counts / counts.sum()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["key"] + [f"x{i}" for i in range(self.losses.shape[1])])
            for key, row in zip(self.keys, self.losses):
                w.writerow([str(key)] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "LossMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        return cls([[float(v) for v in r[1:]] for r in rows], keys=[r[0] for r in rows])


def _argmin_random_ties(risks, rng):
    """Row-wise argmin; exact ties are broken uniformly at random."""
    risks = np.atleast_2d(risks)
    is_min = risks == risks.min(axis=1, keepdims=True)
    keys = rng.random(risks.shape)
    keys[~is_min] = -1.0
    return keys.argmax(axis=1)


def sample_best(loss_matrix: LossMatrix, seed=None) -> int:
    """One posterior sample: the argmin row under a fresh bootstrap of the columns."""
    rng = np.random.default_rng(seed)
    weights = draw_bootstrap(loss_matrix.shape[1], rng)
    return int(_argmin_random_ties(loss_matrix.risks(weights), rng)[0])


@dataclass(frozen=True)
class BestPosterior:
    probs: np.ndarray
    n_samples: int


def estimate_best_posterior(loss_matrix: LossMatrix, n_samples: int, seed=None,
                            chunk_size: int = 8192) -> BestPosterior:
    """Monte Carlo estimate of each predictor's probability of being the best.

    Counts how often each row wins under independent bootstrap resamples.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    k, m = loss_matrix.shape
    wins = np.zeros(k, dtype=np.int64)
    p = np.full(m, 1.0 / m)
    done = 0
    while done < n_samples:
        b = min(chunk_size, n_samples - done)
        counts = rng.multinomial(m, p, size=b).astype(float)
        risks = counts @ loss_matrix.losses.T / m
        wins += np.bincount(_argmin_random_ties(risks, rng), minlength=k)
        done += b
    return BestPosterior(wins / n_samples, n_samples)


def weighted_vote(predictions, weights) -> np.ndarray:
    """Weighted plurality over member label predictions, shape (n_members, n_samples).

    Ties go to the smallest label.
    """
    P = np.atleast_2d(np.asarray(predictions))
    w = np.asarray(weights, dtype=float)
    labels = np.unique(P)  # sorted, so argmax picks the smallest label on ties
    totals = np.stack([(w[:, None] * (P == lab)).sum(axis=0) for lab in labels])
    return labels[np.argmax(totals, axis=0)]


def weighted_mean(predictions, weights) -> np.ndarray:
    P = np.atleast_2d(np.asarray(predictions, dtype=float))
    w = np.asarray(weights, dtype=float)
    return (w / w.sum()) @ P


@dataclass
class EnsembleMember:
    predictor: Any
    weight: float
    config: Any = None


@dataclass
class Ensemble:
    """Weighted collection of trained predictors.

    Classification combines by weighted plurality vote; regression by the
    weight-normalized mean of member predictions.
    """

    members: list = field(default_factory=list)
    task_kind: str = REGRESSION

    def __post_init__(self):
        if self.task_kind not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task kind {self.task_kind!r}")

    def __len__(self):
        return len(self.members)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.members], dtype=float)

    def normalized_weights(self) -> np.ndarray:
        w = self.weights
        return w / w.sum()

    def combine(self, member_predictions) -> np.ndarray:
        """Combine precomputed predictions (one row per member)."""
        if not self.members:
            raise ValueError("empty ensemble")
        if self.task_kind == CLASSIFICATION:
            return weighted_vote(member_predictions, self.weights)
        return weighted_mean(member_predictions, self.weights)

    def predict(self, X) -> np.ndarray:
        if not self.members:
            raise ValueError("empty ensemble")
        return self.combine(np.stack([np.asarray(m.predictor.predict(X)) for m in self.members]))


def ensemble_predict_classification(ensemble: Ensemble, x):
    """Label of a single input ``x`` under the weighted vote."""
    if not ensemble.members:
        raise ValueError("empty ensemble")
    preds = [np.ravel(m.predictor.predict(np.atleast_2d(x)))[0] for m in ensemble.members]
    return weighted_vote(np.array(preds)[:, None], ensemble.weights)[0]


def ensemble_predict_regression(ensemble: Ensemble, x) -> float:
    if not ensemble.members:
        raise ValueError("empty ensemble")
    preds = [float(np.ravel(m.predictor.predict(np.atleast_2d(x)))[0]) for m in ensemble.members]
    return float(weighted_mean(np.array(preds)[:, None], ensemble.weights)[0])
