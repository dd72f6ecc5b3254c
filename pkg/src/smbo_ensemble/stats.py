"""Comparing methods across datasets: ranks, win frequencies, sign and PB tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

PB_SIGNIFICANT = 0.8
PB_HIGHLY_SIGNIFICANT = 0.9
SIGN_SIGNIFICANT = 0.1
SIGN_HIGHLY_SIGNIFICANT = 0.05
WINDOW = 15


@dataclass(frozen=True, eq=False)
class RiskTable:
    """Test risks, one row per method and one column per dataset.

    Parameters
    ----------
    risks : array of shape (K, L)
    methods : sequence of str, optional
    datasets : sequence of str, optional
    """

    risks: np.ndarray
    methods: tuple = ()
    datasets: tuple = ()

    def __post_init__(self):
        risks = np.array(self.risks, dtype=float)
        if risks.ndim != 2 or risks.shape[0] < 1 or risks.shape[1] < 1:
            raise ValueError("risks must be a non-empty (methods x datasets) matrix")
        if not np.all(np.isfinite(risks)):
            raise ValueError("risks must be finite")
        risks.setflags(write=False)
        K, L = risks.shape
        methods = tuple(self.methods) or tuple(f"m{i}" for i in range(K))
        datasets = tuple(self.datasets) or tuple(f"d{j}" for j in range(L))
        if len(methods) != K or len(datasets) != L:
            raise ValueError("need one name per method row and per dataset column")
        object.__setattr__(self, "risks", risks)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "datasets", datasets)

    @property
    def n_methods(self) -> int:
        return self.risks.shape[0]

    @property
    def n_datasets(self) -> int:
        return self.risks.shape[1]


def _as_table(table) -> RiskTable:
    return table if isinstance(table, RiskTable) else RiskTable(table)


def rank_on_dataset(risks) -> np.ndarray:
    """Rank of each method on one dataset: the number of methods with risk <= its own.

    The best method gets 1; tied methods share the larger rank.
    """
    r = np.asarray(risks, dtype=float).ravel()
    return (r[None, :] <= r[:, None]).sum(axis=1)


def expected_rank(table) -> np.ndarray:
    """Mean rank of each method over the datasets."""
    t = _as_table(table)
    return np.mean([rank_on_dataset(t.risks[:, j]) for j in range(t.n_datasets)], axis=0)


def _record(table, i, l):
    t = _as_table(table)
    a, b = t.risks[i], t.risks[l]
    return int((a < b).sum()), int((a > b).sum()), int((a == b).sum())


def win_frequency(table, i: int, l: int) -> float:
    """Fraction of datasets where method ``i`` has lower risk than ``l``; ties count one half."""
    wins, _, ties = _record(table, i, l)
    return (wins + 0.5 * ties) / _as_table(table).n_datasets


def win_frequency_matrix(table) -> np.ndarray:
    t = _as_table(table)
    a = t.risks[:, None, :]
    b = t.risks[None, :, :]
    return ((a < b).sum(axis=2) + 0.5 * (a == b).sum(axis=2)) / t.n_datasets


def sign_test(table, i: int, l: int) -> float:
    """One-sided sign test p-value for "``i`` beats ``l``".

    Tied datasets are discarded. With ``w`` wins among ``n`` untied datasets,
    ``p = sum_{k >= w} C(n, k) / 2^n``. No untied datasets gives p = 1.
    """
    wins, losses, _ = _record(table, i, l)
    n = wins + losses
    if n == 0:
        return 1.0
    return math.fsum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0**n


def pb_test(table, i: int, l: int) -> float:
    """Posterior probability that ``i`` beats ``l`` more often than not.

    The pairwise win probability gets a uniform prior and a Beta posterior
    with ``1 + wins + ties/2`` and ``1 + losses + ties/2``; the mass above 1/2
    is returned.
    """
    wins, losses, ties = _record(table, i, l)
    a = 1.0 + wins + 0.5 * ties
    b = 1.0 + losses + 0.5 * ties
    # P(X > 1/2) for X ~ Beta(a, b) equals I_{1/2}(b, a)
    return float(betainc(b, a, 0.5))


def significance(pb: float, sign_p: float) -> tuple[int, int]:
    """Significance levels (0, 1 or 2) for the PB probability and the sign-test p-value."""
    pb_level = 2 if pb > PB_HIGHLY_SIGNIFICANT else 1 if pb > PB_SIGNIFICANT else 0
    sign_level = 2 if sign_p < SIGN_HIGHLY_SIGNIFICANT else 1 if sign_p < SIGN_SIGNIFICANT else 0
    return pb_level, sign_level


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Pairwise comparison of K methods.

    Attributes
    ----------
    methods : tuple of str
    expected_ranks : array of shape (K,)
    win_freq : array of shape (K, K)
        ``win_freq[i, l]`` is the win frequency of row method over column method.
    pb_prob : array of shape (K, K)
    sign_p : array of shape (K, K)
    pb_level, sign_level : int arrays of shape (K, K)
        0 = not significant, 1 = significant, 2 = highly significant.
    n_datasets : int
    """

    methods: tuple
    expected_ranks: np.ndarray
    win_freq: np.ndarray
    pb_prob: np.ndarray
    sign_p: np.ndarray
    pb_level: np.ndarray
    sign_level: np.ndarray
    n_datasets: int

    def order(self) -> np.ndarray:
        """Method indices by expected rank (ties keep the input order)."""
        return np.argsort(self.expected_ranks, kind="stable")


def compare(table) -> ComparisonReport:
    t = _as_table(table)
    K = t.n_methods
    pb = np.full((K, K), 0.5)
    sp = np.ones((K, K))
    for i in range(K):
        for l in range(K):
            if i != l:
                pb[i, l] = pb_test(t, i, l)
                sp[i, l] = sign_test(t, i, l)
    levels = [significance(pb[i, l], sp[i, l]) if i != l else (0, 0) for i in range(K) for l in range(K)]
    pb_level = np.array([a for a, _ in levels], dtype=int).reshape(K, K)
    sign_level = np.array([b for _, b in levels], dtype=int).reshape(K, K)
    return ComparisonReport(t.methods, expected_rank(t), win_frequency_matrix(t), pb, sp,
                            pb_level, sign_level, t.n_datasets)


def smoothed_series(values, window: int = WINDOW) -> np.ndarray:
    """Trailing moving average along the first axis, truncated at the start.

    Entry ``t`` is the mean of ``values[max(0, t - window + 1) : t + 1]``.
    Works on any array whose first axis is the iteration.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    for t in range(v.shape[0]):
        out[t] = v[max(0, t - window + 1) : t + 1].mean(axis=0)
    return out


def smoothed_reports(tables: Sequence, window: int = WINDOW) -> dict:
    """Per-iteration expected ranks and win frequencies, smoothed over ``window`` iterations.

    ``tables[k]`` is the :class:`RiskTable` at iteration ``k + 1``.
    """
    reports = [compare(t) for t in tables]
    return {
        "expected_ranks": smoothed_series(np.stack([r.expected_ranks for r in reports]), window),
        "win_freq": smoothed_series(np.stack([r.win_freq for r in reports]), window),
    }
