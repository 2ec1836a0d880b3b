"""ROC/AUC, misclassification, generalization-error formulas and the
radius-law goodness-of-fit diagnostic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._gamma import gamma_p, gamma_q
from .core import trop_distances
from .regression import classify
from .sampling import radius_cdf
from .treeio import Dataset

__all__ = [
    "RocCurve",
    "roc_and_auc",
    "auc_pairwise",
    "misclassification_rate",
    "class_error_rates",
    "one_species_alpha",
    "one_species_error",
    "two_species_upper_bound",
    "GammaFit",
    "gamma_fit_diagnostic",
]


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def _labels_scores(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).astype(int).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("both classes must be present")
    return s, y


def _average_ranks(s):
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(len(s))
    # 1-based ranks, ties get the mean rank of their block
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_s)) + 1]
    ends = np.r_[starts[1:], len(s)]
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + b + 1)
    return ranks


def roc_and_auc(scores, labels) -> RocCurve:
    """ROC curve over the distinct score thresholds and the Mann-Whitney AUC."""
    s, y = _labels_scores(scores, labels)
    n1 = int(y.sum())
    n0 = len(y) - n1
    ranks = _average_ranks(s)
    auc = (ranks[y == 1].sum() - n1 * (n1 + 1) / 2) / (n0 * n1)

    thr = np.unique(s)[::-1]
    order = np.argsort(-s, kind="mergesort")
    ss, yy = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(ss)), len(ss) - 1]
    tp = np.cumsum(yy)[last]
    fp = np.cumsum(1 - yy)[last]
    tpr = np.r_[0.0, tp / n1]
    fpr = np.r_[0.0, fp / n0]
    thresholds = np.r_[np.inf, thr]
    return RocCurve(thresholds, fpr, tpr, float(auc))


def auc_pairwise(scores, labels) -> float:
    """O(n^2) pair count; ties count one half."""
    s, y = _labels_scores(scores, labels)
    pos = s[y == 1][:, None]
    neg = s[y == 0][None, :]
    return float(((pos > neg).sum() + 0.5 * (pos == neg).sum()) / (pos.size * neg.size))


def misclassification_rate(model, dataset: Dataset) -> float:
    if dataset.n == 0:
        raise ValueError("empty dataset")
    return float(np.mean(np.atleast_1d(classify(model, dataset.X)) != dataset.y))


def class_error_rates(model, dataset: Dataset):
    """(P(C=1 | Y=0), P(C=0 | Y=1)) estimated on ``dataset``."""
    c = np.atleast_1d(classify(model, dataset.X))
    y = dataset.y
    return float(np.mean(c[y == 0] == 1)), float(np.mean(c[y == 1] == 0))


# ---------------------------------------------------------------------------
# Generalization error


def one_species_alpha(e, sigma0, sigma1):
    return (e - 1) * math.log(sigma1 / sigma0) / (sigma1 - sigma0)


def one_species_error(e, sigma0, sigma1, epsilon=0.0):
    """Intervals for the class-conditional error rates of the one-species model.

    Returns ``(class0_interval, class1_interval, mean_interval)``, where
    class 0 is the tighter class and F is the Gamma(e-1, 1) CDF.  With
    ``epsilon = 0`` every interval collapses to a point.
    """
    if not 0 < sigma0 < sigma1:
        raise ValueError("need 0 < sigma0 < sigma1")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    n = e - 1
    alpha = one_species_alpha(e, sigma0, sigma1)

    def F(x):
        return gamma_p(n, x) if x > 0 else 0.0

    def Fc(x):
        return gamma_q(n, x) if x > 0 else 1.0

    c0 = (Fc(sigma1 * (alpha + epsilon)), Fc(sigma1 * (alpha - epsilon)))
    c1 = (F(sigma0 * (alpha - epsilon)), F(sigma0 * (alpha + epsilon)))
    mean = (0.5 * (c0[0] + c1[0]), 0.5 * (c0[1] + c1[1]))
    return c0, c1, mean


def two_species_upper_bound(e, d_centers, sigma):
    """Q(e-1, d/(2 sigma)) / 2: error bound with exact centers."""
    if e < 3 or d_centers < 0 or not sigma > 0:
        raise ValueError("need e >= 3, d_centers >= 0, sigma > 0")
    return 0.5 * gamma_q(e - 1, d_centers / (2 * sigma))


# ---------------------------------------------------------------------------
# Radius-law diagnostic


@dataclass(frozen=True)
class GammaFit:
    sigma_hat: float
    ks_statistic: float
    pp_points: np.ndarray  # columns: theoretical CDF, empirical CDF
    distances: np.ndarray


def gamma_fit_diagnostic(X, center, geometry="tropical", law="laplace") -> GammaFit:
    """Fit the radius law d^i ~ i sigma^i Gamma(n/i) to distances from ``center``.

    ``geometry`` is "tropical" (n = e-1) or "euclidean" (n = e, distances
    between the coordinates as given); ``law`` is "laplace" (i = 1) or
    "gaussian" (i = 2).  sigma_hat solves sigma^i = mean(d^i) / n.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    e = X.shape[1]
    c = np.asarray(center, dtype=float)
    if geometry == "tropical":
        d = trop_distances(X, c)
        n = e - 1
    elif geometry == "euclidean":
        d = np.linalg.norm(X - c, axis=1)
        n = e
    else:
        raise ValueError(f"unknown geometry {geometry!r}")
    i = {"laplace": 1, "gaussian": 2}.get(law)
    if i is None:
        raise ValueError(f"unknown law {law!r}")
    sigma_hat = (float(np.mean(d**i)) / n) ** (1 / i)
    ds = np.sort(d)
    k = len(ds)
    if sigma_hat <= 0:
        return GammaFit(sigma_hat, 1.0, np.zeros((0, 2)), d)
    theo = np.array([radius_cdf(e, i, sigma_hat, t, euclidean=geometry == "euclidean") for t in ds])
    if k == 1:
        ks = 1.0
    else:
        upper = np.arange(1, k + 1) / k
        lower = np.arange(0, k) / k
        ks = float(max(np.max(upper - theo), np.max(theo - lower)))
    pp = np.column_stack([theo, (np.arange(1, k + 1) - 0.5) / k])
    return GammaFit(sigma_hat, ks, pp, d)
