"""One-species and two-species tropical logistic regression.

Both models fix their centers at Fermat-Weber points and then fit the
dispersion parameters by maximum likelihood.  ``fit_classical_baseline``
is ordinary logistic regression in chart coordinates, for comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import TorusPoint, canonical, trop_distances
from .fermat_weber import FWConfig, fw_solve
from .treeio import Dataset

__all__ = [
    "OneSpeciesModel",
    "TwoSpeciesModel",
    "ClassicalModel",
    "DegenerateCentersError",
    "sigmoid",
    "h_general",
    "h_one_species",
    "h_two_species",
    "decision_function",
    "predict_proba",
    "classify",
    "log_likelihood",
    "fit_one_species",
    "fit_two_species",
    "fit_classical_baseline",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

LAMBDA_BRACKET = (1e-6, 1e6)
CHART = "last coordinate fixed to 0"


class DegenerateCentersError(ValueError):
    """Both class centers coincide; the two-species bisector is undefined."""


def sigmoid(h):
    h = np.asarray(h, dtype=float)
    out = np.empty_like(h)
    pos = h >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-h[pos]))
    z = np.exp(h[~pos])
    out[~pos] = z / (1.0 + z)
    return out if out.ndim else float(out)


def _logit(r):
    if not 0 < r < 1:
        raise ValueError(f"prior must lie in (0, 1), got {r}")
    return math.log(r / (1 - r))


def _log1pexp(h):
    return np.logaddexp(0.0, h)


@dataclass(frozen=True)
class OneSpeciesModel:
    """Shared center, class dispersions sigma0 < sigma1.

    ``swapped`` means the tighter class is label 1, i.e. the decision
    function changes sign.
    """

    omega: TorusPoint
    sigma0: float
    sigma1: float
    swapped: bool = False
    prior: float = 0.5
    leaf_order: Optional[tuple] = None

    def __post_init__(self):
        if not (self.sigma0 > 0 and self.sigma1 > 0):
            raise ValueError("sigmas must be positive")
        if self.sigma0 > self.sigma1:
            raise ValueError("store sigma0 <= sigma1 and use the swapped flag")
        _logit(self.prior)

    @property
    def e(self):
        return self.omega.e

    @property
    def rate(self):
        """1/sigma0 - 1/sigma1."""
        return 1 / self.sigma0 - 1 / self.sigma1

    @property
    def threshold(self):
        """Radius c of the tropical circle where the two class densities agree."""
        s0, s1 = self.sigma0, self.sigma1
        if s1 - s0 <= 1e-12 * s1:
            return (self.e - 1) * s0
        return s0 * s1 * (self.e - 1) * math.log(s1 / s0) / (s1 - s0)

    @property
    def class_sigmas(self):
        """(sigma for label 0, sigma for label 1)."""
        return (self.sigma1, self.sigma0) if self.swapped else (self.sigma0, self.sigma1)


@dataclass(frozen=True)
class TwoSpeciesModel:
    omega0: TorusPoint
    omega1: TorusPoint
    sigma: float
    prior: float = 0.5
    leaf_order: Optional[tuple] = None

    def __post_init__(self):
        if self.omega0.e != self.omega1.e:
            raise ValueError("center dimensions differ")
        if self.omega0 == self.omega1:
            raise DegenerateCentersError("omega0 == omega1; use the one-species model")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        _logit(self.prior)

    @property
    def e(self):
        return self.omega0.e


@dataclass(frozen=True)
class ClassicalModel:
    """Linear logistic model on the first e-1 canonical coordinates."""

    weights: np.ndarray
    intercept: float
    prior: float = 0.5
    leaf_order: Optional[tuple] = None

    @property
    def e(self):
        return len(self.weights) + 1


# ---------------------------------------------------------------------------
# Decision functions


def h_general(x, omega0, omega1, sigma0, sigma1, prior=0.5):
    """Log posterior odds of class 1 for two tropical Laplace classes."""
    if not (sigma0 > 0 and sigma1 > 0):
        raise ValueError("sigmas must be positive")
    e = len(np.asarray(omega0))
    d0 = trop_distances(x, omega0)
    d1 = trop_distances(x, omega1)
    h = d0 / sigma0 - d1 / sigma1 + (e - 1) * math.log(sigma0 / sigma1) + _logit(prior)
    return h if np.ndim(x) > 1 else float(h[0])


def h_one_species(model: OneSpeciesModel, x):
    d = trop_distances(x, model.omega)
    h = model.rate * (d - model.threshold)
    if model.swapped:
        h = -h
    h = h + _logit(model.prior)
    return h if np.ndim(x) > 1 else float(h[0])


def h_two_species(model: TwoSpeciesModel, x):
    h = (trop_distances(x, model.omega0) - trop_distances(x, model.omega1)) / model.sigma
    h = h + _logit(model.prior)
    return h if np.ndim(x) > 1 else float(h[0])


def _h_classical(model: ClassicalModel, x):
    Z = np.atleast_2d(canonical(x))[:, :-1]
    h = Z @ model.weights + model.intercept + _logit(model.prior)
    return h if np.ndim(x) > 1 else float(h[0])


def decision_function(model, x):
    if isinstance(model, OneSpeciesModel):
        return h_one_species(model, x)
    if isinstance(model, TwoSpeciesModel):
        return h_two_species(model, x)
    if isinstance(model, ClassicalModel):
        return _h_classical(model, x)
    raise TypeError(f"unknown model type {type(model).__name__}")


def predict_proba(model, x):
    """Probability of class 1."""
    return sigmoid(decision_function(model, x))


def classify(model, x):
    h = decision_function(model, x)
    return (np.asarray(h) >= 0).astype(int) if np.ndim(h) else int(h >= 0)


def _mean_loglik(h, y):
    # y log p + (1-y) log(1-p) = y h - log(1 + e^h)
    return float(np.mean(y * h - _log1pexp(h)))


def log_likelihood(model, dataset: Dataset) -> float:
    """Mean per-sample Bernoulli log-likelihood."""
    if dataset.n == 0:
        raise ValueError("empty dataset")
    h = np.atleast_1d(decision_function(model, dataset.X))
    return _mean_loglik(h, dataset.y)


# ---------------------------------------------------------------------------
# Fitting


def _check_two_classes(ds: Dataset):
    if ds.n == 0:
        raise ValueError("empty dataset")
    labels = set(np.unique(ds.y).tolist())
    if labels != {0, 1}:
        raise ValueError(f"both labels are needed to fit, found only {sorted(labels)}")


def _prior_value(ds, prior):
    if prior == "empirical":
        return float(ds.y.mean())
    return float(prior)


def _log_bisect(fn, lo, hi, iters=200):
    """Root of a decreasing function of a positive variable, bisected in log space."""
    a, b = math.log(lo), math.log(hi)
    fa = fn(lo)
    if fa <= 0:
        return lo
    if fn(hi) >= 0:
        return hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if fn(math.exp(mid)) > 0:
            a = mid
        else:
            b = mid
        if b - a < 1e-15:
            break
    return math.exp(0.5 * (a + b))


def _newton_logistic(F, y, offset=0.0, ridge=0.0, max_iter=100, tol=1e-10):
    """Maximize mean(y h - log(1+e^h)) - ridge/2 |beta|^2 with h = F beta + offset."""
    n, k = F.shape
    beta = np.zeros(k)

    def objective(b):
        h = F @ b + offset
        return float(np.mean(y * h - _log1pexp(h))) - 0.5 * ridge * float(b @ b)

    cur = objective(beta)
    for _ in range(max_iter):
        p = sigmoid(F @ beta + offset)
        grad = F.T @ (y - p) / n - ridge * beta
        if np.max(np.abs(grad)) < tol:
            break
        W = p * (1 - p)
        H = (F * W[:, None]).T @ F / n + ridge * np.eye(k)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while t > 1e-12:
            cand = beta + t * step
            val = objective(cand)
            if val >= cur - 1e-15:
                break
            t /= 2
        beta, cur = cand, val
    return beta


def fit_one_species(dataset: Dataset, fw_config: FWConfig = FWConfig(), prior=0.5) -> OneSpeciesModel:
    """Shared-center model: FW point of all covariates, then ML dispersions.

    With d = d_tr(x, omega), h = a d + b where a = 1/s0 - 1/s1 and
    b = (e-1) log(s0/s1).  The likelihood is concave in (a, b), so the
    maximizer is found by Newton's method and mapped back to (s0, s1).
    If the unconstrained optimum has no valid (s0, s1), coordinate ascent
    over log(1/s0), log(1/s1) is used instead, starting from the per-class
    Gamma estimates mean(d)/(e-1).
    """
    _check_two_classes(dataset)
    r = _prior_value(dataset, prior)
    X = canonical(dataset.X)
    e = X.shape[1]
    if np.all(X == X[0]):
        raise ValueError("all covariates are identical")
    fw = fw_solve(X, fw_config)
    omega = fw.point
    d = trop_distances(X, omega)
    y = dataset.y.astype(float)
    off = _logit(r)

    a, b = _newton_logistic(np.column_stack([d, np.ones_like(d)]), y, offset=off)
    q = math.exp(b / (e - 1))
    if a != 0 and (1 - q) != 0 and a / (1 - q) > 0:
        lam0 = a / (1 - q)
        lam1 = q * lam0
    else:
        lam0, lam1 = _coordinate_ascent(d, y, e, off)
    lam0 = min(max(lam0, LAMBDA_BRACKET[0]), LAMBDA_BRACKET[1])
    lam1 = min(max(lam1, LAMBDA_BRACKET[0]), LAMBDA_BRACKET[1])
    s0, s1 = 1 / float(lam0), 1 / float(lam1)
    swapped = bool(s0 > s1)
    if swapped:
        s0, s1 = s1, s0
    return OneSpeciesModel(omega, s0, s1, swapped, r, dataset.leaf_order)


def _one_species_partials(lam0, lam1, d, y, e, off):
    h = (lam0 - lam1) * d + (e - 1) * math.log(lam1 / lam0) + off
    res = y - sigmoid(h)
    g0 = float(np.mean(res * (d - (e - 1) / lam0)))
    g1 = float(np.mean(res * ((e - 1) / lam1 - d)))
    return g0, g1


def _coordinate_ascent(d, y, e, off, max_rounds=500):
    lam0 = (e - 1) / max(float(d[y == 0].mean()), 1e-12)
    lam1 = (e - 1) / max(float(d[y == 1].mean()), 1e-12)
    lo, hi = LAMBDA_BRACKET
    for _ in range(max_rounds):
        lam0 = _log_bisect(lambda t: _one_species_partials(t, lam1, d, y, e, off)[0], lo, hi)
        lam1 = _log_bisect(lambda t: _one_species_partials(lam0, t, d, y, e, off)[1], lo, hi)
        g0, g1 = _one_species_partials(lam0, lam1, d, y, e, off)
        if abs(g0) < 1e-10 and abs(g1) < 1e-10:
            break
    return lam0, lam1


def two_species_score(lam, margin, y, off):
    """d/dlambda of the mean log-likelihood for h = lambda * margin + off."""
    return float(np.mean((y - sigmoid(lam * margin + off)) * margin))


def fit_two_species(dataset: Dataset, fw_config: FWConfig = FWConfig(), prior=0.5) -> TwoSpeciesModel:
    """Per-class FW centers, then the shared scale by bisection on the score."""
    _check_two_classes(dataset)
    r = _prior_value(dataset, prior)
    X = canonical(dataset.X)
    y = dataset.y
    omega0 = fw_solve(X[y == 0], fw_config).point
    omega1 = fw_solve(X[y == 1], fw_config).point
    if omega0 == omega1:
        raise DegenerateCentersError("class Fermat-Weber points coincide; use the one-species model")
    margin = trop_distances(X, omega0) - trop_distances(X, omega1)
    off = _logit(r)
    lam = _log_bisect(lambda t: two_species_score(t, margin, y, off), *LAMBDA_BRACKET)
    return TwoSpeciesModel(omega0, omega1, 1 / float(lam), r, dataset.leaf_order)


def fit_classical_baseline(dataset: Dataset, prior=0.5, ridge=1e-6) -> ClassicalModel:
    """Maximum-likelihood logistic regression on chart coordinates."""
    _check_two_classes(dataset)
    r = _prior_value(dataset, prior)
    Z = canonical(dataset.X)[:, :-1]
    F = np.column_stack([Z, np.ones(Z.shape[0])])
    beta = _newton_logistic(F, dataset.y.astype(float), offset=_logit(r), ridge=ridge, max_iter=200, tol=1e-8)
    return ClassicalModel(beta[:-1].copy(), float(beta[-1]), r, dataset.leaf_order)


# ---------------------------------------------------------------------------
# Persistence


def model_to_dict(model) -> dict:
    base = {"chart": CHART, "e": model.e, "prior": model.prior,
            "leaf_order": list(model.leaf_order) if model.leaf_order else None}
    if isinstance(model, OneSpeciesModel):
        base.update(kind="one_species", omega=list(model.omega.coords), sigma0=model.sigma0,
                    sigma1=model.sigma1, swapped=model.swapped)
    elif isinstance(model, TwoSpeciesModel):
        base.update(kind="two_species", omega0=list(model.omega0.coords),
                    omega1=list(model.omega1.coords), sigma=model.sigma)
    elif isinstance(model, ClassicalModel):
        base.update(kind="classical", weights=[float(w) for w in model.weights], intercept=model.intercept)
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    return base


def model_from_dict(d: dict):
    kind = d.get("kind")
    order = tuple(d["leaf_order"]) if d.get("leaf_order") else None
    if kind == "one_species":
        return OneSpeciesModel(TorusPoint(tuple(d["omega"])), d["sigma0"], d["sigma1"],
                               bool(d["swapped"]), d["prior"], order)
    if kind == "two_species":
        return TwoSpeciesModel(TorusPoint(tuple(d["omega0"])), TorusPoint(tuple(d["omega1"])),
                               d["sigma"], d["prior"], order)
    if kind == "classical":
        return ClassicalModel(np.array(d["weights"], dtype=float), d["intercept"], d["prior"], order)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, fh) -> None:
    json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
    fh.write("\n")


def load_model(fh):
    return model_from_dict(json.load(fh))
