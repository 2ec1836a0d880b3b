"""Tropical Fermat-Weber points.

The objective f(w) = sum_i d_tr(X_i, w) is convex and piecewise linear.
Where every residual w - X_i has a unique largest and a unique smallest
coordinate, f is differentiable and its gradient is an integer vector
(counts of argmax minus counts of argmin).  A zero integer gradient
certifies a global minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from ._rng import stream
from .core import TorusPoint, canonical, trop_distances

__all__ = [
    "FWConfig",
    "FWResult",
    "GradientUndefined",
    "fw_objective",
    "integer_gradient",
    "fw_solve",
    "fw_brute_force",
]

TIE_TOL = 1e-9


@dataclass(frozen=True)
class FWConfig:
    """Solver settings.

    ``step0=None`` picks a tenth of the median pairwise tropical distance.
    Steps follow step0/sqrt(t) inside an epoch; each new epoch continues
    with half the initial step, until the step drops below ``tol`` or
    ``max_iters`` is reached.  ``smooth_levels`` log-sum-exp smoothings
    (temperatures from 1e-2 down by factors of 10, relative to the data
    scale) are then minimized by L-BFGS from the best point so far.
    """

    step0: Optional[float] = None
    max_iters: int = 3000
    tol: float = 1e-10
    epoch: int = 100
    smooth_levels: int = 7
    certify_tries: int = 64
    seed: int = 0


@dataclass
class FWResult:
    point: TorusPoint
    objective: float
    certified: bool
    iterations: int
    final_gradient: Optional[np.ndarray] = None
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class GradientUndefined:
    """Returned by :func:`integer_gradient` where f has no gradient."""

    samples: tuple

    def __bool__(self):
        return False


def _as_array(points):
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[0] == 0 or X.size == 0:
        raise ValueError("no points given")
    return X


def fw_objective(points, omega) -> float:
    X = _as_array(points)
    return float(trop_distances(X, omega).sum())


def _strict_extrema(R, tol):
    """Argmax/argmin per row plus a mask of rows where both are unique."""
    hi = R.argmax(axis=1)
    lo = R.argmin(axis=1)
    rows = np.arange(R.shape[0])
    top = R[rows, hi]
    bot = R[rows, lo]
    n_top = (R >= top[:, None] - tol).sum(axis=1)
    n_bot = (R <= bot[:, None] + tol).sum(axis=1)
    return hi, lo, (n_top == 1) & (n_bot == 1)


def integer_gradient(points, omega, tol: float = 0.0):
    """Exact gradient of the Fermat-Weber objective at ``omega``.

    Returns an integer vector (length e, summing to 0), or a falsy
    :class:`GradientUndefined` listing the samples whose residual has a
    tied maximum or minimum.  ``tol`` treats near-equal coordinates as tied.
    """
    X = _as_array(points)
    R = np.asarray(omega, dtype=float) - X
    hi, lo, ok = _strict_extrema(R, tol)
    if not ok.all():
        return GradientUndefined(tuple(np.flatnonzero(~ok).tolist()))
    e = X.shape[1]
    return np.bincount(hi, minlength=e) - np.bincount(lo, minlength=e)


def _subgradient(X, w):
    R = w - X
    e = X.shape[1]
    return (np.bincount(R.argmax(axis=1), minlength=e)
            - np.bincount(R.argmin(axis=1), minlength=e)).astype(float)


def _default_step(X, rng):
    n = X.shape[0]
    if n == 1:
        return 1.0
    k = min(n, 200)
    idx = rng.choice(n, size=k, replace=False) if n > k else np.arange(n)
    S = X[idx]
    d = np.concatenate([trop_distances(S[i + 1:], S[i]) for i in range(k - 1)])
    med = float(np.median(d))
    return med / 10 if med > 0 else 1.0


def fw_solve(points, config: FWConfig = FWConfig()) -> FWResult:
    """Subgradient descent for a Fermat-Weber point, then try to certify it."""
    X = canonical(_as_array(points))
    n, e = X.shape
    if e < 2:
        raise ValueError("need dimension e >= 2")
    rng = stream(config.seed, "fw")
    w = np.median(X, axis=0)
    w = w - w[-1]
    best_w = w.copy()
    best_f = float(trop_distances(X, w).sum())
    history = [best_f]
    step0 = config.step0 if config.step0 is not None else _default_step(X, rng)
    scale = 10 * step0
    it = 0
    while it < config.max_iters and step0 > config.tol and best_f > 0:
        for t in range(1, config.epoch + 1):
            g = _subgradient(X, w)
            g -= g.mean()
            norm = math.sqrt(float(g @ g))
            it += 1
            if norm == 0.0:
                break
            w = w - (step0 / math.sqrt(t)) * g / norm
            w -= w[-1]
            f = float(trop_distances(X, w).sum())
            if f < best_f:
                best_f, best_w = f, w.copy()
            history.append(best_f)
            if it >= config.max_iters:
                break
        step0 /= 2
    for level in range(config.smooth_levels):
        if best_f == 0:
            break
        w = _smoothed_min(X, best_w, scale * 10.0 ** (-2 - level))
        f = float(trop_distances(X, w).sum())
        if f < best_f:
            best_f, best_w = f, w
        history.append(best_f)
    point, grad, f = _certify(X, best_w, best_f, config, rng)
    return FWResult(
        point=TorusPoint(tuple(point.tolist())),
        objective=f,
        certified=grad is not None,
        iterations=it,
        final_gradient=grad,
        history=history,
    )


def _smoothed_min(X, w0, mu):
    """L-BFGS on sum_i mu*(LSE((w - X_i)/mu) + LSE((X_i - w)/mu)), last coordinate fixed."""

    def fun(z):
        w = np.append(z, 0.0)
        R = (w - X) / mu
        hi = R.max(axis=1, keepdims=True)
        lo = R.min(axis=1, keepdims=True)
        Eh = np.exp(R - hi)
        El = np.exp(lo - R)
        sh = Eh.sum(axis=1, keepdims=True)
        sl = El.sum(axis=1, keepdims=True)
        val = mu * float((hi - lo + np.log(sh) + np.log(sl)).sum())
        grad = (Eh / sh - El / sl).sum(axis=0)
        return val, grad[:-1]

    res = minimize(fun, w0[:-1], jac=True, method="L-BFGS-B",
                   options={"maxiter": 500, "gtol": 1e-12, "ftol": 1e-15})
    return np.append(res.x, 0.0)


def _certify(X, w, f, config, rng):
    """Look for a zero integer gradient at or near the incumbent.

    Convexity makes any point with zero gradient a global minimizer, so a
    nearby certified point with no larger objective replaces the incumbent.
    """
    g = integer_gradient(X, w, tol=TIE_TOL)
    if not isinstance(g, GradientUndefined) and not g.any():
        return w, g, f
    scale = max(float(np.abs(X).max()), 1.0)
    for k in range(config.certify_tries):
        r = scale * 10.0 ** (-3 - 5 * k / max(config.certify_tries - 1, 1))
        cand = w + rng.uniform(-r, r, size=w.shape)
        cand -= cand[-1]
        g = integer_gradient(X, cand, tol=TIE_TOL)
        if isinstance(g, GradientUndefined) or g.any():
            continue
        fc = float(trop_distances(X, cand).sum())
        if fc <= f + 1e-12 * max(1.0, f):
            return cand, g, fc
    return w, None, f


def fw_brute_force(points, bounds=None, grid_step: float = 0.01):
    """Exhaustive grid minimizer for e = 3 (a 2-D chart); test oracle only.

    ``bounds`` is ``(lo, hi)`` applied to both chart coordinates, default
    the data range.
    """
    X = canonical(_as_array(points))
    if X.shape[1] != 3:
        raise ValueError("brute force oracle needs e = 3")
    if bounds is None:
        lo, hi = float(X[:, :2].min()), float(X[:, :2].max())
    else:
        lo, hi = bounds
    ticks = np.arange(lo, hi + grid_step / 2, grid_step)
    ticks = np.union1d(ticks, np.unique(X[:, :2]))
    a, b = np.meshgrid(ticks, ticks, indexing="ij")
    G = np.stack([a.ravel(), b.ravel(), np.zeros(a.size)], axis=1)
    total = np.zeros(G.shape[0])
    for x in X:
        D = G - x
        total += D.max(axis=1) - D.min(axis=1)
    k = int(total.argmin())
    return TorusPoint(tuple(G[k].tolist())), float(total[k])
