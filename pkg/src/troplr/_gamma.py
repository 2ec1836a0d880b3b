"""Regularized incomplete gamma for integer and half-integer shapes.

Those are the only shapes that occur here: radii follow Gamma(n/i) with
i in {1, 2}.  Integer shapes use the finite Poisson sum; half-integer
shapes use the erfc recurrence.  A power series covers the lower tail,
where 1 - Q would cancel.
"""

import math


def _check_shape(a):
    twice = 2 * a
    if a <= 0 or twice != int(twice):
        raise ValueError(f"shape must be a positive integer or half-integer, got {a}")


def _lower_series(a, x):
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_k x^k / ((a+1)...(a+k))
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= x / (a + k)
        total += term
        if term < total * 1e-17:
            break
    return math.exp(a * math.log(x) - x - math.lgamma(a + 1)) * total


def _upper_finite(a, x):
    if a == int(a):
        n = int(a)
        term = 1.0
        total = 1.0
        for k in range(1, n):
            term *= x / k
            total += term
        return math.exp(-x) * total
    # Q(k + 1/2, x) = erfc(sqrt x) + e^-x sum_{j<k} x^(j+1/2) / Gamma(j + 3/2)
    k = int(a - 0.5)
    total = 0.0
    if k:
        term = math.sqrt(x) / math.gamma(1.5)
        total = term
        for j in range(1, k):
            term *= x / (j + 0.5)
            total += term
    return math.erfc(math.sqrt(x)) + math.exp(-x) * total


def gamma_p(a, x):
    """Regularized lower incomplete gamma P(a, x)."""
    _check_shape(a)
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1:
        return min(1.0, _lower_series(a, x))
    return 1.0 - _upper_finite(a, x)


def gamma_q(a, x):
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    _check_shape(a)
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1:
        return 1.0 - min(1.0, _lower_series(a, x))
    return _upper_finite(a, x)
