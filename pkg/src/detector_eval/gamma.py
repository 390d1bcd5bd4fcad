"""Regularized lower incomplete gamma function P(a, x).

Power series below x = a + 1, modified Lentz continued fraction for Q above.
Both converge to double precision for the shape range the attack-cost curve
uses (a in roughly [2, 1e3]).
"""

from __future__ import annotations

import math

EPS = 1e-16
TINY = 1e-300
MAX_ITER = 10_000


def _series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPS:
            break
    else:
        raise ArithmeticError(f"series for P({a}, {x}) did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _continued_fraction(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < TINY:
            d = TINY
        c = b + an / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            break
    else:
        raise ArithmeticError(f"continued fraction for Q({a}, {x}) did not converge")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Return P(a, x) = γ(a, x) / Γ(a) for a > 0, x >= 0."""
    if a <= 0:
        raise ValueError(f"shape must be positive, got {a}")
    if x < 0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _series(a, x))
    return max(0.0, 1.0 - _continued_fraction(a, x))


def gamma_density(s: float, alpha: float, beta: float) -> float:
    """Gamma(alpha, rate=beta) density, the derivative of P(alpha, beta*s)."""
    if s <= 0:
        return 0.0
    return math.exp(alpha * math.log(beta) - math.lgamma(alpha) + (alpha - 1.0) * math.log(s) - beta * s)
