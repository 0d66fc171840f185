"""Scalar statistical primitives used throughout the finite-size analysis.

Everything in this module is a pure function of floats.  The heavier
machinery (channel model, decoy estimators, security bounds) builds on
these, so they are kept dependency-free and individually testable.
"""

from __future__ import annotations

import math

__all__ = [
    "binary_entropy",
    "binary_entropy_inverse",
    "hoeffding_delta",
    "serfling_error_upper",
    "gamma_correction",
]

_INV_TOL = 1e-13


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy h(x) = -x log2 x - (1-x) log2 (1-x).

    Defined on [0, 1] with h(0) = h(1) = 0 by continuity.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary_entropy argument must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def binary_entropy_inverse(y: float) -> float:
    """Inverse of h on the increasing branch [0, 1/2].

    Solved by bisection; h is strictly increasing on [0, 1/2] so the
    root is unique.  The result satisfies |h(x) - y| at machine-level
    tolerance (the interval is shrunk below 1e-13).
    """
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"binary_entropy_inverse argument must lie in [0, 1], got {y}")
    if y == 0.0:
        return 0.0
    if y == 1.0:
        return 0.5
    lo, hi = 0.0, 0.5
    while hi - lo > _INV_TOL:
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def hoeffding_delta(n: float, eps: float) -> float:
    """Hoeffding deviation sqrt(n/2 * ln(1/eps)) for a sum of n binary trials.

    Used to turn an observed count into a one-sided bound that fails with
    probability at most ``eps``.  Zero when n = 0 or eps = 1.
    """
    if n < 0:
        raise ValueError(f"trial count must be non-negative, got {n}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"failure probability must lie in (0, 1], got {eps}")
    return math.sqrt(0.5 * n * math.log(1.0 / eps))


def serfling_error_upper(e_obs: float, L: int, k: int, eps_pe: float) -> float:
    """Upper bound on the error rate of an L-bit block from a k-bit test sample.

    Lifts the observed test error rate ``e_obs`` to a bound on the rate of
    the remaining, undisclosed half of the block using a tail bound for
    sampling without replacement:

        E_U = e_obs + (2/L) * sqrt( (L/2 + 1)(L/2 + k) / (2k) * ln(1/eps_pe) )

    The result is clamped to 1.  With eps_pe = 1 the correction vanishes
    and the bound collapses to the observation.
    """
    if k < 1:
        raise ValueError(f"test sample size must be at least 1, got {k}")
    if L < 2:
        raise ValueError(f"block length must be at least 2, got {L}")
    if not 0.0 <= e_obs <= 1.0:
        raise ValueError(f"observed error rate must lie in [0, 1], got {e_obs}")
    if not 0.0 < eps_pe <= 1.0:
        raise ValueError(f"failure probability must lie in (0, 1], got {eps_pe}")
    half = L / 2.0
    corr = (2.0 / L) * math.sqrt((half + 1.0) * (half + k) / (2.0 * k) * math.log(1.0 / eps_pe))
    return min(1.0, e_obs + corr)


def gamma_correction(a: float, b: float, c: float, d: float) -> float:
    """Finite-size penalty for carrying a rate observed on c trials over to d trials.

    gamma(a, b, c, d) = sqrt( (c+d)(1-b)b / (c d ln 2)
                              * log2( (c+d) / (c d (1-b) b) * (21/a)^2 ) )

    where ``b`` is the observed rate, ``c`` and ``d`` the two sample sizes
    and ``a`` the allowed failure probability.  Symmetric in (c, d).  The
    endpoints b = 0 and b = 1 are rejected rather than patched by
    continuity; callers handle those degenerate cases explicitly.
    """
    if not 0.0 < a <= 1.0:
        raise ValueError(f"failure probability must lie in (0, 1], got {a}")
    if not 0.0 < b < 1.0:
        raise ValueError(f"rate must lie strictly inside (0, 1), got {b}")
    if c <= 0 or d <= 0:
        raise ValueError(f"sample sizes must be positive, got c={c}, d={d}")
    front = (c + d) * (1.0 - b) * b / (c * d * math.log(2.0))
    inner = (c + d) / (c * d * (1.0 - b) * b) * (21.0 / a) ** 2
    return math.sqrt(front * math.log2(inner))
