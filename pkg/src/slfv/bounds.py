"""Analytical lower bounds on the expansion speed.

Both bounds are exact finite sums over the atoms of the shape distribution:

* deterministic bound  ``(C/2) E[w] E[wh]``
* shape-stochastic bound ``(C/2) E[w^2 h]``
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .events import ShapeAtom, ShapeDistribution


@dataclass(frozen=True)
class SpeedBounds:
    gamma_determ: float
    gamma_lb_sto: float


def gamma_determ(mu: ShapeDistribution, C: float) -> float:
    if C <= 0:
        raise ValueError("C must be positive")
    return 0.5 * C * mu.moment(1, 0) * mu.moment(1, 1)


def gamma_lb_sto(mu: ShapeDistribution, C: float) -> float:
    if C <= 0:
        raise ValueError("C must be positive")
    return 0.5 * C * mu.moment(2, 1)


def speed_bounds(mu: ShapeDistribution, C: float) -> SpeedBounds:
    return SpeedBounds(gamma_determ(mu, C), gamma_lb_sto(mu, C))


def extreme_family(n: int) -> tuple[ShapeDistribution, float]:
    """Two-atom law with atoms ``(1/n, 1)`` and ``(n, 1)`` of weights ``n/(n+1)``, ``1/(n+1)``.

    It satisfies ``E[w] E[wh] = 1`` for every ``n`` while its stochastic bound
    at ``C = 1``, ``(1 + n^3) / (2n(n+1))``, grows without limit.

    Returns
    -------
    mu : ShapeDistribution
    speed : float
        ``gamma_lb_sto(mu, 1)``.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    p = Fraction(n, n + 1)
    mu = ShapeDistribution((ShapeAtom(1 / n, 1.0, float(p)), ShapeAtom(float(n), 1.0, float(1 - p))))
    norm = mu.moment(1, 0) * mu.moment(1, 1)
    if abs(norm - 1.0) > 1e-12:
        raise ArithmeticError(f"normalisation E[w]E[wh] = {norm!r} != 1")
    return mu, gamma_lb_sto(mu, 1.0)


def extreme_family_speed_exact(n: int) -> Fraction:
    return Fraction(1 + n**3, 2 * n * (n + 1))
