"""Closed-form constants entering the confidence widths.

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .space import SpaceSpec, beta, is_hilbert

# Minsker's tuning for geometric median-of-means
GMOM_ALPHA = 7.0 / 18.0
GMOM_GAMMA = 0.1


@dataclass(frozen=True)
class MomentAssumption:
    """Bound ``v`` on the conditional p-th moment, 1 < p <= 2.

    ``central=True`` bounds E||X - mu||^p; ``central=False`` bounds the raw
    moment E||X||^p. Moment orders above 2 go through :func:`reduce_big_p`.
    """

    p: float
    v: float
    central: bool = True

    def __post_init__(self):
        if not (1.0 < self.p <= 2.0):
            raise ValueError(f"p must lie in (1, 2], got {self.p!r}; use reduce_big_p for p > 2")
        if not (math.isfinite(self.v) and self.v > 0):
            raise ValueError(f"v must be positive and finite, got {self.v!r}")


def _check_p(p: float) -> float:
    p = float(p)
    if not (1.0 < p <= 2.0):
        raise ValueError(f"p must lie in (1, 2], got {p!r}")
    return p


def holder_conjugate(p: float) -> float:
    if not p > 1:
        raise ValueError(f"Holder conjugate needs p > 1, got {p!r}")
    return p / (p - 1.0)


def k_p(p: float) -> float:
    """Truncation-bias constant K_p = (1/(s+1)) (s/(s+1))^s with s = p/q = p - 1."""
    p = _check_p(p)
    s = p / holder_conjugate(p)
    return (s / (s + 1.0)) ** s / (s + 1.0)


def _bennett_factor(rho: float) -> float:
    """(e^{2 rho} - 2 rho - 1) / (2 rho)^2, accurate for small rho too."""
    x = 2.0 * rho
    if x < 1e-3:
        return 0.5 + x / 6.0 + x * x / 24.0 + x**3 / 120.0
    return (math.expm1(x) - x) / (x * x)


def frak_c(space: SpaceSpec, p: float, rho: float | None = None) -> float:
    """Space constant C_p(B, rho); ``rho`` defaults to 1/beta."""
    p = _check_p(p)
    if rho is None:
        rho = 1.0 / beta(space)
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    scale = 2.0 ** (p - 1.0) if is_hilbert(space) else 2.0 ** (p + 1.0)
    return scale * _bennett_factor(rho)


def c_p_combined(space: SpaceSpec, p: float) -> float:
    """C_p = C_p(B) + K_p 2^{p-1} / beta."""
    return frak_c(space, p) + k_p(p) * 2.0 ** (p - 1.0) / beta(space)


def width_constant(space: SpaceSpec, p: float, rho: float | None = None) -> float:
    """rho beta^2 C_p(B, rho) + K_p 2^{p-1}; equals beta * C_p at rho = 1/beta."""
    b = beta(space)
    if rho is None:
        rho = 1.0 / b
    return rho * b * b * frak_c(space, p, rho) + k_p(p) * 2.0 ** (p - 1.0)


def frak_b(space: SpaceSpec, p: float) -> float:
    """Stitching prefactor [2^{(p-1)/p} + 2^{1/p}] (beta C_p(B) + K_p 2^{p-1})^{1/p}."""
    p = _check_p(p)
    pre = 2.0 ** ((p - 1.0) / p) + 2.0 ** (1.0 / p)
    return pre * (beta(space) * frak_c(space, p) + k_p(p) * 2.0 ** (p - 1.0)) ** (1.0 / p)


def psi(alpha: float, gamma: float) -> float:
    """Bernoulli KL divergence KL(alpha || gamma), for 0 < gamma < alpha < 1/2."""
    if not (0.0 < gamma < alpha < 0.5):
        raise ValueError(f"need 0 < gamma < alpha < 1/2, got alpha={alpha!r}, gamma={gamma!r}")
    return (1.0 - alpha) * math.log((1.0 - alpha) / (1.0 - gamma)) + alpha * math.log(alpha / gamma)


def c_alpha(alpha: float) -> float:
    if not (0.0 < alpha < 0.5):
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha!r}")
    return 2.0 * (1.0 - alpha) / (1.0 - 2.0 * alpha)


def reduce_big_p(p: float, v: float, central: bool = True) -> MomentAssumption:
    """Trade a p-th moment bound (p > 2) for the second-moment bound v^{2/p} (Jensen)."""
    if not p > 2:
        raise ValueError(f"reduce_big_p needs p > 2, got {p!r}")
    if not (math.isfinite(v) and v > 0):
        raise ValueError(f"v must be positive and finite, got {v!r}")
    return MomentAssumption(2.0, v ** (2.0 / p), central)
