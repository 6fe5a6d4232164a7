"""Closed-form confidence widths and the e-process diagnostic.

Widths bound ||mu_hat - mu|| with the stated probability. The line-crossing
width holds simultaneously for every n > k; the stitched width holds for
every n >= n0 with a truncation level that changes per epoch.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constants import MomentAssumption, frak_b, frak_c, k_p, width_constant
from .estimators import gmom_block_count, k_schedule_linear, stitch_n0
from .truncation import clip_coeffs
from .space import SpaceSpec, as_rows, as_vec, beta, row_norms


@dataclass(frozen=True)
class BoundQuery:
    """Inputs shared by the width formulas.

    ``rho`` defaults to 1/beta. ``lam`` is only read by
    :func:`line_crossing_width` when no explicit level is passed.
    """

    n: int
    k: int = 0
    delta1: float = 0.025
    delta2: float = 0.025
    rho: float | None = None
    lam: float | None = None

    def __post_init__(self):
        if not (0.0 < self.delta1 < 1.0):
            raise ValueError(f"delta1 must lie in (0, 1), got {self.delta1!r}")
        if not (0.0 <= self.delta2 < 1.0):
            raise ValueError(f"delta2 must lie in [0, 1), got {self.delta2!r}")
        if not self.delta1 + self.delta2 < 1.0:
            raise ValueError("delta1 + delta2 must be below 1")
        if self.k < 0 or not self.n > self.k:
            raise ValueError(f"need n > k >= 0, got n={self.n}, k={self.k}")
        if self.rho is not None and not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho!r}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam!r}")

    @classmethod
    def split(cls, n: int, delta: float, k: int = 0, **kw) -> "BoundQuery":
        """Symmetric split delta1 = delta2 = delta/2."""
        return cls(n, k, delta / 2.0, delta / 2.0, **kw)

    @property
    def delta(self) -> float:
        return self.delta1 + self.delta2


# ---------------------------------------------------------------------------
# naive-center rates
# ---------------------------------------------------------------------------


def _central(assm: MomentAssumption, what: str):
    if not assm.central:
        raise ValueError(f"{what} needs a central moment assumption")


def r_sample_mean(delta: float, k: int, assm: MomentAssumption, space: SpaceSpec) -> float:
    """2 beta v^{1/p} / (delta^{1/p} k^{(p-1)/p})."""
    _central(assm, "r_sample_mean")
    if k < 1:
        raise ValueError(f"sample-mean rate needs k >= 1, got {k}")
    if not (0.0 < delta <= 1.0):
        raise ValueError(f"delta must lie in (0, 1], got {delta!r}")
    p, v = assm.p, assm.v
    return 2.0 * beta(space) * v ** (1.0 / p) * delta ** (-1.0 / p) * k ** (-(p - 1.0) / p)


def r_gmom(delta: float, k: int, assm: MomentAssumption, space: SpaceSpec) -> float:
    """(11 beta / 0.1^{1/p}) v^{1/p} ((3.5 log(1/delta) + 1)/k)^{(p-1)/p}."""
    _central(assm, "r_gmom")
    B = gmom_block_count(delta)
    if k < B:
        raise ValueError(f"GMoM rate at delta={delta} needs k >= {B}, got {k}")
    p, v = assm.p, assm.v
    return (11.0 * beta(space) / 0.1 ** (1.0 / p) * v ** (1.0 / p)
            * ((3.5 * math.log(1.0 / delta) + 1.0) / k) ** ((p - 1.0) / p))


class RateMethod(str, enum.Enum):
    SAMPLE_MEAN = "sample_mean"
    GMOM = "gmom"
    CUSTOM = "custom"


@dataclass(frozen=True)
class RateFunction:
    """r(delta, k) with P(||mu - Z_k|| >= r(delta, k)) <= delta."""

    method: RateMethod
    custom: Callable[[float, int], float] | None = None

    def __call__(self, delta: float, k: int, assm: MomentAssumption, space: SpaceSpec) -> float:
        if self.method is RateMethod.SAMPLE_MEAN:
            return r_sample_mean(delta, k, assm, space)
        if self.method is RateMethod.GMOM:
            return r_gmom(delta, k, assm, space)
        r = float(self.custom(delta, k))
        if not r >= 0:
            raise ValueError(f"custom rate returned {r!r}")
        return r

    @classmethod
    def sample_mean(cls) -> "RateFunction":
        return cls(RateMethod.SAMPLE_MEAN)

    @classmethod
    def gmom(cls) -> "RateFunction":
        return cls(RateMethod.GMOM)

    @classmethod
    def constant(cls, r: float) -> "RateFunction":
        """Fixed radius, e.g. 0 for a center known to equal the mean."""
        return cls(RateMethod.CUSTOM, lambda delta, k: r)

    @classmethod
    def from_table(cls, table: dict) -> "RateFunction":
        """Rates looked up by k; each entry may be a number or a callable of delta."""
        def lookup(delta, k):
            entry = table[k]
            return entry(delta) if callable(entry) else entry
        return cls(RateMethod.CUSTOM, lookup)


# ---------------------------------------------------------------------------
# line-crossing widths
# ---------------------------------------------------------------------------


def _rho(q: BoundQuery, space: SpaceSpec) -> float:
    return q.rho if q.rho is not None else 1.0 / beta(space)


def _terms(q: BoundQuery, assm: MomentAssumption, space: SpaceSpec, rate: RateFunction):
    """(A, B) with width(lam) = A lam^{p-1} + B / lam."""
    _central(assm, "central widths")
    rho = _rho(q, space)
    r = rate(q.delta2, q.k, assm, space)
    A = width_constant(space, assm.p, rho) * (assm.v + r**assm.p)
    B = math.log(2.0 / q.delta1) / (rho * (q.n - q.k))
    return A, B


def line_crossing_width(q: BoundQuery, assm: MomentAssumption, space: SpaceSpec,
                        rate: RateFunction, lam: float | None = None) -> float:
    """lam^{p-1} (beta C_p(B) + K_p 2^{p-1})(v + r^p) + beta log(2/delta1) / (lam (n-k))."""
    lam = q.lam if lam is None else lam
    if lam is None or not lam > 0:
        raise ValueError(f"line-crossing width needs a positive lambda, got {lam!r}")
    A, B = _terms(q, assm, space, rate)
    return A * lam ** (assm.p - 1.0) + B / lam


def line_crossing_path(ns, q: BoundQuery, assm: MomentAssumption, space: SpaceSpec,
                       rate: RateFunction, lam: float) -> np.ndarray:
    """Line-crossing widths at every sample size in ``ns`` for one fixed lambda."""
    ns = np.asarray(ns, dtype=np.float64)
    if np.any(ns <= q.k):
        raise ValueError("every n must exceed k")
    A, B = _terms(q, assm, space, rate)
    return A * lam ** (assm.p - 1.0) + B * (q.n - q.k) / ((ns - q.k) * lam)


def opt_lambda(q: BoundQuery, assm: MomentAssumption, space: SpaceSpec,
               rate: RateFunction) -> float:
    """Truncation level balancing the two terms of the line-crossing width."""
    A, B = _terms(q, assm, space, rate)
    return (B / A) ** (1.0 / assm.p)


def optimized_width(q: BoundQuery, assm: MomentAssumption, space: SpaceSpec,
                    rate: RateFunction) -> float:
    """2 ((beta C_p(B) + K_p 2^{p-1})(v + r^p))^{1/p} (beta log(2/delta1)/(n-k))^{(p-1)/p}."""
    A, B = _terms(q, assm, space, rate)
    p = assm.p
    return 2.0 * A ** (1.0 / p) * B ** ((p - 1.0) / p)


def minimizing_lambda(q: BoundQuery, assm: MomentAssumption, space: SpaceSpec,
                      rate: RateFunction) -> float:
    """Exact minimiser of the line-crossing width over lambda.

    Setting the derivative to zero gives lam^p = B / ((p-1) A); this agrees
    with :func:`opt_lambda` only at p = 2.
    """
    A, B = _terms(q, assm, space, rate)
    return (B / ((assm.p - 1.0) * A)) ** (1.0 / assm.p)


def noncentral_width(n: int, lam: float, delta: float, assm: MomentAssumption,
                     space: SpaceSpec) -> float:
    """Width for the uncentered estimator under a raw-moment bound."""
    if assm.central:
        raise ValueError("noncentral_width needs a raw (central=False) moment assumption")
    if not (0.0 < delta <= 1.0) or n < 1 or not lam > 0:
        raise ValueError("need 0 < delta <= 1, n >= 1 and lambda > 0")
    b = beta(space)
    const = width_constant(space, assm.p)
    return 2.0 * assm.v * lam ** (assm.p - 1.0) * const + b * math.log(2.0 / delta) / (lam * n)


def noncentral_opt(n: int, delta: float, assm: MomentAssumption,
                   space: SpaceSpec) -> tuple[float, float]:
    """(lambda, width) optimised for sample size n under a raw-moment bound."""
    if assm.central:
        raise ValueError("noncentral_opt needs a raw (central=False) moment assumption")
    if not (0.0 < delta <= 1.0) or n < 1:
        raise ValueError("need 0 < delta <= 1 and n >= 1")
    p, b = assm.p, beta(space)
    const = width_constant(space, p)
    L = math.log(2.0 / delta)
    lam = (L * b / (2.0 * n * assm.v * const)) ** (1.0 / p)
    width = 2.0 * (2.0 * assm.v * const) ** (1.0 / p) * (b * L / n) ** ((p - 1.0) / p)
    return lam, width


def tournament_width(n: int, delta: float, trace: float, lambda_max: float, c: float = 1.0) -> float:
    """c (sqrt(Tr Sigma / n) + sqrt(lambda_max log(1/delta) / n))."""
    return c * (math.sqrt(trace / n) + math.sqrt(lambda_max * math.log(1.0 / delta) / n))


# ---------------------------------------------------------------------------
# stitching
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def zeta(s: float, terms: int = 1000) -> float:
    """Riemann zeta for s > 1: partial sum plus an Euler-Maclaurin tail.

    The tail sum_{n>N} n^{-s} is the integral N^{1-s}/(s-1) corrected by the
    endpoint and first two derivative terms; the remainder is O(N^{-s-5}).
    """
    if not s > 1:
        raise ValueError(f"zeta needs s > 1, got {s!r}")
    N = terms
    head = math.fsum(m ** -s for m in range(1, N + 1))
    tail = (N ** (1.0 - s) / (s - 1.0) - 0.5 * N**-s
            + s * N ** (-s - 1.0) / 12.0
            - s * (s + 1.0) * (s + 2.0) * N ** (-s - 3.0) / 720.0)
    return head + tail


@dataclass(frozen=True)
class StitchConfig:
    """Stitching function h(x) = (x+1)^s zeta(s) and center-size schedule k(j)."""

    s: float = 2.0
    k_schedule: Callable[[int], int] = k_schedule_linear

    def __post_init__(self):
        if not self.s > 1:
            raise ValueError(f"stitching exponent s must exceed 1, got {self.s!r}")

    @property
    def zeta_s(self) -> float:
        return zeta(self.s)

    @property
    def n0(self) -> int:
        return stitch_n0(self.k_schedule)

    def h(self, j: float) -> float:
        return (j + 1.0) ** self.s * self.zeta_s

    def epoch_delta(self, j: int, delta: float) -> float:
        """delta_j = delta / h(j); these sum to at most delta over j >= 1."""
        return delta / self.h(j)


def _epoch_constant(j, delta, cfg, assm, space, rate):
    """(beta C_p(B) + K_p 2^{p-1}) (v + r(delta_j/2, k(j))^p)."""
    dj = cfg.epoch_delta(j, delta)
    r = rate(dj / 2.0, cfg.k_schedule(j), assm, space)
    return width_constant(space, assm.p) * (assm.v + r**assm.p), dj


def stitched_lambda(j: int, delta: float, cfg: StitchConfig, assm: MomentAssumption,
                    space: SpaceSpec, rate: RateFunction) -> float:
    """Truncation level of epoch j: (beta log(4/delta_j) / (2^j C_p(j)))^{1/p}."""
    _central(assm, "stitched_lambda")
    if j < 1:
        raise ValueError(f"epochs start at j = 1, got {j}")
    Cj, dj = _epoch_constant(j, delta, cfg, assm, space, rate)
    return (beta(space) * math.log(4.0 / dj) / (2.0**j * Cj)) ** (1.0 / assm.p)


def stitched_width(n: int, delta: float, cfg: StitchConfig, assm: MomentAssumption,
                   space: SpaceSpec, rate: RateFunction) -> float:
    """Iterated-logarithm width valid simultaneously for all n >= n0.

    B_p(B) (v + r_n^p)^{1/p} (beta log(4 h(j)/delta) / (n - k(j)))^{(p-1)/p}
    with j = floor(log2 n).
    """
    _central(assm, "stitched_width")
    if n < cfg.n0:
        raise ValueError(f"stitched width needs n >= n0 = {cfg.n0}, got {n}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    p = assm.p
    j = int(n).bit_length() - 1
    kj = cfg.k_schedule(j)
    dj = cfg.epoch_delta(j, delta)
    r = rate(dj / 2.0, kj, assm, space)
    L = math.log(4.0 / dj)
    return (frak_b(space, p) * (assm.v + r**p) ** (1.0 / p)
            * (beta(space) * L / (n - kj)) ** ((p - 1.0) / p))


def stitched_epoch_width(n: int, delta: float, cfg: StitchConfig, assm: MomentAssumption,
                         space: SpaceSpec, rate: RateFunction) -> float:
    """The per-epoch line-crossing width W(n, j) that the stitched width dominates."""
    j = int(n).bit_length() - 1
    Cj, dj = _epoch_constant(j, delta, cfg, assm, space, rate)
    lam = stitched_lambda(j, delta, cfg, assm, space, rate)
    return lam ** (assm.p - 1.0) * Cj + beta(space) * math.log(4.0 / dj) / (lam * (n - cfg.k_schedule(j)))


# ---------------------------------------------------------------------------
# e-process
# ---------------------------------------------------------------------------


def eprocess_diag(xs, centers, lambdas, true_mu, assm: MomentAssumption, space: SpaceSpec,
                  rho: float | None = None) -> np.ndarray:
    """M_0..M_n of the exponential process dominated by a supermartingale.

    ``centers[m]`` and ``lambdas[m]`` must be predictable: built from
    observations strictly before ``xs[m]``. Needs the true mean, so this is
    a simulation diagnostic only.
    """
    _central(assm, "eprocess_diag")
    X = as_rows(xs, space) if len(xs) else np.zeros((0, space.dim))
    Z = as_rows(centers, space) if len(centers) else np.zeros((0, space.dim))
    lam = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    if not (X.shape[0] == Z.shape[0] == lam.shape[0]):
        raise ValueError("xs, centers and lambdas must have the same length")
    if np.any(lam <= 0):
        raise ValueError("lambdas must be positive")
    mu = as_vec(true_mu, space)
    if rho is None:
        rho = 1.0 / beta(space)
    p, b = assm.p, beta(space)
    c = rho**2 * b**2 * frak_c(space, p, rho) + rho * k_p(p) * 2.0 ** (p - 1.0)

    R = X - Z
    coef = clip_coeffs(R, lam, space)  # lam broadcasts row by row
    inc = lam[:, None] * (coef[:, None] * R + Z - mu)
    dev = np.vstack([np.zeros((1, space.dim)), np.cumsum(inc, axis=0)])
    G = np.concatenate([[0.0], np.cumsum(lam**p * (assm.v + row_norms(mu - Z, space) ** p))])
    return 0.5 * np.exp(rho * row_norms(dev, space) - c * G)


def eprocess_crossed(M: np.ndarray, delta: float) -> bool:
    """Whether sup_n M_n reaches 1/delta (probability at most delta by Ville)."""
    return bool(np.max(M) >= 1.0 / delta)
