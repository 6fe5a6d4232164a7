"""Reproducible heavy-tailed data: Lomax magnitudes along uniform directions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

# Replication streams are keyed by (seed, stream id) through numpy's
# SeedSequence spawn keys, which are stable across numpy releases and do not
# depend on how replications are scheduled across workers.


class InfiniteMomentError(ValueError):
    """The requested moment order is not finite for this generator."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(stream) & (2**64 - 1),))
    return np.random.Generator(np.random.PCG64(ss))


class GeneratorKind(str, enum.Enum):
    LOMAX_SPHERE = "lomax_sphere"
    GAUSSIAN_SPHERE = "gaussian_sphere"
    MARTINGALE_SCALE = "martingale_scale"


@dataclass(frozen=True)
class GeneratorSpec:
    """How observations X_m = mean_offset + sigma_m Y_m U_m are drawn.

    Y_m is Lomax(a) (or |N(0,1)| for the Gaussian kind) and U_m is uniform
    on the unit sphere. For the martingale kind the scale is

        sigma_m = clamp(base + amp |tanh(<w, X_{m-1} - mean_offset>)|, lo, hi)

    with sigma_1 = clamp(base, lo, hi); ``w`` defaults to (1, ..., 1)/sqrt(d).
    """

    kind: GeneratorKind = GeneratorKind.LOMAX_SPHERE
    a: float = 1.75
    dim: int = 10
    mean_offset: tuple = ()
    base: float = 0.5
    amp: float = 1.0
    lo: float = 0.5
    hi: float = 1.5
    w: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind(self.kind))
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if self.kind is not GeneratorKind.GAUSSIAN_SPHERE and not self.a > 1:
            raise ValueError(f"Lomax shape must exceed 1 for a finite mean, got {self.a!r}")
        off = tuple(float(c) for c in self.mean_offset) or (0.0,) * self.dim
        if len(off) != self.dim:
            raise ValueError(f"mean_offset has {len(off)} coordinates, expected {self.dim}")
        object.__setattr__(self, "mean_offset", off)
        w = tuple(float(c) for c in self.w) or (1.0 / math.sqrt(self.dim),) * self.dim
        if len(w) != self.dim:
            raise ValueError(f"w has {len(w)} coordinates, expected {self.dim}")
        object.__setattr__(self, "w", w)
        if self.kind is GeneratorKind.MARTINGALE_SCALE:
            if not (0 < self.lo <= self.hi) or self.amp < 0:
                raise ValueError("martingale scale needs 0 < lo <= hi and amp >= 0")

    @property
    def mu(self) -> np.ndarray:
        return np.array(self.mean_offset)

    @property
    def sigma_max(self) -> float:
        if self.kind is not GeneratorKind.MARTINGALE_SCALE:
            return 1.0
        return min(self.hi, max(self.lo, self.base + self.amp))


def lomax_from_uniform(u, a: float):
    """Inverse CDF of Lomax(a): u^{-1/a} - 1 for u in (0, 1]."""
    return np.asarray(u, dtype=np.float64) ** (-1.0 / a) - 1.0


def sample_lomax(rng: np.random.Generator, a: float, size=None):
    """Draws with density a (1 + x)^{-(a+1)} on x >= 0."""
    if not a > 0:
        raise ValueError(f"Lomax shape must be positive, got {a!r}")
    u = 1.0 - rng.random(size)  # in (0, 1]
    out = lomax_from_uniform(u, a)
    return float(out) if size is None else out


def sample_sphere(rng: np.random.Generator, d: int, size: int | None = None) -> np.ndarray:
    """Uniform directions on the unit sphere of R^d (normalised Gaussians)."""
    m = 1 if size is None else size
    G = rng.standard_normal((m, d))
    r = np.sqrt(np.sum(G * G, axis=1))
    while np.any(r == 0):
        bad = r == 0
        G[bad] = rng.standard_normal((int(bad.sum()), d))
        r = np.sqrt(np.sum(G * G, axis=1))
    U = G / r[:, None]
    return U[0] if size is None else U


def _magnitudes(spec: GeneratorSpec, rng, n):
    if spec.kind is GeneratorKind.GAUSSIAN_SPHERE:
        return np.abs(rng.standard_normal(n))
    return sample_lomax(rng, spec.a, n)


def generate(spec: GeneratorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n observations as an (n, dim) array.

    Magnitudes are drawn first, then directions, so every kind consumes the
    random stream identically.
    """
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if n == 0:
        return np.zeros((0, spec.dim))
    Y = _magnitudes(spec, rng, n)
    U = sample_sphere(rng, spec.dim, n)
    mu = spec.mu
    if spec.kind is not GeneratorKind.MARTINGALE_SCALE:
        return mu + Y[:, None] * U
    X = np.empty((n, spec.dim))
    w = np.array(spec.w)
    sigma = min(spec.hi, max(spec.lo, spec.base))
    for m in range(n):
        X[m] = mu + sigma * Y[m] * U[m]
        s = spec.base + spec.amp * abs(math.tanh(float(w @ (X[m] - mu))))
        sigma = min(spec.hi, max(spec.lo, s))
    return X


def lomax_moment(a: float, p: float) -> float:
    """E Y^p = Gamma(p+1) Gamma(a-p) / Gamma(a) for Y ~ Lomax(a), p < a."""
    if not p < a:
        raise InfiniteMomentError(f"Lomax({a}) has an infinite moment of order {p}")
    return math.exp(gammaln(p + 1.0) + gammaln(a - p) - gammaln(a))


def moment_v(spec: GeneratorSpec, p: float) -> float:
    """E||X - mu||^p, or its upper bound for the martingale kind."""
    if spec.kind is GeneratorKind.GAUSSIAN_SPHERE:
        m = 2.0 ** (p / 2.0) * math.exp(gammaln((p + 1.0) / 2.0)) / math.sqrt(math.pi)
    else:
        m = lomax_moment(spec.a, p)
    return m * spec.sigma_max**p
