"""Point estimators of the mean.

The centered truncated mean averages observations projected onto a ball of
radius 1/lambda around a naive center built from the first ``k`` samples.
Sums over observations always run in arrival order with sequential
accumulation (``np.cumsum``), so the streaming forms reproduce the batch
forms bit for bit.
"""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .constants import GMOM_ALPHA, GMOM_GAMMA, psi
from .space import SpaceKind, SpaceSpec, as_rows, as_vec, row_norms
from .truncation import clip_rows


class ConvergenceError(RuntimeError):
    """Weiszfeld iteration hit ``max_iter``; ``best`` holds the best iterate seen."""

    def __init__(self, msg, best):
        super().__init__(msg)
        self.best = best


class StateError(RuntimeError):
    """An online estimator was queried before it had anything to report."""


class CenterMethod(str, enum.Enum):
    ZERO = "zero"
    SAMPLE_MEAN = "sample_mean"
    GMOM = "gmom"


@dataclass(frozen=True)
class EstimatorConfig:
    lam: float
    k: int = 0
    center_method: CenterMethod = CenterMethod.SAMPLE_MEAN
    gmom_delta: float = 1e-4
    tol: float = 1e-10
    max_iter: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "center_method", CenterMethod(self.center_method))
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive and finite, got {self.lam!r}")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if self.k == 0 and self.center_method is not CenterMethod.ZERO:
            object.__setattr__(self, "center_method", CenterMethod.ZERO)
        if not (0.0 < self.gmom_delta < 1.0):
            raise ValueError(f"gmom_delta must lie in (0, 1), got {self.gmom_delta!r}")


# ---------------------------------------------------------------------------
# naive estimators
# ---------------------------------------------------------------------------


def sample_mean(xs) -> np.ndarray:
    X = as_rows(xs)
    if X.shape[0] == 0:
        raise ValueError("sample mean of an empty sequence")
    return np.cumsum(X, axis=0)[-1] / X.shape[0]


def _objective(X, y, space):
    return float(np.sum(row_norms(X - y, space)))


def _weiszfeld_step(X, y, space):
    """One fixed-point step away from the data points.

    For Hilbert norms this is the classical Weiszfeld map. For l^alpha the
    stationarity condition of sum_i ||x_i - y||_alpha is solved coordinatewise
    by the reweighting w_ic = |d_ic|^(alpha-2) / ||d_i||^(alpha-1).
    """
    D = X - y
    r = row_norms(D, space)
    if space.kind is SpaceKind.EUCLIDEAN or space.alpha == 2.0:
        w = 1.0 / r
        return (w @ X) / w.sum()
    a = space.alpha
    W = np.abs(D) ** (a - 2.0) / (r ** (a - 1.0))[:, None]
    den = W.sum(axis=0)
    out = y.copy()
    ok = den > 0
    out[ok] = np.sum(W * X, axis=0)[ok] / den[ok]
    return out


def _vertex_step(X, y, j, space):
    """Vardi-Zhang update when ``y`` sits on data point ``j``.

    Returns ``None`` if the vertex is itself a minimiser.
    """
    others = np.delete(X, j, axis=0)
    D = others - y
    r = row_norms(D, space)
    keep = r > 0
    others, D, r = others[keep], D[keep], r[keep]
    mult = 1 + int(np.sum(~keep))
    if others.shape[0] == 0:
        return None
    if space.kind is SpaceKind.EUCLIDEAN or space.alpha == 2.0:
        grad = (D / r[:, None]).sum(axis=0)
        gnorm = math.sqrt(float(grad @ grad))
    else:
        a = space.alpha
        G = np.sign(D) * np.abs(D) ** (a - 1.0) / (r ** (a - 1.0))[:, None]
        grad = G.sum(axis=0)
        # subgradient test uses the dual norm of the pull
        q = a / (a - 1.0)
        gnorm = float(np.sum(np.abs(grad) ** q) ** (1.0 / q))
    if gnorm <= mult:
        return None
    T = _weiszfeld_step(others, y, space)
    t = mult / gnorm
    return (1.0 - t) * T + t * y


def weiszfeld_iterates(points, space: SpaceSpec, tol: float = 1e-10,
                       max_iter: int = 10_000) -> Iterator[np.ndarray]:
    """Yield the successive Weiszfeld iterates, starting at the coordinatewise median.

    Iteration stops once a step is shorter than ``tol`` times the mean
    distance from the start to the data (a translation-invariant scale).
    Raises :class:`ConvergenceError` if that never happens within ``max_iter``.
    """
    X = as_rows(points, space)
    if X.shape[0] == 0:
        raise ValueError("geometric median of an empty sequence")
    y = np.median(X, axis=0)
    yield y
    if X.shape[0] == 1:
        return
    scale = float(np.mean(row_norms(X - y, space)))
    if scale == 0.0:
        return
    lp = not (space.kind is SpaceKind.EUCLIDEAN or space.alpha == 2.0)
    f = _objective(X, y, space)
    best, best_f = y, f
    for _ in range(max_iter):
        r = row_norms(X - y, space)
        hit = np.flatnonzero(r <= 1e-12 * scale)
        if hit.size:
            y_new = _vertex_step(X, y, int(hit[0]), space)
            if y_new is None:
                return
        else:
            y_new = _weiszfeld_step(X, y, space)
        f_new = _objective(X, y_new, space)
        if lp:
            # the l^alpha reweighting is not a majorisation; damp until descent
            t = 1.0
            while f_new > f and t > 1e-8:
                t *= 0.5
                y_new = y + t * (y_new - y)
                f_new = _objective(X, y_new, space)
            if f_new > f:
                return
        step = float(row_norms((y_new - y)[None, :], space)[0])
        y, f = y_new, f_new
        if f < best_f:
            best, best_f = y, f
        yield y
        if step <= tol * scale:
            return
    raise ConvergenceError(f"Weiszfeld did not converge in {max_iter} iterations", best)


def geometric_median(points, space: SpaceSpec, tol: float = 1e-10,
                     max_iter: int = 10_000) -> np.ndarray:
    """arg min_y sum_i ||p_i - y|| by Weiszfeld's algorithm with vertex handling."""
    y = None
    for y in weiszfeld_iterates(points, space, tol, max_iter):
        pass
    return y


def gmom_block_count(delta: float) -> int:
    """Number of blocks floor(log(1/delta) / psi(7/18; 0.1)) + 1."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    B = math.floor(math.log(1.0 / delta) / psi(GMOM_ALPHA, GMOM_GAMMA)) + 1
    assert B <= 3.5 * math.log(1.0 / delta) + 1
    return B


def block_slices(n: int, B: int) -> list[slice]:
    """Contiguous blocks of near-equal size (sizes differ by at most one)."""
    if not (1 <= B <= n):
        raise ValueError(f"need 1 <= B <= n, got B={B}, n={n}")
    base, extra = divmod(n, B)
    out, start = [], 0
    for b in range(B):
        size = base + (1 if b < extra else 0)
        out.append(slice(start, start + size))
        start += size
    return out


def gmom(points, B: int, space: SpaceSpec, tol: float = 1e-10,
         max_iter: int = 10_000) -> np.ndarray:
    """Geometric median of the sample means of B contiguous blocks."""
    X = as_rows(points, space)
    means = np.array([sample_mean(X[s]) for s in block_slices(X.shape[0], B)])
    return geometric_median(means, space, tol, max_iter)


# ---------------------------------------------------------------------------
# centered truncated mean
# ---------------------------------------------------------------------------


def naive_center(head, config: EstimatorConfig, space: SpaceSpec) -> np.ndarray:
    """Center Z_k computed from the first k observations only."""
    if config.center_method is CenterMethod.ZERO or config.k == 0:
        return np.zeros(space.dim)
    X = as_rows(head, space)
    if config.center_method is CenterMethod.SAMPLE_MEAN:
        return sample_mean(X)
    B = gmom_block_count(config.gmom_delta)
    if B > X.shape[0]:
        raise ValueError(f"GMoM center needs k >= {B} samples at delta={config.gmom_delta}, got k={X.shape[0]}")
    return gmom(X, B, space, config.tol, config.max_iter)


def clipped_residual_sums(X: np.ndarray, center: np.ndarray, lam: float,
                          space: SpaceSpec) -> np.ndarray:
    """Prefix sums of the clipped residuals, accumulated in arrival order."""
    return np.cumsum(clip_rows(X - center, lam, space), axis=0)


def truncated_mean(xs, config: EstimatorConfig, space: SpaceSpec) -> np.ndarray:
    """Average of the last n - k observations clipped to radius 1/lam around Z_k."""
    X = as_rows(xs, space)
    n, k = X.shape[0], config.k
    if n <= k:
        raise ValueError(f"need more than k={k} observations, got {n}")
    center = naive_center(X[:k], config, space)
    acc = clipped_residual_sums(X[k:], center, config.lam, space)[-1]
    return acc / (n - k) + center


def truncated_mean_path(xs, config: EstimatorConfig, space: SpaceSpec):
    """Estimates at every n = k+1..len(xs), plus the center used.

    Row i of the returned array equals ``truncated_mean(xs[:k+1+i], ...)``.
    """
    X = as_rows(xs, space)
    k = config.k
    if X.shape[0] <= k:
        raise ValueError(f"need more than k={k} observations, got {X.shape[0]}")
    center = naive_center(X[:k], config, space)
    S = clipped_residual_sums(X[k:], center, config.lam, space)
    counts = np.arange(1, S.shape[0] + 1, dtype=np.float64)
    return S / counts[:, None] + center, center


# ---------------------------------------------------------------------------
# online form
# ---------------------------------------------------------------------------


@dataclass
class StreamState:
    space: SpaceSpec
    config: EstimatorConfig
    buffer: list = field(default_factory=list)
    center: np.ndarray | None = None
    acc: np.ndarray | None = None
    count: int = 0

    @property
    def collecting(self) -> bool:
        return len(self.buffer) < self.config.k and self.center is None

    def snapshot(self) -> "StreamState":
        return copy.deepcopy(self)


def stream_init(space: SpaceSpec, config: EstimatorConfig) -> StreamState:
    st = StreamState(space, config)
    if config.k == 0:
        st.center = naive_center(None, config, space)
    return st


def stream_update(state: StreamState, x) -> StreamState:
    """Feed one observation; mutates and returns ``state``."""
    v = as_vec(x, state.space)
    if state.center is None:
        state.buffer.append(v)
        if len(state.buffer) == state.config.k:
            state.center = naive_center(np.array(state.buffer), state.config, state.space)
        return state
    term = clip_rows((v - state.center)[None, :], state.config.lam, state.space)[0]
    state.acc = term.copy() if state.acc is None else state.acc + term
    state.count += 1
    return state


def stream_estimate(state: StreamState) -> np.ndarray:
    if state.center is None or state.count == 0:
        raise StateError("no observations accumulated past the first k")
    return state.acc / state.count + state.center


# ---------------------------------------------------------------------------
# epoch-stitched estimator
# ---------------------------------------------------------------------------


def k_schedule_linear(j: int) -> int:
    """k(j) = j."""
    return j


@dataclass
class EpochRecord:
    j: int
    k: int
    lam: float
    center: np.ndarray
    acc: np.ndarray | None
    count: int


@dataclass
class StitchState:
    """Estimator that restarts in each epoch [2^j, 2^{j+1}).

    Epoch j uses the first k(j) observations for its center and truncation
    level ``lam_of(j)``; its average runs over observations k(j)+1..n, which
    may predate the epoch, so past observations are retained for replay
    when an epoch opens.
    """

    space: SpaceSpec
    center_method: CenterMethod
    k_schedule: Callable[[int], int]
    lam_of: Callable[[int], float]
    gmom_delta: float = 1e-4
    history: list = field(default_factory=list)
    epochs: dict = field(default_factory=dict)
    n: int = 0

    def config_for(self, j: int) -> EstimatorConfig:
        return EstimatorConfig(self.lam_of(j), self.k_schedule(j), self.center_method,
                               self.gmom_delta)

    def snapshot(self) -> "StitchState":
        return copy.deepcopy(self)


def stitched_init(space: SpaceSpec, lam_of: Callable[[int], float],
                  k_schedule: Callable[[int], int] = k_schedule_linear,
                  center_method: CenterMethod = CenterMethod.SAMPLE_MEAN,
                  gmom_delta: float = 1e-4) -> StitchState:
    """``lam_of(j)`` gives the truncation level of epoch j (see ``bounds.stitched_lambda``)."""
    return StitchState(space, CenterMethod(center_method), k_schedule, lam_of, gmom_delta)


def _open_epoch(state: StitchState, j: int) -> EpochRecord:
    cfg = state.config_for(j)
    X = np.array(state.history)
    center = naive_center(X[: cfg.k], cfg, state.space)
    tail = X[cfg.k:]
    acc = clipped_residual_sums(tail, center, cfg.lam, state.space)[-1] if len(tail) else None
    rec = EpochRecord(j, cfg.k, cfg.lam, center, acc, len(tail))
    state.epochs = {j: rec}  # earlier epochs are never queried again
    return rec


def stitched_update(state: StitchState, x) -> StitchState:
    v = as_vec(x, state.space)
    state.history.append(v)
    state.n += 1
    j = state.n.bit_length() - 1
    if j < 1:
        return state
    if j not in state.epochs:
        if state.k_schedule(j) < state.n:
            _open_epoch(state, j)
        return state
    rec = state.epochs[j]
    term = clip_rows((v - rec.center)[None, :], rec.lam, state.space)[0]
    rec.acc = term.copy() if rec.acc is None else rec.acc + term
    rec.count += 1
    return state


def stitch_n0(k_schedule: Callable[[int], int] = k_schedule_linear, horizon: int = 62) -> int:
    """Smallest n >= 2 from which k(floor(log2 m)) <= m/2 holds for every m >= n."""
    # within epoch j the condition is monotone in m, so it suffices to find,
    # scanning epochs downward, the first m where it holds in every later epoch
    n0 = 2
    for j in range(horizon, 0, -1):
        kj = k_schedule(j)
        if 2 * kj > 2 ** (j + 1) - 1:
            n0 = 2 ** (j + 1)
            break
        if 2 * kj > 2**j:
            n0 = 2 * kj
            break
    return max(n0, 2)


def stitched_estimate(state: StitchState, n0: int | None = None) -> np.ndarray:
    if n0 is None:
        n0 = stitch_n0(state.k_schedule)
    if state.n < n0:
        raise StateError(f"stitched estimate needs n >= {n0}, have {state.n}")
    j = state.n.bit_length() - 1
    rec = state.epochs.get(j)
    if rec is None or rec.count == 0:
        raise StateError(f"epoch {j} has no accumulated observations")
    return rec.acc / rec.count + rec.center
