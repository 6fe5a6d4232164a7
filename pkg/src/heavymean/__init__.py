"""Heavy-tailed mean estimation with truncation around a naive center, plus
time-uniform confidence widths and the simulations that exercise them."""

from .bounds import (
    BoundQuery,
    RateFunction,
    StitchConfig,
    eprocess_diag,
    line_crossing_width,
    noncentral_opt,
    opt_lambda,
    optimized_width,
    stitched_width,
)
from .constants import MomentAssumption, frak_c, k_p, width_constant
from .datagen import GeneratorKind, GeneratorSpec, generate, make_rng, moment_v
from .estimators import (
    CenterMethod,
    EstimatorConfig,
    geometric_median,
    gmom,
    gmom_block_count,
    stream_estimate,
    stream_init,
    stream_update,
    truncated_mean,
)
from .space import SpaceKind, SpaceSpec, norm
from .truncation import clip

__version__ = "0.1.0"
