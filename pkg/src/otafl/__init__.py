"""Desk-scale simulator of federated learning over an analog
superposition channel, with age-aware partial gradient updates."""

from .bounds import (
    BoundConstants,
    bound_rhs,
    compute_B1,
    compute_B2,
    estimate_constants,
    run_bound_check,
)
from .channel import ChannelDraw, ChannelModel, aggregate, constant, gaussian_gain, rayleigh, sample_draw
from .config import Problem, RunConfig, build_problem, parse_config
from .errors import ConfigurationError, DivergenceError
from .server import RoundRecord, ServerState, init, run, step
from .sparsifier import (
    AGEK,
    AGETOPK,
    RANDOMK,
    RTOPK,
    STRATEGY_KINDS,
    TOPK,
    CompressorQuality,
    Strategy,
    compression_error,
    gamma_of,
    gen_bounded_ratio_vector,
    make_strategy,
    select,
    select_top_k_by_age,
    select_top_r,
)
from .state import SparseMask, abs_values, add, apply_mask, full_mask, l2_norm_sq, scale, scatter
from .tasks import (
    Dataset,
    LogisticRegressionTask,
    MLPTask,
    PartitionSpec,
    QuadraticTask,
    dirichlet_partition,
    gen_synthetic,
    global_loss,
    load_dataset,
    local_gradient,
    local_loss,
    save_dataset,
)

__version__ = "0.1.0"
