"""Server-side orchestration of one training run.

Each round: broadcast the model and the current mask, collect masked
full-batch client gradients through the analog channel, expand the received
signal back to d dimensions, take a gradient step, then refresh the global
gradient vector (received values overwrite the masked entries, all others
keep their previous bits) and the age vector (selected entries reset to
zero, all others increment), and finally select next round's mask from the
refreshed state.

The run is strictly sequential across rounds; client gradients within a
round are evaluated and reduced in client-index order, so results do not
depend on any parallelism outside this module.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelModel, aggregate, sample_draw
from .config import Problem, RunConfig, build_problem
from .errors import ConfigurationError, DivergenceError
from .sparsifier import Strategy, select
from .state import SparseMask, apply_mask, scatter


@dataclass
class ServerState:
    theta: np.ndarray
    g_global: np.ndarray
    ages: np.ndarray          # int64, rounds since last update
    round_index: int
    mask: SparseMask


@dataclass
class RoundRecord:
    round_index: int
    loss: float
    grad_norm_sq: float                  # ||grad f(theta_t)||^2 before the update
    mask_indices: np.ndarray
    max_age: int
    mean_age: float
    client_grad_sq_mean: float = 0.0     # (1/N) sum_n ||g_n||^2, for bound checks
    train_accuracy: float | None = None  # post-update model, classification only
    test_accuracy: float | None = None
    wall_ms: float = 0.0
    aborted: bool = False
    note: str = ""


def _rng_streams(config: RunConfig):
    """Independent (data, loop) RNG streams.  An explicit data_seed pins the
    task/data instance while the loop stream still follows config.seed."""
    if config.data_seed is not None:
        data_seq = np.random.SeedSequence(config.data_seed)
        loop_seq = np.random.SeedSequence(config.seed).spawn(2)[1]
    else:
        data_seq, loop_seq = np.random.SeedSequence(config.seed).spawn(2)
    return np.random.default_rng(data_seq), np.random.default_rng(loop_seq)


def init(config: RunConfig, rng: np.random.Generator | None = None) -> ServerState:
    """Fresh state: seeded theta, zero global gradient, zero ages, and the
    cold-start mask selected from the all-zero state."""
    if rng is None:
        _, rng = _rng_streams(config)
    d = config.d
    theta = config.theta0_scale * rng.normal(size=d)
    g_global = np.zeros(d)
    ages = np.zeros(d, dtype=np.int64)
    mask = select(config.resolved_strategy(), g_global, ages, rng)
    return ServerState(theta, g_global, ages, 0, mask)


def step(
    state: ServerState,
    task,
    partitions: list,
    channel: ChannelModel,
    strategy: Strategy,
    eta: float,
    rng: np.random.Generator,
) -> tuple:
    """Execute one communication round; returns (next state, record)."""
    n = len(partitions)
    if n < 1:
        raise ConfigurationError("need at least one client")
    theta, mask = state.theta, state.mask

    losses = np.array([task.loss(theta, part) for part in partitions])
    grads = [task.gradient(theta, part) for part in partitions]
    if not np.isfinite(losses).all() or not all(np.isfinite(g).all() for g in grads):
        raise DivergenceError(
            f"non-finite loss or gradient at round {state.round_index}",
            round_index=state.round_index,
        )

    compressed = [apply_mask(mask, g) for g in grads]
    draw = sample_draw(channel, n, mask.k, rng)
    received = aggregate(draw, compressed, n)
    reconstructed = scatter(mask, received)

    theta_next = theta - eta * reconstructed
    g_global_next = state.g_global.copy()
    g_global_next[mask.indices] = received
    ages_next = state.ages + 1
    ages_next[mask.indices] = 0
    next_mask = select(strategy, g_global_next, ages_next, rng)

    # age law: zero exactly on the mask, previous value + 1 elsewhere
    assert (ages_next[mask.indices] == 0).all()
    off = np.setdiff1d(np.arange(mask.d), mask.indices, assume_unique=True)
    assert (ages_next[off] == state.ages[off] + 1).all()

    mean_grad = np.mean(grads, axis=0)
    record = RoundRecord(
        round_index=state.round_index,
        loss=float(losses.mean()),
        grad_norm_sq=float(mean_grad @ mean_grad),
        mask_indices=mask.indices,
        max_age=int(ages_next.max()),
        mean_age=float(ages_next.mean()),
        client_grad_sq_mean=float(np.mean([g @ g for g in grads])),
    )
    next_state = ServerState(
        theta_next, g_global_next, ages_next, state.round_index + 1, next_mask
    )
    return next_state, record


def abort_record(round_index: int, reason: str) -> RoundRecord:
    return RoundRecord(
        round_index=round_index,
        loss=float("nan"),
        grad_norm_sq=float("nan"),
        mask_indices=np.array([], dtype=np.int64),
        max_age=0,
        mean_age=float("nan"),
        aborted=True,
        note=reason,
    )


def run(config: RunConfig, problem: Problem | None = None) -> list:
    """Run T rounds; fully deterministic given the config.

    Returns one record per completed round.  If a round produces a
    non-finite loss or gradient the run stops early and the trailing record
    is an abort marker.
    """
    data_rng, rng = _rng_streams(config)
    if problem is None:
        problem = build_problem(config, data_rng)
    task, partitions = problem.task, problem.partitions
    channel = config.resolved_channel()
    strategy = config.resolved_strategy()
    state = init(config, rng)

    records = []
    for t in range(config.T):
        tic = time.perf_counter()
        try:
            state, record = step(
                state, task, partitions, channel, strategy, config.eta, rng
            )
        except DivergenceError as exc:
            records.append(abort_record(t, str(exc)))
            break
        if problem.train_eval is not None:
            record.train_accuracy = task.accuracy(state.theta, problem.train_eval)
            if problem.test_eval is not None:
                record.test_accuracy = task.accuracy(state.theta, problem.test_eval)
        record.wall_ms = (time.perf_counter() - tic) * 1e3
        records.append(record)
    return records


def run_aborted(records: list) -> bool:
    return bool(records) and records[-1].aborted
