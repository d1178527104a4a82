"""Numeric evaluation of the convergence bound and its constants.

The bound caps the time-averaged expected squared gradient norm of a run by

    2 * (f0 - f*) / (eta * mu_h * T)  +  B1 / mu_h^2  +  eta * L * B2 / mu_h

with B1 = 2*sigma_h^2*(G^2 + sigma_g^2)/N + 2*mu_h^2*(1 - gamma)*(G^2 + sigma_g^2)
and  B2 = (mu_h^2 + sigma_h^2)*(G^2 + sigma_g^2) + k*sigma_z^2.

Constants are either configured or estimated from a task instance; the
quadratic task admits exact values (largest Hessian eigenvalue, closed-form
heterogeneity, closed-form optimum), which is what the validity check uses.
Expectations over channel noise and initialization are estimated by
seed-averaging with reported standard errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import server
from .config import RunConfig, build_problem
from .errors import ConfigurationError, DivergenceError
from .sparsifier import gamma_of
from .tasks import QuadraticTask, global_loss, local_gradient


@dataclass(frozen=True)
class BoundConstants:
    L: float
    G_sq: float
    sigma_g_sq: float
    mu_h: float
    sigma_h_sq: float
    sigma_z_sq: float
    gamma: float
    k: int
    n_clients: int
    eta: float
    f0: float
    f_star: float

    def __post_init__(self):
        if self.mu_h <= 0:
            raise ConfigurationError("bound requires mu_h > 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in (0, 1]")
        for name in ("L", "G_sq", "sigma_g_sq", "sigma_h_sq", "sigma_z_sq", "eta"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")


def compute_B1(c: BoundConstants) -> float:
    total = c.G_sq + c.sigma_g_sq
    return 2.0 * c.sigma_h_sq * total / c.n_clients \
        + 2.0 * c.mu_h**2 * (1.0 - c.gamma) * total


def compute_B2(c: BoundConstants) -> float:
    return (c.mu_h**2 + c.sigma_h_sq) * (c.G_sq + c.sigma_g_sq) \
        + c.k * c.sigma_z_sq


def bound_rhs(c: BoundConstants, T: int) -> float:
    """Right-hand side of the convergence bound after T rounds."""
    if T < 1:
        raise ConfigurationError("bound needs T >= 1")
    return 2.0 * (c.f0 - c.f_star) / (c.eta * c.mu_h * T) \
        + compute_B1(c) / c.mu_h**2 \
        + c.eta * c.L * compute_B2(c) / c.mu_h


def mean_client_grad_sq(task, theta: np.ndarray, partitions: list) -> float:
    """(1/N) sum_n ||grad f_n(theta)||^2 -- the gradient-norm average."""
    grads = [local_gradient(task, theta, part) for part in partitions]
    return float(np.mean([g @ g for g in grads]))


def heterogeneity_sq(task, theta: np.ndarray, partitions: list) -> float:
    """(1/N) sum_n ||grad f_n(theta) - grad f(theta)||^2."""
    grads = [local_gradient(task, theta, part) for part in partitions]
    center = np.mean(grads, axis=0)
    return float(np.mean([np.sum((g - center) ** 2) for g in grads]))


@dataclass(frozen=True)
class ConstantEstimates:
    L: float
    G_sq: float
    sigma_g_sq: float
    f_star: float


def estimate_constants(
    task,
    partitions: list,
    sample_thetas: list,
    rng: np.random.Generator | None = None,
) -> ConstantEstimates:
    """Estimate smoothness, gradient-norm, heterogeneity, and optimum.

    For the quadratic task L and f* are exact (largest eigenvalue of the
    Hessian; loss at the mean target) and the heterogeneity average does not
    depend on theta.  Otherwise L comes from finite-difference curvature
    probes and f* from a long noise-free descent.  G^2 and sigma_g^2 are the
    maxima of their defining averages over the sampled thetas.
    """
    if not sample_thetas:
        raise ConfigurationError("need at least one sample theta")
    g_sq = max(mean_client_grad_sq(task, th, partitions) for th in sample_thetas)
    if isinstance(task, QuadraticTask):
        el = task.smoothness()
        sigma_g = heterogeneity_sq(task, sample_thetas[0], partitions)
        b_bar = np.mean(partitions, axis=0)
        f_star = global_loss(task, b_bar, partitions)
        return ConstantEstimates(el, g_sq, sigma_g, f_star)

    rng = rng or np.random.default_rng(0)
    sigma_g = max(heterogeneity_sq(task, th, partitions) for th in sample_thetas)

    def mean_grad(theta):
        return np.mean([local_gradient(task, theta, p) for p in partitions], axis=0)

    eps = 1e-4
    el = 0.0
    for theta in sample_thetas:
        g0 = mean_grad(theta)
        for _ in range(3):
            v = rng.normal(size=theta.size)
            v /= np.linalg.norm(v)
            el = max(el, float(np.linalg.norm(mean_grad(theta + eps * v) - g0) / eps))
    # noise-free full-gradient descent from the best sample point
    theta = min(sample_thetas, key=lambda th: global_loss(task, th, partitions))
    theta = np.array(theta, dtype=np.float64)
    step = 1.0 / max(el, 1e-12)
    best = global_loss(task, theta, partitions)
    for _ in range(2000):
        theta -= step * mean_grad(theta)
        best = min(best, global_loss(task, theta, partitions))
    return ConstantEstimates(el, g_sq, sigma_g, best)


@dataclass
class CheckpointResult:
    T: int
    empirical_mean: float   # seed-averaged time-mean squared gradient norm
    empirical_se: float
    rhs: float
    passed: bool            # empirical_mean + 2 * se <= rhs


@dataclass
class BoundReport:
    constants: BoundConstants
    checkpoints: list
    n_seeds: int

    def all_passed(self) -> bool:
        return all(cp.passed for cp in self.checkpoints)


def run_bound_check(
    config: RunConfig, checkpoints: list, seeds: list
) -> BoundReport:
    """Compare seed-averaged trajectories against the bound at each horizon.

    Only the quadratic task is supported: its smoothness constant and
    optimum are exact, which keeps the check meaningful.  The task/data
    instance is pinned across seeds via the data seed; per-seed randomness
    covers initialization, fading, and noise.
    """
    if config.task != "quadratic":
        raise ConfigurationError(
            "bound checks require the quadratic task (exact constants)"
        )
    if not checkpoints or min(checkpoints) < 1:
        raise ConfigurationError("checkpoints must be positive round counts")
    if not seeds:
        raise ConfigurationError("need at least one seed")

    horizon = max(checkpoints)
    data_seed = config.data_seed if config.data_seed is not None else config.seed
    base = dataclasses.replace(config, T=horizon, data_seed=data_seed)

    problem = build_problem(base, np.random.default_rng(np.random.SeedSequence(data_seed)))
    trajectories = []
    g_sq_max = 0.0
    f0_values = []
    for seed in seeds:
        records = server.run(dataclasses.replace(base, seed=seed), problem=problem)
        if server.run_aborted(records):
            raise DivergenceError(records[-1].note)
        trajectories.append(np.array([rec.grad_norm_sq for rec in records]))
        g_sq_max = max(g_sq_max, max(rec.client_grad_sq_mean for rec in records))
        f0_values.append(records[0].loss)

    task = problem.task
    b_bar = np.mean(problem.partitions, axis=0)
    est = estimate_constants(task, problem.partitions, [b_bar])
    r, k = base.derived_rk()
    ch = base.resolved_channel()
    constants = BoundConstants(
        L=est.L,
        G_sq=g_sq_max,
        sigma_g_sq=est.sigma_g_sq,
        mu_h=ch.mu_h,
        sigma_h_sq=ch.sigma_h_sq,
        sigma_z_sq=ch.sigma_z_sq,
        gamma=gamma_of(base.d, r, k, base.beta).gamma,
        k=k,
        n_clients=base.n_clients,
        eta=base.eta,
        f0=float(np.mean(f0_values)),
        f_star=est.f_star,
    )

    results = []
    for horizon_t in sorted(checkpoints):
        per_seed = np.array([traj[:horizon_t].mean() for traj in trajectories])
        mean = float(per_seed.mean())
        se = float(per_seed.std(ddof=1) / np.sqrt(len(seeds))) if len(seeds) > 1 else 0.0
        rhs = bound_rhs(constants, horizon_t)
        results.append(
            CheckpointResult(horizon_t, mean, se, rhs, mean + 2.0 * se <= rhs)
        )
    return BoundReport(constants=constants, checkpoints=results, n_seeds=len(seeds))
