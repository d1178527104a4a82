"""Analog superposition channel: per-client scalar fading plus additive noise.

Each round every client's compressed gradient is scaled by one real fading
gain h_n (i.i.d. across clients and rounds), the scaled vectors superpose,
and the receiver sees their 1/N average plus white Gaussian noise on each of
the k entries.  Power control against large-scale path loss is taken as
already applied, so gradients arrive at nominal amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

RAYLEIGH = "rayleigh"
CONSTANT = "constant"
GAUSSIAN = "gaussian"
FADING_KINDS = (RAYLEIGH, CONSTANT, GAUSSIAN)


@dataclass(frozen=True)
class ChannelModel:
    fading: str
    mu_h: float          # mean fading gain
    sigma_h_sq: float    # fading variance
    sigma_z_sq: float    # noise variance per entry

    def __post_init__(self):
        if self.fading not in FADING_KINDS:
            raise ConfigurationError(
                f"unknown fading kind {self.fading!r}, expected one of {FADING_KINDS}"
            )
        if self.sigma_h_sq < 0 or self.sigma_z_sq < 0:
            raise ConfigurationError("variances must be nonnegative")
        if self.fading == CONSTANT and self.sigma_h_sq != 0.0:
            raise ConfigurationError("constant fading has zero variance")


def rayleigh(mu_h: float = 1.0, sigma_z_sq: float = 0.0) -> ChannelModel:
    """Rayleigh fading parameterized by its mean amplitude mu_h.

    The scale is mu_h * sqrt(2/pi), so the variance is mu_h^2 * (4/pi - 1).
    """
    if mu_h <= 0:
        raise ConfigurationError("rayleigh fading needs mu_h > 0")
    return ChannelModel(RAYLEIGH, mu_h, mu_h**2 * (4.0 / math.pi - 1.0), sigma_z_sq)


def constant(mu_h: float = 1.0, sigma_z_sq: float = 0.0) -> ChannelModel:
    return ChannelModel(CONSTANT, mu_h, 0.0, sigma_z_sq)


def gaussian_gain(mu_h: float, sigma_h_sq: float, sigma_z_sq: float = 0.0) -> ChannelModel:
    """Gaussian fading gain with freely configurable mean and variance."""
    return ChannelModel(GAUSSIAN, mu_h, sigma_h_sq, sigma_z_sq)


@dataclass(frozen=True)
class ChannelDraw:
    h: np.ndarray   # (N,) per-client fading gains for one round
    xi: np.ndarray  # (k,) noise vector


def sample_draw(
    model: ChannelModel, n_clients: int, k: int, rng: np.random.Generator
) -> ChannelDraw:
    if n_clients < 1 or k < 1:
        raise ConfigurationError("need n_clients >= 1 and k >= 1")
    if model.fading == CONSTANT:
        h = np.full(n_clients, model.mu_h)
    elif model.fading == RAYLEIGH:
        h = rng.rayleigh(scale=model.mu_h * math.sqrt(2.0 / math.pi), size=n_clients)
    else:
        h = rng.normal(model.mu_h, math.sqrt(model.sigma_h_sq), size=n_clients)
    xi = rng.normal(0.0, math.sqrt(model.sigma_z_sq), size=k)
    return ChannelDraw(h=h, xi=xi)


def aggregate(draw: ChannelDraw, compressed: list, n_clients: int) -> np.ndarray:
    """Received signal: the 1/N fading-weighted sum of the compressed
    gradients plus the noise vector."""
    if len(compressed) != n_clients or draw.h.size != n_clients:
        raise ConfigurationError(
            f"expected {n_clients} compressed gradients and fading gains, "
            f"got {len(compressed)} and {draw.h.size}"
        )
    stacked = np.stack([np.asarray(c, dtype=np.float64) for c in compressed])
    if stacked.ndim != 2 or stacked.shape[1] != draw.xi.size:
        raise ConfigurationError(
            f"compressed gradients must all have length {draw.xi.size}"
        )
    return draw.h @ stacked / n_clients + draw.xi
