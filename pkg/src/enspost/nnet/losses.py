"""Differentiable training losses: sample CRPS, smoothed ES/VS and their composite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

EPS_SMOOTH = 1e-8


@dataclass(frozen=True)
class CompositeLossConfig:
    """Weighted ES + VS loss: w1*ES + (1-w1)*c*VS plus a non-negativity penalty.

    ``vs_normalizer`` c is the ratio of mean raw-ensemble ES to mean raw VS,
    computed once before training and frozen.
    """

    w1: float
    vs_normalizer: float
    nonneg_penalty: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.w1 <= 1.0:
            raise ValueError("w1 must lie in [0, 1]")
        if self.vs_normalizer <= 0:
            raise ValueError("vs_normalizer must be positive")
        if self.nonneg_penalty < 0:
            raise ValueError("nonneg_penalty must be >= 0")

    @property
    def w2(self) -> float:
        return 1.0 - self.w1


def _penalty(outputs: Tensor) -> Tensor:
    """mean(max(0, -output)): pushes emitted members towards non-negativity."""
    return (-outputs).relu().mean()


def loss_crps(outputs: Tensor, observations: np.ndarray, nonneg_penalty: float = 1.0) -> Tensor:
    """Mean sample CRPS over stations plus the non-negativity penalty."""
    y = np.asarray(observations, dtype=float)
    d, k = outputs.shape
    if y.shape != (d,):
        raise ValueError("observation vector does not match output rows")
    term1 = (outputs - y[:, None]).abs().mean(axis=1)  # D
    pair = outputs.expand_dims(2) - outputs.expand_dims(1)  # D x K x K
    term2 = pair.abs().sum(axis=2).sum(axis=1) * (1.0 / (2.0 * k * k))
    loss = (term1 - term2).mean()
    if nonneg_penalty > 0:
        loss = loss + nonneg_penalty * _penalty(outputs)
    return loss


def loss_es(outputs: Tensor, observations: np.ndarray, nonneg_penalty: float = 1.0,
            eps: float = EPS_SMOOTH) -> Tensor:
    """Smoothed sample energy score: norms replaced by sqrt(||v||^2 + eps^2)."""
    y = np.asarray(observations, dtype=float)
    d, k = outputs.shape
    if y.shape != (d,):
        raise ValueError("observation vector does not match output rows")
    diff = outputs - y[:, None]  # D x K
    term1 = (((diff * diff).sum(axis=0) + eps * eps) ** 0.5).mean()
    pair = outputs.expand_dims(2) - outputs.expand_dims(1)  # D x K x K
    term2 = (((pair * pair).sum(axis=0) + eps * eps) ** 0.5).sum(axis=1).sum(axis=0) \
        * (1.0 / (2.0 * k * k))
    loss = term1 - term2
    if nonneg_penalty > 0:
        loss = loss + nonneg_penalty * _penalty(outputs)
    return loss


def loss_vs(outputs: Tensor, observations: np.ndarray, eps: float = EPS_SMOOTH) -> Tensor:
    """Smoothed variogram score (p = 0.5, unit weights): |x|^0.5 -> (x^2 + eps^2)^0.25."""
    y = np.asarray(observations, dtype=float)
    d, k = outputs.shape
    if d < 2:
        raise ValueError("variogram score needs at least two stations")
    v_obs = ((y[:, None] - y[None, :]) ** 2 + eps * eps) ** 0.25  # constant D x D
    pd = outputs.expand_dims(1) - outputs.expand_dims(0)  # D x D x K
    v_fc = (((pd * pd) + eps * eps) ** 0.25).mean(axis=2)  # D x D
    delta = v_fc - v_obs  # diagonal cancels exactly (both smoothed zeros)
    return (delta * delta).sum(axis=1).sum(axis=0)


def loss_composite(outputs: Tensor, observations: np.ndarray,
                   config: CompositeLossConfig) -> Tensor:
    """w1 * ES + w2 * c * VS plus the non-negativity penalty."""
    es = loss_es(outputs, observations, nonneg_penalty=0.0)
    loss = config.w1 * es
    if config.w2 > 0:
        loss = loss + config.w2 * config.vs_normalizer * loss_vs(outputs, observations)
    if config.nonneg_penalty > 0:
        loss = loss + config.nonneg_penalty * _penalty(outputs)
    return loss
