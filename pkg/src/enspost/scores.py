"""Verification metrics: proper scores, rank histograms, interval diagnostics and tests.

All score functions are pure and invariant under permutation of ensemble members.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .core import MultivariateCase

PRE_RANK_KINDS = ("average", "band_depth", "energy_score", "dependence")


@dataclass(frozen=True)
class VsWeights:
    """Symmetric non-negative pair weights for the variogram score."""

    omega: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("omega must be a square matrix")
        if np.any(w < 0):
            raise ValueError("omega must be non-negative")
        if not np.allclose(w, w.T):
            raise ValueError("omega must be symmetric")
        object.__setattr__(self, "omega", w)

    @classmethod
    def ones(cls, d: int) -> "VsWeights":
        return cls(np.ones((d, d)))


@dataclass(frozen=True)
class RankHistogram:
    pre_rank_kind: str
    bins: np.ndarray
    reliability_index: float


@dataclass(frozen=True)
class DmResult:
    t_statistic: float
    p_value: float
    n: int
    mean_diff: float


@dataclass(frozen=True)
class IntervalSummary:
    nominal_level: float
    coverage: float
    average_width: float


def crps_sample(members: Sequence[float], y: float) -> float:
    """Sample CRPS: (1/K) sum |f_k - y| - (1/2K^2) sum sum |f_k - f_l|."""
    f = np.asarray(members, dtype=float)
    if f.size == 0:
        raise ValueError("empty ensemble")
    k = f.size
    term1 = np.abs(f - y).mean()
    term2 = np.abs(f[:, None] - f[None, :]).sum() / (2.0 * k * k)
    return float(term1 - term2)


def _crps_phi2_antideriv(z: np.ndarray) -> np.ndarray:
    """Antiderivative of Phi(t)^2, normalized to vanish at -infinity."""
    return z * norm.cdf(z) ** 2 + 2.0 * norm.cdf(z) * norm.pdf(z) - norm.cdf(z * np.sqrt(2.0)) / np.sqrt(np.pi)


def crps_censored_normal(mu, sigma, y):
    """Exact CRPS of the normal distribution left-censored at zero.

    Accepts scalars or broadcastable arrays. Derived from the threshold-integral
    form of the CRPS: the predictive CDF is zero below the censor point, so
    CRPS = sigma * [A(z_y) - A(z_0) + A(-z_y)] with A the antiderivative of
    Phi(t)^2, z_y = (y - mu)/sigma and z_0 = -mu/sigma.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    if np.any(y < 0):
        raise ValueError("observation must be >= 0 for the zero-censored model")
    z_y = (y - mu) / sigma
    z_0 = -mu / sigma
    out = sigma * (_crps_phi2_antideriv(z_y) - _crps_phi2_antideriv(z_0) + _crps_phi2_antideriv(-z_y))
    return float(out) if out.ndim == 0 else out


def energy_score(case: MultivariateCase) -> float:
    """Sample energy score with Euclidean norms; equals sample CRPS when D = 1."""
    f = case.forecast_matrix  # D x K
    y = case.observation_vector
    k = f.shape[1]
    term1 = np.linalg.norm(f - y[:, None], axis=0).mean()
    diff = f[:, :, None] - f[:, None, :]
    term2 = np.sqrt((diff * diff).sum(axis=0)).sum() / (2.0 * k * k)
    return float(term1 - term2)


def variogram_score(case: MultivariateCase, weights: VsWeights | None = None, p: float = 0.5) -> float:
    """Variogram score of order p (default p = 0.5) with pair weights omega."""
    if p <= 0:
        raise ValueError("p must be positive")
    f = case.forecast_matrix
    y = case.observation_vector
    d = f.shape[0]
    if weights is None:
        weights = VsWeights.ones(d)
    if weights.omega.shape != (d, d):
        raise ValueError("weight matrix dimension mismatch")
    v_obs = np.abs(y[:, None] - y[None, :]) ** p
    v_fc = (np.abs(f[:, None, :] - f[None, :, :]) ** p).mean(axis=2)
    diff = v_obs - v_fc
    np.fill_diagonal(diff, 0.0)
    return float((weights.omega * diff * diff).sum())


def skill_score(mean_score: float, mean_ref_score: float) -> float:
    """1 - mean_score / mean_ref_score (CRPSS / ESS / VSS)."""
    if mean_ref_score == 0:
        raise ValueError("reference mean score is zero; skill score undefined")
    return 1.0 - mean_score / mean_ref_score


def central_interval(members: Sequence[float], nominal_level: float) -> tuple[float, float]:
    """Empirical central prediction interval at the given nominal level.

    Uses plotting positions k/(K+1), so the full-range convention
    alpha = 2/(K+1) yields exactly [min, max] of the sample.
    """
    f = np.asarray(members, dtype=float)
    if f.size < 2:
        raise ValueError("need at least two members for an interval")
    if not 0.0 < nominal_level < 1.0:
        raise ValueError("nominal_level must lie in (0, 1)")
    alpha = 1.0 - nominal_level
    lower = np.quantile(f, alpha / 2.0, method="weibull")
    upper = np.quantile(f, 1.0 - alpha / 2.0, method="weibull")
    return float(lower), float(upper)


def interval_summary(cases: Sequence[MultivariateCase], nominal_level: float) -> IntervalSummary:
    """Pooled coverage and average width over all stations and cases (closed interval)."""
    hits = 0
    total = 0
    widths = []
    for case in cases:
        for d in range(case.n_stations):
            lo, hi = central_interval(case.forecast_matrix[d], nominal_level)
            y = case.observation_vector[d]
            hits += int(lo <= y <= hi)
            widths.append(hi - lo)
            total += 1
    return IntervalSummary(nominal_level=nominal_level,
                           coverage=hits / total,
                           average_width=float(np.mean(widths)))


def _pooled(case: MultivariateCase) -> np.ndarray:
    """(K+1) x D pooled set: observation first, then the K members."""
    return np.vstack([case.observation_vector, case.forecast_matrix.T])


def pre_rank(case: MultivariateCase, kind: str) -> np.ndarray:
    """Pre-rank of each pooled element (observation first, then members).

    average     mean over dimensions of the pooled univariate rank (ties averaged).
    band_depth  sum over dimensions of (n - r_d)(r_d - 1), pairwise-band form.
    energy_score / dependence
                leave-one-out proper score of the remaining n-1 vectors as an
                ensemble against the held-out vector (ES, or VS with p = 0.5).
    """
    if kind not in PRE_RANK_KINDS:
        raise ValueError(f"unknown pre-rank kind {kind!r}")
    pool = _pooled(case)  # n x D
    n, d = pool.shape
    if kind in ("average", "band_depth"):
        ranks = np.apply_along_axis(rankdata, 0, pool)  # n x D, ties averaged
        if kind == "average":
            return ranks.mean(axis=1)
        return ((n - ranks) * (ranks - 1.0)).sum(axis=1)
    if kind == "energy_score":
        # one pairwise Euclidean distance matrix gives every leave-one-out ES
        diff = pool[:, None, :] - pool[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        m = n - 1
        out = np.empty(n)
        for i in range(n):
            keep = np.arange(n) != i
            out[i] = dist[i, keep].mean() - dist[np.ix_(keep, keep)].sum() / (2.0 * m * m)
        return out
    # dependence: VS(p = 0.5, omega = 1) of the rest against the held-out vector
    vario = np.abs(pool[:, :, None] - pool[:, None, :]) ** 0.5  # n x D x D
    out = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        delta = vario[i] - vario[keep].mean(axis=0)
        np.fill_diagonal(delta, 0.0)
        out[i] = (delta * delta).sum()
    return out


def reliability_index(bins: np.ndarray) -> float:
    """L1 distance of the bin frequencies from the uniform histogram."""
    bins = np.asarray(bins, dtype=float)
    p_hat = bins / bins.sum()
    return float(np.abs(p_hat - 1.0 / bins.size).sum())


def rank_histogram(cases: Sequence[MultivariateCase], kind: str, seed: int = 0) -> RankHistogram:
    """Histogram of the observation's rank among pre-ranks, ties broken at random."""
    cases = list(cases)
    sizes = {c.n_members for c in cases}
    if len(sizes) != 1:
        raise ValueError("all cases must share the ensemble size")
    k = sizes.pop()
    rng = np.random.default_rng(seed)
    counts = np.zeros(k + 1, dtype=int)
    for case in cases:
        pr = pre_rank(case, kind)
        # rank of the observation's pre-rank; uniform tie resolution
        obs = pr[0]
        below = int(np.sum(pr[1:] < obs))
        tied = int(np.sum(pr[1:] == obs))
        r = below + (int(rng.integers(0, tied + 1)) if tied else 0)
        counts[r] += 1
    return RankHistogram(pre_rank_kind=kind, bins=counts,
                         reliability_index=reliability_index(counts))


def dm_test(scores_f: Sequence[float], scores_ref: Sequence[float],
            bartlett_lag: int | None = None) -> DmResult:
    """Diebold-Mariano test of equal predictive accuracy.

    Negative t favors the first series. By default the asymptotic standard
    deviation is the plain sample standard deviation of the per-case score
    differences; pass ``bartlett_lag`` for a lag-window (Bartlett) estimator.
    """
    a = np.asarray(scores_f, dtype=float)
    b = np.asarray(scores_ref, dtype=float)
    if a.shape != b.shape:
        raise ValueError("score series must be aligned")
    n = a.size
    if n < 2:
        raise ValueError("need at least two cases")
    d = a - b
    mean_diff = float(d.mean())
    if bartlett_lag is None:
        sd = float(d.std(ddof=1))
    else:
        c = d - d.mean()
        gamma0 = float((c * c).mean())
        var = gamma0
        for lag in range(1, bartlett_lag + 1):
            gamma = float((c[lag:] * c[:-lag]).mean())
            var += 2.0 * (1.0 - lag / (bartlett_lag + 1.0)) * gamma
        sd = float(np.sqrt(max(var, 0.0)))
    if sd == 0.0:
        raise ValueError("degenerate score series: zero variance of differences")
    t = mean_diff / (sd / np.sqrt(n))
    p = 2.0 * norm.sf(abs(t))
    return DmResult(t_statistic=float(t), p_value=float(p), n=n, mean_diff=mean_diff)


def benjamini_hochberg(p_values: Sequence[float], alpha: float) -> list[bool]:
    """Step-up FDR control; True marks a rejected hypothesis, original order."""
    p = np.asarray(p_values, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    m = p.size
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    thresholds = (np.arange(1, m + 1) / m) * alpha
    passing = np.nonzero(sorted_p <= thresholds)[0]
    if passing.size == 0:
        return [False] * m
    cutoff = sorted_p[passing[-1]]
    return [bool(v <= cutoff) for v in p]
