"""Univariate calibrators: censored-normal EMOS (semi-local) and POLR ordinal regression."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.optimize import minimize
from scipy.stats import norm

from .core import EnsembleStats, VISIBILITY_CATEGORIES
from .scores import crps_censored_normal

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6  # scale floor for constant ensembles (avoids log(0) in the link)
N_CATEGORIES = 84


@dataclass(frozen=True)
class CensoredNormal:
    """Normal distribution left-censored at zero: point mass Phi(-mu/sigma) at 0."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def cdf(self, x: float) -> float:
        if x < 0:
            return 0.0
        return float(norm.cdf((x - self.mu) / self.sigma))

    def mean(self) -> float:
        u = self.mu / self.sigma
        return float(self.mu * norm.cdf(u) + self.sigma * norm.pdf(u))

    def quantile(self, level: float) -> float:
        return float(max(0.0, self.mu + self.sigma * norm.ppf(level)))


def censored_normal_cdf(dist: CensoredNormal, x: float) -> float:
    return dist.cdf(x)


def censored_normal_mean(dist: CensoredNormal) -> float:
    return dist.mean()


@dataclass(frozen=True)
class EmosParams:
    """Link coefficients: mu = g0 + g1*mean + g2*p0, sigma = exp(d0 + d1*log S)."""

    gamma0: float = 0.0
    gamma1: float = 1.0
    gamma2: float = 0.0
    delta0: float = 0.0
    delta1: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma0, self.gamma1, self.gamma2, self.delta0, self.delta1])

    @classmethod
    def from_array(cls, v) -> "EmosParams":
        return cls(*(float(x) for x in v))


def emos_link(params: EmosParams, stats: EnsembleStats) -> CensoredNormal:
    """Map ensemble statistics to a censored-normal predictive distribution."""
    s = np.sqrt(stats.variance)
    if s <= 0:
        log.warning("zero ensemble spread; flooring S at %g", SIGMA_FLOOR)
        s = SIGMA_FLOOR
    mu = params.gamma0 + params.gamma1 * stats.mean + params.gamma2 * stats.zero_fraction
    sigma = float(np.exp(params.delta0 + params.delta1 * np.log(s)))
    return CensoredNormal(mu=mu, sigma=sigma)


def _emos_objective(theta: np.ndarray, means, p0s, spreads, obs) -> float:
    mu = theta[0] + theta[1] * means + theta[2] * p0s
    sigma = np.exp(theta[3] + theta[4] * np.log(spreads))
    sigma = np.maximum(sigma, 1e-12)
    with np.errstate(over="ignore"):
        return float(np.mean(crps_censored_normal(mu, sigma, obs)))


def fit_emos(training_cases: Sequence[tuple[EnsembleStats, float]],
             init: EmosParams | None = None,
             n_restarts: int = 3, seed: int = 0) -> EmosParams:
    """Minimum-CRPS estimation via Nelder-Mead with random restarts.

    Never returns parameters scoring worse on the training set than ``init``.
    """
    if len(training_cases) < 30:
        raise ValueError("need at least 30 training cases")
    if init is None:
        init = EmosParams()
    means = np.array([s.mean for s, _ in training_cases])
    p0s = np.array([s.zero_fraction for s, _ in training_cases])
    spreads = np.array([max(np.sqrt(s.variance), SIGMA_FLOOR) for s, _ in training_cases])
    obs = np.array([y for _, y in training_cases])
    if np.any(obs < 0):
        raise ValueError("observations must be >= 0")

    if np.ptp(obs) == 0 and np.ptp(means) == 0 and np.ptp(spreads) == 0:
        warnings.warn("degenerate training set; returning initial parameters")
        return init

    def objective(theta):
        return _emos_objective(theta, means, p0s, spreads, obs)

    rng = np.random.default_rng(seed)
    starts = [init.as_array()]
    for _ in range(n_restarts):
        starts.append(init.as_array() + rng.normal(scale=0.5, size=5))

    best_theta, best_val = init.as_array(), objective(init.as_array())
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 500 * 5})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    return EmosParams.from_array(best_theta)


@dataclass(frozen=True)
class StationClustering:
    assignment: dict
    n_clusters: int

    def members(self, cluster: int) -> list:
        return [sid for sid, c in self.assignment.items() if c == cluster]


def cluster_stations(features: dict, n_clusters: int, seed: int = 0) -> StationClustering:
    """K-means over standardized per-station feature vectors.

    Clusters left with fewer than two stations are merged into the cluster of
    the nearest other centroid.
    """
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    ids = sorted(features)
    x = np.array([np.asarray(features[sid], dtype=float) for sid in ids])
    if n_clusters > len(ids) // 2:
        raise ValueError("each cluster must be able to hold at least two stations")
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - x.mean(axis=0)) / sd
    if n_clusters == 1:
        return StationClustering(assignment={sid: 0 for sid in ids}, n_clusters=1)

    centroids, labels = kmeans2(z, n_clusters, minit="++", seed=seed)
    labels = np.asarray(labels)
    # merge undersized clusters into the nearest viable centroid's cluster
    while True:
        counts = np.bincount(labels, minlength=n_clusters)
        small = [c for c in range(n_clusters) if 0 < counts[c] < 2]
        if not small:
            break
        c = small[0]
        others = [k for k in range(n_clusters) if k != c and counts[k] > 0]
        dists = [np.linalg.norm(centroids[c] - centroids[k]) for k in others]
        labels[labels == c] = others[int(np.argmin(dists))]
    # compact labels
    remap = {old: new for new, old in enumerate(sorted(set(labels.tolist())))}
    assignment = {sid: remap[int(lab)] for sid, lab in zip(ids, labels)}
    return StationClustering(assignment=assignment, n_clusters=len(remap))


def climatology_features(observations: dict, forecast_errors: dict) -> dict:
    """Per-station clustering features: 10 observation climatology quantiles
    plus the mean absolute error of the ensemble mean."""
    out = {}
    levels = np.linspace(0.05, 0.95, 10)
    for sid in observations:
        obs = np.asarray(observations[sid], dtype=float)
        err = float(np.mean(np.abs(np.asarray(forecast_errors[sid], dtype=float))))
        out[sid] = np.concatenate([np.quantile(obs, levels), [err]])
    return out


@dataclass(frozen=True)
class PolrModel:
    """Proportional odds model: P(Y <= y_i | x) = logistic(alpha_i + x.beta)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        if a.size != N_CATEGORIES:
            raise ValueError(f"expected {N_CATEGORIES} cutpoints")
        if np.any(np.diff(a) <= 0):
            raise ValueError("cutpoints must be strictly ascending")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


def _logistic(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def polr_cdf(model: PolrModel, x: Sequence[float], i: int) -> float:
    """Cumulative probability of the first i categories."""
    if not 1 <= i <= N_CATEGORIES:
        raise ValueError("category index out of range")
    eta = model.alpha[i - 1] + float(np.dot(np.asarray(x, dtype=float), model.beta))
    return float(_logistic(np.array(eta)))


def polr_pmf(model: PolrModel, x: Sequence[float]) -> np.ndarray:
    """Category probabilities from consecutive CDF differences; top CDF taken as 1."""
    xb = float(np.dot(np.asarray(x, dtype=float), model.beta))
    cdf = _logistic(model.alpha + xb)
    cdf = np.concatenate([[0.0], cdf[:-1], [1.0]])
    return np.diff(cdf)


def _polr_neg_loglik_grad(params: np.ndarray, x: np.ndarray, y_idx: np.ndarray,
                          m: int, l2: float) -> tuple[float, np.ndarray]:
    """Negative ordinal log-likelihood and gradient under the monotone
    reparametrization alpha_i = a1 + cumsum(exp(eta)); top category uses 1 - C_83."""
    n_free = N_CATEGORIES - 1  # top cutpoint pinned after fitting
    a1 = params[0]
    eta = params[1:n_free]
    beta = params[n_free:]
    alpha = np.concatenate([[a1], a1 + np.cumsum(np.exp(eta))])  # 83 free cutpoints
    xb = x @ beta
    n = x.shape[0]

    # per-sample upper/lower cumulative probabilities
    hi = np.where(y_idx < n_free, _logistic(alpha[np.minimum(y_idx, n_free - 1)] + xb), 1.0)
    lo = np.where(y_idx > 0, _logistic(alpha[np.maximum(y_idx - 1, 0)] + xb), 0.0)
    p = np.clip(hi - lo, 1e-300, None)
    nll = -np.sum(np.log(p)) + 0.5 * l2 * np.dot(beta, beta)

    # d logistic(z)/dz = s(1-s)
    dhi = np.where(y_idx < n_free, hi * (1.0 - hi), 0.0)
    dlo = np.where(y_idx > 0, lo * (1.0 - lo), 0.0)
    w_hi = dhi / p
    w_lo = dlo / p

    grad_beta = -(x.T @ (w_hi - w_lo)) + l2 * beta
    # cutpoint gradients: alpha_j = a1 + sum_{k<j} exp(eta_k) for j = 0..82
    g_alpha = np.zeros(n_free)
    np.add.at(g_alpha, np.minimum(y_idx, n_free - 1), np.where(y_idx < n_free, -w_hi, 0.0))
    np.add.at(g_alpha, np.maximum(y_idx - 1, 0), np.where(y_idx > 0, w_lo, 0.0))
    g_a1 = g_alpha.sum()
    # chain rule through the cumulative sum: d alpha_j / d eta_k = exp(eta_k) for j > k
    tail = np.cumsum(g_alpha[::-1])[::-1]
    g_eta = np.exp(eta) * tail[1:]
    return float(nll), np.concatenate([[g_a1], g_eta, grad_beta])


def fit_polr(training: Sequence[tuple[Sequence[float], int]], n_features: int,
             l2: float = 1e-6, max_iter: int = 2000, tol: float = 1e-8) -> PolrModel:
    """Maximum-likelihood POLR fit by full-batch gradient ascent with step halving.

    ``training`` pairs a feature vector with a category index in 1..84.
    """
    if len(training) < N_CATEGORIES + n_features:
        raise ValueError("too few training cases for the parameter count")
    x = np.array([np.asarray(f, dtype=float) for f, _ in training])
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature values")
    y_idx = np.array([c - 1 for _, c in training], dtype=int)
    if np.any((y_idx < 0) | (y_idx >= N_CATEGORIES)):
        raise ValueError("category out of range")
    if x.shape[1] != n_features:
        raise ValueError("feature dimension mismatch")

    n_free = N_CATEGORIES - 1
    # spread initial cutpoints over the logit range of the empirical CDF
    counts = np.bincount(y_idx, minlength=N_CATEGORIES).astype(float)
    emp_cdf = np.clip(np.cumsum(counts)[:n_free] / len(y_idx), 1e-4, 1.0 - 1e-4)
    emp_cdf = np.maximum.accumulate(emp_cdf + 1e-6 * np.arange(n_free))
    alpha0 = np.log(emp_cdf / (1.0 - emp_cdf))
    eta0 = np.log(np.maximum(np.diff(alpha0), 1e-4))
    params = np.concatenate([[alpha0[0]], eta0, np.zeros(n_features)])

    step = 1.0
    val, grad = _polr_neg_loglik_grad(params, x, y_idx, n_features, l2)
    for it in range(max_iter):
        gnorm = np.linalg.norm(grad) / len(y_idx)
        if gnorm < tol:
            break
        # step halving on the normalized gradient direction
        direction = -grad / len(y_idx)
        improved = False
        trial_step = step
        for _ in range(40):
            cand = params + trial_step * direction
            cand_val, cand_grad = _polr_neg_loglik_grad(cand, x, y_idx, n_features, l2)
            if np.isfinite(cand_val) and cand_val < val:
                params, val, grad = cand, cand_val, cand_grad
                improved = True
                break
            trial_step *= 0.5
        if not improved:
            break
        step = min(trial_step * 2.0, 1e4)
    else:
        warnings.warn("POLR fit stopped at the iteration cap (possible separation)")

    a1 = params[0]
    eta = params[1:n_free]
    beta = params[n_free:]
    alpha_free = np.concatenate([[a1], a1 + np.cumsum(np.exp(eta))])
    # top cutpoint pinned far in the tail: category 84 mass comes from 1 - C_83
    alpha = np.concatenate([alpha_free, [max(alpha_free[-1] + 1.0, 40.0)]])
    return PolrModel(alpha=alpha, beta=beta)


def sample_quantiles(dist, k: int, x: Sequence[float] | None = None) -> np.ndarray:
    """K equidistant quantiles at levels 1/(K+1) .. K/(K+1), ascending.

    ``dist`` is a CensoredNormal, or a PolrModel together with a feature
    vector ``x`` (quantile = smallest category whose CDF reaches the level).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    levels = np.arange(1, k + 1) / (k + 1.0)
    if isinstance(dist, CensoredNormal):
        return np.array([dist.quantile(lv) for lv in levels])
    if isinstance(dist, PolrModel):
        if x is None:
            raise ValueError("POLR quantiles require a feature vector")
        cdf = np.cumsum(polr_pmf(dist, x))
        cats = np.asarray(VISIBILITY_CATEGORIES.values, dtype=float)
        idx = np.searchsorted(cdf, levels, side="left")
        return cats[np.minimum(idx, N_CATEGORIES - 1)]
    raise TypeError(f"unsupported distribution type {type(dist)!r}")


def save_params(path, kind: str, **arrays) -> None:
    """Serialize fitted parameters as a JSON document."""
    doc = {"kind": kind, "schema_version": 1,
           "params": {k: np.asarray(v, dtype=float).tolist() for k, v in arrays.items()}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_params(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    doc["params"] = {k: np.asarray(v, dtype=float) for k, v in doc["params"].items()}
    return doc
