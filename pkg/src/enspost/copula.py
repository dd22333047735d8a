"""Empirical-copula reordering: ECC, Schaake shuffle and GNN-rank hybrids.

All three methods build per-dimension permutations from a dependence source
and impose them on independently calibrated samples, leaving every marginal
sample untouched as a multiset.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from .core import MultivariateCase


@dataclass(frozen=True)
class RankTemplate:
    """Per-dimension permutations of {1..K} plus the source they came from."""

    permutations: np.ndarray  # D x K, values 1..K
    source: str
    seed: int

    def __post_init__(self):
        p = np.asarray(self.permutations, dtype=int)
        k = p.shape[1]
        for row in p:
            if sorted(row.tolist()) != list(range(1, k + 1)):
                raise ValueError("each row must be a permutation of 1..K")
        object.__setattr__(self, "permutations", p)


def derive_seed(global_seed: int, init_time: datetime, lead_time: float) -> int:
    """Stable per-case seed so parallel case processing stays reproducible."""
    key = f"{init_time.isoformat()}|{lead_time:g}".encode()
    return (global_seed * 0x9E3779B1 + zlib.crc32(key)) % (2**31)


def _rank_row(row: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Ascending ranks 1..K with ties resolved uniformly at random."""
    jitter = rng.random(row.size)
    order = np.lexsort((jitter, row))
    ranks = np.empty(row.size, dtype=int)
    ranks[order] = np.arange(1, row.size + 1)
    return ranks


def template_from_vectors(vectors: np.ndarray, seed: int, source: str = "raw_ensemble") -> RankTemplate:
    """Rank template from a D x K dependence-source matrix."""
    v = np.asarray(vectors, dtype=float)
    if v.ndim != 2 or v.shape[1] < 2:
        raise ValueError("need a D x K matrix with K >= 2")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite entries in template source")
    rng = np.random.default_rng(seed)
    perms = np.vstack([_rank_row(row, rng) for row in v])
    return RankTemplate(permutations=perms, source=source, seed=seed)


def apply_template(calibrated: np.ndarray, template: RankTemplate) -> np.ndarray:
    """Reorder ascending calibrated rows so member k holds rank pi_d(k)."""
    c = np.asarray(calibrated, dtype=float)
    if c.shape != template.permutations.shape:
        raise ValueError("calibrated matrix and template dimensions differ")
    if np.any(np.diff(c, axis=1) < 0):
        raise ValueError("calibrated rows must be ascending")
    out = np.empty_like(c)
    for d in range(c.shape[0]):
        out[d] = c[d, template.permutations[d] - 1]
    return out


def ecc(case_raw: MultivariateCase, calibrated: np.ndarray, seed: int) -> np.ndarray:
    """Ensemble copula coupling: impose the raw ensemble's rank structure."""
    c = np.asarray(calibrated, dtype=float)
    if c.shape != case_raw.forecast_matrix.shape:
        raise ValueError("ECC requires calibrated sample size equal to the raw ensemble size")
    template = template_from_vectors(case_raw.forecast_matrix, seed, source="raw_ensemble")
    return apply_template(c, template)


def schaake_shuffle(historical: Sequence[np.ndarray], k: int, calibrated: np.ndarray,
                    seed: int) -> np.ndarray:
    """Impose the rank structure of K historical observation vectors.

    Dates are drawn uniformly without replacement from the supplied pool
    (the rolling training window of the current forecast).
    """
    pool = [np.asarray(h, dtype=float) for h in historical]
    if len(pool) < k:
        raise ValueError(f"need at least {k} complete historical vectors, got {len(pool)}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(pool), size=k, replace=False)
    matrix = np.column_stack([pool[i] for i in chosen])  # D x K
    template = template_from_vectors(matrix, seed, source="historical_obs")
    return apply_template(np.asarray(calibrated, dtype=float), template)


def hybrid_from_gnn(gnn_output: np.ndarray, calibrated: np.ndarray, seed: int) -> np.ndarray:
    """Map calibrated samples onto the rank structure of a GNN forecast matrix."""
    g = np.asarray(gnn_output, dtype=float)
    c = np.asarray(calibrated, dtype=float)
    if g.shape != c.shape:
        raise ValueError("GNN output and calibrated sample dimensions differ")
    template = template_from_vectors(g, seed, source="gnn_output")
    return apply_template(c, template)
