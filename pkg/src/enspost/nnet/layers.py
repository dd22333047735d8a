"""Network layers: SAGEConv (mean aggregator), dense, batch norm, ReLU, dropout."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ..core import StationGraph
from .autodiff import Tensor


@dataclass(frozen=True)
class SageConv:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class BatchNorm:
    dim: int
    momentum: float = 0.1
    eps: float = 1e-5


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Dropout:
    rate: float


Layer = Union[SageConv, Dense, BatchNorm, Relu, Dropout]


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    output_members: int

    def fingerprint(self) -> str:
        return "|".join(repr(layer) for layer in self.layers) + f"|K={self.output_members}"

    def validate(self):
        dim = None
        for layer in self.layers:
            if isinstance(layer, (SageConv, Dense)):
                if dim is not None and layer.in_dim != dim:
                    raise ValueError(f"layer input {layer.in_dim} incompatible with previous output {dim}")
                dim = layer.out_dim
            elif isinstance(layer, BatchNorm) and dim is not None and layer.dim != dim:
                raise ValueError("batch norm width mismatch")
        if dim != self.output_members:
            raise ValueError("final layer must emit K values per node")


def gnn_spec(n_features: int, hidden: int, n_hidden_layers: int, k: int,
             dropout: float = 0.2) -> NetworkSpec:
    """Hidden SAGEConv blocks (conv + batch norm + ReLU + dropout) and a linear
    SAGEConv output head."""
    layers = []
    dim = n_features
    for _ in range(n_hidden_layers):
        layers += [SageConv(dim, hidden), BatchNorm(hidden), Relu(), Dropout(dropout)]
        dim = hidden
    layers.append(SageConv(dim, k))
    return NetworkSpec(layers=tuple(layers), output_members=k)


def mlp_spec(n_features: int, hidden: int, n_hidden_layers: int, k: int) -> NetworkSpec:
    layers = []
    dim = n_features
    for _ in range(n_hidden_layers):
        layers += [Dense(dim, hidden), Relu()]
        dim = hidden
    layers.append(Dense(dim, k))
    return NetworkSpec(layers=tuple(layers), output_members=k)


def aggregation_matrix(graph: StationGraph) -> np.ndarray:
    """Row-normalized adjacency: mean over neighbors, zero row for isolated nodes."""
    adj = graph.adjacency()
    deg = adj.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        agg = np.where(deg > 0, adj / np.where(deg > 0, deg, 1.0), 0.0)
    return agg


def batched_aggregation(agg: np.ndarray, batch_size: int) -> np.ndarray:
    """Block-diagonal aggregation for a stack of ``batch_size`` identical graphs."""
    return np.kron(np.eye(batch_size), agg)


class ParamStore:
    """Trainable tensors plus non-trainable batch-norm running statistics."""

    def __init__(self, spec: NetworkSpec, seed: int):
        spec.validate()
        self.spec = spec
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        for i, layer in enumerate(spec.layers):
            if isinstance(layer, SageConv):
                scale = np.sqrt(2.0 / layer.in_dim)
                self.params[f"{i}.w_self"] = Tensor(rng.normal(0, scale, (layer.in_dim, layer.out_dim)), requires_grad=True)
                self.params[f"{i}.w_neigh"] = Tensor(rng.normal(0, scale, (layer.in_dim, layer.out_dim)), requires_grad=True)
                self.params[f"{i}.bias"] = Tensor(np.zeros(layer.out_dim), requires_grad=True)
            elif isinstance(layer, Dense):
                scale = np.sqrt(2.0 / layer.in_dim)
                self.params[f"{i}.w"] = Tensor(rng.normal(0, scale, (layer.in_dim, layer.out_dim)), requires_grad=True)
                self.params[f"{i}.bias"] = Tensor(np.zeros(layer.out_dim), requires_grad=True)
            elif isinstance(layer, BatchNorm):
                self.params[f"{i}.gamma"] = Tensor(np.ones(layer.dim), requires_grad=True)
                self.params[f"{i}.beta"] = Tensor(np.zeros(layer.dim), requires_grad=True)
                self.buffers[f"{i}.running_mean"] = np.zeros(layer.dim)
                self.buffers[f"{i}.running_var"] = np.ones(layer.dim)

    def snapshot(self) -> dict:
        return {
            "params": {k: v.data.copy() for k, v in self.params.items()},
            "buffers": {k: v.copy() for k, v in self.buffers.items()},
        }

    def restore(self, snap: dict):
        for k, v in snap["params"].items():
            self.params[k].data = v.copy()
            self.params[k].grad = None
        for k, v in snap["buffers"].items():
            self.buffers[k] = v.copy()


def forward(store: ParamStore, features: np.ndarray, agg: np.ndarray | None,
            mode: str = "eval", rng: np.random.Generator | None = None) -> Tensor:
    """Run the network on an N x F feature matrix; returns an N x K tensor.

    ``agg`` is the (batched) neighbor-aggregation matrix; dense-only networks
    pass None. Dropout is active and batch norm uses batch statistics only in
    train mode.
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    if mode == "train" and rng is None:
        raise ValueError("train mode needs a random generator for dropout")
    x = Tensor(np.asarray(features, dtype=float))
    agg_t = Tensor(agg) if agg is not None else None
    for i, layer in enumerate(store.spec.layers):
        if isinstance(layer, SageConv):
            if agg_t is None:
                raise ValueError("SAGEConv layer requires an aggregation matrix")
            if agg_t.shape[0] != x.shape[0]:
                raise ValueError("feature/graph size mismatch")
            x = x @ store.params[f"{i}.w_self"] \
                + (agg_t @ x) @ store.params[f"{i}.w_neigh"] \
                + store.params[f"{i}.bias"]
        elif isinstance(layer, Dense):
            x = x @ store.params[f"{i}.w"] + store.params[f"{i}.bias"]
        elif isinstance(layer, BatchNorm):
            gamma, beta = store.params[f"{i}.gamma"], store.params[f"{i}.beta"]
            if mode == "train":
                m = x.mean(axis=0, keepdims=True)
                centered = x - m
                var = (centered * centered).mean(axis=0, keepdims=True)
                x = centered * (var + layer.eps) ** -0.5 * gamma + beta
                rm, rv = store.buffers[f"{i}.running_mean"], store.buffers[f"{i}.running_var"]
                n = x.shape[0]
                unbiased = var.data.reshape(-1) * (n / max(n - 1, 1))
                store.buffers[f"{i}.running_mean"] = (1 - layer.momentum) * rm + layer.momentum * m.data.reshape(-1)
                store.buffers[f"{i}.running_var"] = (1 - layer.momentum) * rv + layer.momentum * unbiased
            else:
                rm = store.buffers[f"{i}.running_mean"]
                rv = store.buffers[f"{i}.running_var"]
                x = (x - rm) * (rv + layer.eps) ** -0.5 * gamma + beta
        elif isinstance(layer, Relu):
            x = x.relu()
        elif isinstance(layer, Dropout):
            if mode == "train" and layer.rate > 0:
                mask = (rng.random(x.shape) >= layer.rate) / (1.0 - layer.rate)
                x = x * Tensor(mask)
        else:
            raise TypeError(f"unknown layer {layer!r}")
        if not np.all(np.isfinite(x.data)):
            raise FloatingPointError(f"non-finite activation after layer {i} ({layer!r})")
    return x
