"""Mini-batch training with Adam, early stopping and checkpoint serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor
from .layers import (NetworkSpec, ParamStore, aggregation_matrix,
                     batched_aggregation, forward, mlp_spec)
from .losses import CompositeLossConfig, loss_composite, loss_crps, loss_es


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.03
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 15
    validation_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)  # (epoch, train loss, val loss)
    best_epoch: int = -1
    best_val: float = float("inf")

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        lines += [f"{e},{tr:.10g},{va:.10g}" for e, tr, va in self.epochs]
        return "\n".join(lines) + "\n"


class Adam:
    """Adaptive-moment optimizer (beta1 = 0.9, beta2 = 0.999, eps = 1e-8)."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self):
        self.t += 1
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def make_loss(kind: str, composite: CompositeLossConfig | None = None) -> Callable:
    """Loss factory: 'crps', 'es' or 'composite' (needs a CompositeLossConfig)."""
    if kind == "crps":
        return lambda out, y: loss_crps(out, y)
    if kind == "es":
        return lambda out, y: loss_es(out, y)
    if kind == "composite":
        if composite is None:
            raise ValueError("composite loss needs a CompositeLossConfig")
        return lambda out, y: loss_composite(out, y, composite)
    raise ValueError(f"unknown loss kind {kind!r}")


def _batch_loss(store: ParamStore, feats: np.ndarray, agg: np.ndarray | None,
                obs: np.ndarray, d: int, loss_fn: Callable, mode: str,
                rng: np.random.Generator | None) -> Tensor:
    """Mean per-instance loss over a stacked batch of b graphs of d nodes each."""
    out = forward(store, feats, agg, mode=mode, rng=rng)
    b = feats.shape[0] // d
    total = None
    for i in range(b):
        li = loss_fn(out.rows(i * d, (i + 1) * d), obs[i * d:(i + 1) * d])
        total = li if total is None else total + li
    return total * (1.0 / b)


def train(spec: NetworkSpec, instances: Sequence[tuple], config: TrainConfig,
          loss_kind: str = "crps",
          composite: CompositeLossConfig | None = None,
          graph=None) -> tuple[ParamStore, TrainLog]:
    """Train on a list of (features D x F, observations D) instances.

    Each instance is one full graph (all stations of one forecast case); a
    mini-batch is a set of instances. For SAGEConv networks pass the shared
    StationGraph; dense-only networks leave it None. Early stopping returns
    the best-validation checkpoint.
    """
    if len(instances) < 2:
        raise ValueError("need at least two instances to split off validation data")
    loss_fn = make_loss(loss_kind, composite)
    rng = np.random.default_rng(config.seed)
    store = ParamStore(spec, seed=config.seed)
    agg = aggregation_matrix(graph) if graph is not None else None

    feats = np.array([np.asarray(f, dtype=float) for f, _ in instances])
    obs = np.array([np.asarray(y, dtype=float) for _, y in instances])
    d = feats.shape[1]
    n = len(instances)
    n_val = max(1, int(round(config.validation_fraction * n)))
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        raise ValueError("validation split leaves no training instances")

    val_feats = feats[val_idx].reshape(-1, feats.shape[2])
    val_obs = obs[val_idx].reshape(-1)
    val_agg = batched_aggregation(agg, len(val_idx)) if agg is not None else None

    opt = Adam(store.params, lr=config.learning_rate)
    log = TrainLog()
    best_snap = store.snapshot()
    since_best = 0
    lr_halved = False
    last_good = store.snapshot()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(train_idx)
        train_losses = []
        failed = False
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            bf = feats[batch].reshape(-1, feats.shape[2])
            bo = obs[batch].reshape(-1)
            bagg = batched_aggregation(agg, batch.size) if agg is not None else None
            opt.zero_grad()
            try:
                loss = _batch_loss(store, bf, bagg, bo, d, loss_fn, "train", rng)
            except FloatingPointError:
                failed = True
                break
            if not np.isfinite(loss.data):
                failed = True
                break
            loss.backward()
            opt.step()
            train_losses.append(float(loss.data))
        if failed:
            # restore last finished epoch, halve the learning rate once
            store.restore(last_good)
            if lr_halved:
                raise FloatingPointError("non-finite loss recurred after halving the learning rate")
            opt = Adam(store.params, lr=opt.lr / 2.0)
            lr_halved = True
            continue
        last_good = store.snapshot()

        val_loss = float(_batch_loss(store, val_feats, val_agg, val_obs, d,
                                     loss_fn, "eval", None).data)
        log.epochs.append((epoch, float(np.mean(train_losses)), val_loss))
        if val_loss < log.best_val:
            log.best_val = val_loss
            log.best_epoch = epoch
            best_snap = store.snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    store.restore(best_snap)
    return store, log


def predict(store: ParamStore, features: np.ndarray, graph=None,
            clamp_non_negative: bool = True) -> np.ndarray:
    """Eval-mode forward pass for one instance; outputs clamped to >= 0."""
    agg = aggregation_matrix(graph) if graph is not None else None
    out = forward(store, np.asarray(features, dtype=float), agg, mode="eval").data
    return np.maximum(out, 0.0) if clamp_non_negative else out


MLP_HIDDEN = 255
MLP_CONFIG = TrainConfig(learning_rate=0.01, batch_size=1200, max_epochs=500,
                         patience=5, validation_fraction=0.3)


def mlp_baseline(instances: Sequence[tuple], k: int,
                 config: TrainConfig | None = None,
                 n_hidden_layers: int = 2) -> tuple[ParamStore, TrainLog]:
    """Feed-forward reference net (two hidden layers of 255 units, CRPS loss)."""
    n_features = np.asarray(instances[0][0]).shape[1]
    spec = mlp_spec(n_features, MLP_HIDDEN, n_hidden_layers, k)
    return train(spec, instances, config or MLP_CONFIG, loss_kind="crps")


def save_checkpoint(path, store: ParamStore) -> None:
    """Portable JSON checkpoint: spec fingerprint plus f64 parameter arrays."""
    doc = {
        "fingerprint": store.spec.fingerprint(),
        "params": {k: {"shape": list(v.data.shape), "values": v.data.ravel().tolist()}
                   for k, v in store.params.items()},
        "buffers": {k: {"shape": list(v.shape), "values": v.ravel().tolist()}
                    for k, v in store.buffers.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path, spec: NetworkSpec) -> ParamStore:
    with open(path) as fh:
        doc = json.load(fh)
    if doc["fingerprint"] != spec.fingerprint():
        raise ValueError("checkpoint does not match the network spec")
    store = ParamStore(spec, seed=0)
    for k, entry in doc["params"].items():
        store.params[k].data = np.array(entry["values"], dtype=float).reshape(entry["shape"])
    for k, entry in doc["buffers"].items():
        store.buffers[k] = np.array(entry["values"], dtype=float).reshape(entry["shape"])
    return store
