from .autodiff import Tensor
from .layers import (BatchNorm, Dense, Dropout, NetworkSpec, ParamStore, Relu,
                     SageConv, aggregation_matrix, batched_aggregation, forward,
                     gnn_spec, mlp_spec)
from .losses import (EPS_SMOOTH, CompositeLossConfig, loss_composite, loss_crps,
                     loss_es, loss_vs)
from .training import (Adam, TrainConfig, TrainLog, load_checkpoint, make_loss,
                       mlp_baseline, predict, save_checkpoint, train)

__all__ = [
    "Tensor", "NetworkSpec", "ParamStore", "SageConv", "Dense", "BatchNorm",
    "Relu", "Dropout", "aggregation_matrix", "batched_aggregation", "forward",
    "gnn_spec", "mlp_spec", "CompositeLossConfig", "loss_crps", "loss_es",
    "loss_vs", "loss_composite", "EPS_SMOOTH", "Adam", "TrainConfig", "TrainLog",
    "train", "predict", "mlp_baseline", "make_loss", "save_checkpoint",
    "load_checkpoint",
]
