"""Decentralized SGD and distributionally robust decentralized SGD over gossip graphs."""
from .topology import Graph, MixingMatrix, metropolis_weights, spectral_norm
from .datagen import LabeledDataset, DevicePartition, gaussian_mixture, partition_pathological
from .model import ModelSpec, init_params, loss_and_grad, accuracy
from .robust import tilt, robust_objective, kl_worst_case_weights, surrogate_value
from .trainer import TrainConfig, train, step, mix, consensus_distance

__version__ = "0.1.0"
