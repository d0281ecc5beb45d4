"""From-scratch neural-network engine: layers, loss, optimizer."""

from .layers import (
    GRU,
    LSTM,
    Conv1D,
    Dense,
    Flatten,
    Layer,
    MaxPool1D,
    ReLU,
    Sigmoid,
    SimpleRNN,
    Tanh,
    glorot_uniform,
    sigmoid,
)
from .losses import bce_loss
from .optim import Adam

__all__ = [
    "Adam",
    "Conv1D",
    "Dense",
    "Flatten",
    "GRU",
    "LSTM",
    "Layer",
    "MaxPool1D",
    "ReLU",
    "Sigmoid",
    "SimpleRNN",
    "Tanh",
    "bce_loss",
    "glorot_uniform",
    "sigmoid",
]
