"""Feed-forward spiking networks with adaptive neurons and per-synapse trainable delays."""

from adsnn.neuron import NeuronParams, LayerState, adlif_step
from adsnn.delay import DelayMatrix, DelayLine
from adsnn.network import NetworkConfig, SNNModel

__all__ = [
    "NeuronParams",
    "LayerState",
    "adlif_step",
    "DelayMatrix",
    "DelayLine",
    "NetworkConfig",
    "SNNModel",
]

__version__ = "0.1.0"
