"""Quantum federated neural network simulation for transaction fraud detection."""

from .federated import (
    Aggregation,
    ClientState,
    FederatedConfig,
    GlobalModel,
    aggregate,
    noise_sweep,
    partition_iid,
    run_federated,
)
from .model import CircuitSpec, NoisePlacement, encode, forward, predict_label
from .quantum import (
    DensityMatrix,
    KrausChannel,
    NoiseKind,
    StateVector,
    apply_channel,
    apply_gate_dm,
    apply_gate_sv,
    expectation_z,
    sv_to_dm,
)
from .training import AdamConfig, AdamState, Batch, adam_step, local_train, mse_loss, param_shift_grad

__version__ = "0.1.0"
