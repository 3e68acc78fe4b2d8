"""Inversion-free style transfer with dual rectified flows, at toy scale."""
from . import datasets, flow_model, metrics, ode, transfer
from .flow_model import (AttentionField, DeltaTarget, DenseField, GaussianTarget,
                         PerfectCoupling, cfg_velocity, eval_velocity, rf_loss, train)
from .ode import integrate_forward, invert, reconstruct, reference_integrate, uniform_grid
from .transfer import (TransferConfig, inject_kv, noisy_pair, pseudo_inversion_transfer, v1_run,
                       v2_run, vanilla_transfer)

__version__ = "0.1.0"
