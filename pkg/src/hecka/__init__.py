"""Feature-kernel diversity for neural-network ensembles.

Modules:
    tensor: float64 tensors with reverse-mode autodiff.
    kernels: Gram matrices, HSIC/CKA and hyperspherical-energy repulsion.
    models: MLP ensembles, hypernetworks and checkpoints.
    train: regularized ensemble training and kernelized particle updates.
    ood: synthetic out-of-distribution inputs.
    metrics: uncertainty scores and OOD detection metrics.
    experiments: config-driven desk-scale studies behind the ``hecka`` CLI.
"""

from .tensor import Tensor, backward, finite_diff_check, no_grad

__version__ = "0.1.0"

__all__ = ["Tensor", "backward", "finite_diff_check", "no_grad", "__version__"]
