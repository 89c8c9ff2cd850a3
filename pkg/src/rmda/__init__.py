"""Regularized modernized dual averaging (RMDA) for structured sparsity.

Submodules: :mod:`~rmda.core` (parameter vectors, groups, schedules),
:mod:`~rmda.regularizers`, :mod:`~rmda.optimizers`, :mod:`~rmda.models`,
:mod:`~rmda.data`, :mod:`~rmda.metrics`, and the experiment harness in
:mod:`~rmda.config`, :mod:`~rmda.runner` and :mod:`~rmda.cli`.
"""

from .core import GroupPartition, ParamVector, Schedule, beta, validate_schedule
from .regularizers import (BoxIndicator, GroupLasso, GroupMCP, L1, L1GroupMCP, NoRegularizer,
                           SparseGroupLasso, prox, value, zero_pattern)
from .optimizers import (MsgdState, RmdaState, msgd_init, msgd_step, proxmsgd_step, rda_step,
                         restart, rmda_init, rmda_step)
from .models import LogisticRegression, Mlp, TinyConvNet, build_groups, full_gradient, loss_and_grad
from .data import AugmentationPolicy, Dataset, gen_synthetic, load_mnist_idx, sampler
from .metrics import (EpochRecord, accuracy, group_sparsity, pattern_match,
                      unstructured_sparsity, vr_diagnostic)
from .config import ExperimentConfig, load_preset
from .runner import compare, run_experiment

__version__ = "0.1.0"
