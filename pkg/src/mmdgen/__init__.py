"""Generative moment-matching networks with adaptive kernel bandwidths.

Subpackages cover the full pipeline: copula data generation, kernel
discrepancy losses with quantile-derived bandwidth banks, the adaptive
training loop, digitally shifted Sobol' point sets, quasi-random sampling
from trained generators, and the MC/RQMC estimator harness with risk
functionals and goodness-of-fit statistics.
"""

from .bandwidth import (
    BASELINE_BANDWIDTHS,
    BandwidthPolicy,
    PatienceSchedule,
    learning_rate,
    pairwise_distance_quantiles,
    patience,
    prob_vector,
)
from .copulas import CopulaSpec, pseudo_obs, rosenblatt_inverse, sample
from .mmd import (
    VALIDATION_BANDWIDTHS,
    VALIDATION_KERNEL,
    KernelBank,
    mixture_kernel,
    mmd,
    mmd_sq_and_grad_Y,
    mmd_sq_grad_Y,
    rbf,
    validation_mmd,
)
from .nn import (
    AdamState,
    MlpArchitecture,
    MlpModel,
    NumericFailure,
    adam_step,
    backward,
    forward,
    init_model,
)
from .sobol import SobolStream, qrs_from_model, sobol_points, tail_count_study
from .trainer import TrainConfig, TrainReport, compute_validation_loss, train, train_fixed

__version__ = "0.1.0"
