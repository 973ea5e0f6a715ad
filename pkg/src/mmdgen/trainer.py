"""Mini-batch training of generator networks with plateau-driven
bandwidth updates, learning-rate decay, and validation early stopping.

Per epoch the training sample is reshuffled and one Adam step is taken
per mini-batch on the squared kernel discrepancy between the batch and a
freshly generated batch of equal size.  When the epoch training loss
plateaus, the kernel bank is rebuilt at the next (doubled) kernel count,
the learning rate drops by a factor of five, and the patience window is
re-read from the epoch schedule; a later validation plateau arms a STOP
flag and the next training plateau ends the run.  Fixed mode runs the
same loop with the bandwidth-update branch disabled.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .bandwidth import BASELINE_BANDWIDTHS, BandwidthPolicy, PatienceSchedule, learning_rate
from .mmd import VALIDATION_KERNEL, KernelBank, _sq_dists_fast, mmd_sq_and_grad_Y
from .nn import AdamState, MlpModel, NumericFailure, adam_step, backward, forward
from .rng import substream

MODES = ("adaptive", "fixed")
STOP_REASONS = ("early-stop", "max-epochs", "numeric-failure")


@dataclass(frozen=True)
class TrainConfig:
    """Loop hyperparameters; the batch size must divide the sample size."""

    n_bat: int
    n_mepo: int
    delta_trn: float = 1e-3
    delta_val: float = 1e-3
    mode: str = "adaptive"
    fixed_bandwidths: tuple[float, ...] | None = None
    fixed_kernel_count: int | None = None
    policy: BandwidthPolicy = field(default_factory=BandwidthPolicy)
    patience_schedule: PatienceSchedule = field(default_factory=PatienceSchedule)
    learning_rate0: float = 1e-3
    n_val: int | None = None  # default min(n_trn, 5000)
    n_rep: int = 1
    early_stopping: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n_bat < 1 or self.n_mepo < 1 or self.n_rep < 1:
            raise ValueError("n_bat, n_mepo, n_rep must be positive")
        if self.delta_trn < 0 or self.delta_val < 0:
            raise ValueError("plateau thresholds must be non-negative")
        if self.learning_rate0 <= 0:
            raise ValueError("initial learning rate must be positive")
        if self.fixed_bandwidths is not None and self.fixed_kernel_count is not None:
            raise ValueError("give either fixed bandwidths or a fixed kernel count, not both")
        if self.fixed_bandwidths is not None:
            object.__setattr__(
                self, "fixed_bandwidths", tuple(float(h) for h in self.fixed_bandwidths)
            )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss_train: float
    loss_val: float
    kernel_count: int
    learning_rate: float
    patience: int
    updated: bool
    stopped: bool


@dataclass
class TrainReport:
    """Per-epoch trajectory, the trained model, and why training ended."""

    records: list[EpochRecord]
    model: MlpModel
    bank: KernelBank
    stop_reason: str
    config: TrainConfig

    @property
    def epochs(self) -> int:
        return len(self.records)

    def min_validation_loss(self) -> float:
        return min(r.loss_val for r in self.records)

    def best_epoch(self) -> int:
        return min(self.records, key=lambda r: r.loss_val).epoch


def training_plateau(history, t: int, p_cur: int, delta: float) -> bool:
    """True when the last p_cur epochs improved at most delta (relative)
    over the loss p_cur epochs ago: 1 - L(t-k)/L(t-p_cur) <= delta for
    all k = 0..p_cur-1.  history is 1-indexed (index 0 is a sentinel).
    Only testable once t > p_cur.
    """
    if t <= p_cur:
        return False
    base = history[t - p_cur]
    return all(1.0 - history[t - k] / base <= delta for k in range(p_cur))


def validation_plateau(history, t: int, t_up: int, p_cur: int, delta: float) -> bool:
    """True when every loss in the window trails history[t_up] by at most
    delta relative improvement; checked only at t == t_up + p_cur.  Before
    the first bandwidth update t_up is 0 and history[0] is +inf, so this
    can fire only when delta >= 1."""
    if t != t_up + p_cur:
        return False
    base = history[t_up]
    return all(1.0 - history[t - k] / base <= delta for k in range(p_cur))


def compute_epoch_training_loss(batch_losses) -> float:
    """Arithmetic mean of the per-batch discrepancy values of one epoch."""
    batch_losses = np.asarray(batch_losses, dtype=np.float64)
    if batch_losses.size == 0:
        raise ValueError("need at least one batch loss")
    return float(batch_losses.mean())


class ValidationScorer:
    """Validation-loss evaluator with the data-data kernel term cached.

    The data sample and the validation bandwidths are fixed across a run,
    so their O(n_val^2) kernel sum is computed once.
    """

    def __init__(self, X_val: np.ndarray, block: int = 1024):
        self.X = np.ascontiguousarray(X_val, dtype=np.float64)
        self.block = block
        self._scales = tuple(-0.5 / (h * h) for h in VALIDATION_KERNEL.bandwidths)
        n = self.X.shape[0]
        self._xx_term = self._kernel_sum(self.X, self.X) / (n * n)

    def _kernel_sum(self, A: np.ndarray, B: np.ndarray) -> float:
        total = 0.0
        for i0 in range(0, A.shape[0], self.block):
            sub = _sq_dists_fast(A[i0 : i0 + self.block], B)
            for c in self._scales:
                total += float(np.exp(sub * c).sum())
        return total

    def score_each(self, model: MlpModel, n_rep: int, rng: np.random.Generator) -> list[float]:
        """Discrepancy between the data and each of n_rep generated samples."""
        n = self.X.shape[0]
        d_pri = model.arch.input_dim
        vals = []
        for _ in range(n_rep):
            Y, _ = forward(model, rng.standard_normal((n, d_pri)))
            v = (
                self._xx_term
                + self._kernel_sum(Y, Y) / (n * n)
                - 2.0 * (self._kernel_sum(Y, self.X) / (n * n))
            )
            vals.append(math.sqrt(max(v, 0.0)))
        return vals

    def score(self, model: MlpModel, n_rep: int, rng: np.random.Generator) -> float:
        """Mean discrepancy between the data and n_rep generated samples."""
        return float(np.mean(self.score_each(model, n_rep, rng)))


def compute_validation_loss(X_val, model: MlpModel, n_rep: int, rng) -> float:
    """Validation loss of a model against a fixed data sample.

    Generates n_rep fresh prior batches of size len(X_val), maps them
    through the model, and averages the fixed-bandwidth discrepancies.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return ValidationScorer(np.asarray(X_val, dtype=np.float64)).score(model, n_rep, rng)


def _initial_bank(X, cfg: TrainConfig) -> tuple[KernelBank, int]:
    if cfg.mode == "adaptive":
        counts = cfg.policy.kernel_counts
        return cfg.policy.bank_for(X, counts[0], substream(cfg.seed, "subsample", 0)), 0
    if cfg.fixed_kernel_count is not None:
        return (
            cfg.policy.bank_for(X, cfg.fixed_kernel_count, substream(cfg.seed, "subsample", 0)),
            0,
        )
    return KernelBank(cfg.fixed_bandwidths or BASELINE_BANDWIDTHS), 0


def train(X, cfg: TrainConfig, model: MlpModel) -> TrainReport:
    """Run the training loop on pseudo-observations X [n_trn x d].

    Returns one record per completed epoch plus the trained model; the
    stop reason is "early-stop", "max-epochs", or "numeric-failure" (the
    loop aborts cleanly when a step rejects non-finite gradients or a
    loss leaves the finite range).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("training sample must be 2-d with at least two rows")
    n_trn, d = X.shape
    if d != model.arch.output_dim:
        raise ValueError("model output dimension must match the data dimension")
    if n_trn % cfg.n_bat != 0:
        raise ValueError("batch size must divide the training sample size")
    n_batches = n_trn // cfg.n_bat
    d_pri = model.arch.input_dim
    seed = cfg.seed
    adaptive = cfg.mode == "adaptive"

    bank, bank_idx = _initial_bank(X, cfg)

    n_val = cfg.n_val if cfg.n_val is not None else min(n_trn, 5000)
    if not 1 <= n_val <= n_trn:
        raise ValueError("n_val must lie in 1..n_trn")
    if n_val < n_trn:
        rows = substream(seed, "val-subset").choice(n_trn, size=n_val, replace=False)
        X_val = X[rows]
    else:
        X_val = X
    scorer = ValidationScorer(X_val)

    adam = AdamState.for_model(model)
    shuffle_rng = substream(seed, "shuffle")
    gamma = cfg.learning_rate0
    p_cur = cfg.patience_schedule(1)
    n_up = 0
    t_up = 0
    stop_flag = False
    # Histories are 1-indexed; the +inf sentinel at index 0 renders the
    # pre-first-update validation baseline unreachable unless delta >= 1.
    hist_trn = [math.inf]
    hist_val = [math.inf]
    records: list[EpochRecord] = []
    stop_reason = "max-epochs"

    for t in range(1, cfg.n_mepo + 1):
        perm = shuffle_rng.permutation(n_trn)
        try:
            batch_vals = []
            for bi in range(n_batches):
                xb = X[perm[bi * cfg.n_bat : (bi + 1) * cfg.n_bat]]
                Z = substream(seed, "prior", t, bi).standard_normal((cfg.n_bat, d_pri))
                Y, tape = forward(model, Z)
                sq, gY = mmd_sq_and_grad_Y(xb, Y, bank)
                adam_step(model, backward(model, tape, gY), adam, gamma)
                batch_vals.append(math.sqrt(max(sq, 0.0)))
            loss_trn = compute_epoch_training_loss(batch_vals)
            loss_val = scorer.score(model, cfg.n_rep, substream(seed, "val-prior", t))
        except NumericFailure:
            stop_reason = "numeric-failure"
            break
        if not (math.isfinite(loss_trn) and math.isfinite(loss_val)):
            stop_reason = "numeric-failure"
            break
        hist_trn.append(loss_trn)
        hist_val.append(loss_val)

        updated = False
        if training_plateau(hist_trn, t, p_cur, cfg.delta_trn):
            if stop_flag:
                records.append(
                    EpochRecord(t, loss_trn, loss_val, len(bank), gamma, p_cur, False, True)
                )
                stop_reason = "early-stop"
                break
            # The update branch is a no-op in fixed mode and once the
            # kernel-count schedule is exhausted.
            if adaptive and bank_idx + 1 < len(cfg.policy.kernel_counts):
                bank_idx += 1
                n_up += 1
                bank = cfg.policy.bank_for(
                    X, cfg.policy.kernel_counts[bank_idx], substream(seed, "subsample", n_up)
                )
                t_up = t
                p_cur = cfg.patience_schedule(t)
                gamma = learning_rate(n_up, cfg.learning_rate0)
                updated = True
        if cfg.early_stopping and validation_plateau(hist_val, t, t_up, p_cur, cfg.delta_val):
            stop_flag = True
        records.append(
            EpochRecord(t, loss_trn, loss_val, len(bank), gamma, p_cur, updated, stop_flag)
        )

    return TrainReport(records, model, bank, stop_reason, cfg)


def train_fixed(X, cfg: TrainConfig, model: MlpModel) -> TrainReport:
    """Baseline mode: same loop with the bandwidth-update branch disabled."""
    return train(X, dataclasses.replace(cfg, mode="fixed"), model)
