"""Mini-batch optimization loop with negative sampling and early stopping.

An epoch is one pass over the shuffled train interactions. After every epoch
the validation split is scored with all-ranking Recall@20; the parameters
returned by fit are the ones from the best validation epoch (first epoch on
ties), not the last.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError, TrainingDivergedError
from .evaluator import evaluate
from .features import FeatureMatrix
from .graphs import GraphBundle
from .losses import BatchSample, LossWeights, total_loss
from .model import ModelParams, forward, init_params
from .optim import make_optimizer


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 2048
    max_epochs: int = 1000
    patience: int = 20
    weights: LossWeights = field(default_factory=LossWeights)
    gcn_layers: int = 2
    k_prime: int = 10
    d_e: int = 64
    d_h: int = 64
    seed: int = 2024
    optimizer: str = "adam"
    lr_decay: float = 1.0   # per-epoch multiplicative factor; 1.0 keeps lr constant

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        # zero is allowed so smoke configs can verify the null update
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")


@dataclass
class TrainState:
    params: ModelParams
    optimizer: object
    rng: np.random.Generator
    epoch: int = 0
    best_metric: float = -np.inf
    best_epoch: int = -1
    counters: dict = field(default_factory=dict)


def sample_negative(rng: np.random.Generator, num_items: int,
                    banned: set[int], user: int) -> int:
    """Uniform draw over items the user has not interacted with in train."""
    if len(banned) >= num_items:
        raise DataError(f"user {user} interacts with every item; cannot sample a negative")
    while True:
        cand = int(rng.integers(num_items))
        if cand not in banned:
            return cand


def sample_batch(ds: Dataset, rng: np.random.Generator, batch_size: int,
                 user_train: list[set[int]] | None = None) -> BatchSample:
    """Draw batch_size train interactions without replacement plus one
    rejection-sampled negative each."""
    n = len(ds.train)
    if n == 0:
        raise DataError("train split is empty")
    if user_train is None:
        user_train = ds.user_train_items()
    take = min(batch_size, n)
    rows = rng.choice(n, size=take, replace=False)
    users = ds.train[rows, 0]
    pos = ds.train[rows, 1]
    neg = np.fromiter(
        (sample_negative(rng, ds.num_items, user_train[u], int(u)) for u in users),
        dtype=np.int64, count=take)
    return BatchSample(users=users.copy(), pos_items=pos.copy(), neg_items=neg)


def _epoch_batches(ds: Dataset, rng: np.random.Generator, batch_size: int,
                   user_train: list[set[int]]):
    perm = rng.permutation(len(ds.train))
    for start in range(0, len(perm), batch_size):
        rows = perm[start:start + batch_size]
        users = ds.train[rows, 0]
        pos = ds.train[rows, 1]
        neg = np.fromiter(
            (sample_negative(rng, ds.num_items, user_train[u], int(u)) for u in users),
            dtype=np.int64, count=len(rows))
        yield BatchSample(users=users.copy(), pos_items=pos.copy(), neg_items=neg)


def train_epoch(state: TrainState, ds: Dataset, graphs: GraphBundle,
                feat: FeatureMatrix, cfg: TrainConfig,
                user_train: list[set[int]] | None = None) -> dict:
    """One optimization pass; returns the per-loss epoch means."""
    if user_train is None:
        user_train = ds.user_train_items()
    state.optimizer.lr = cfg.learning_rate * cfg.lr_decay ** state.epoch
    sums = {"total": 0.0, "bpr": 0.0, "cca": 0.0, "uia": 0.0, "reg": 0.0}
    seen = 0
    for b, batch in enumerate(_epoch_batches(ds, state.rng, cfg.batch_size, user_train)):
        # overflow inside a diverging step is reported through the explicit
        # check below, not as a numpy warning
        with np.errstate(all="ignore"):
            fp = forward(state.params, graphs, feat, cfg.gcn_layers)
            value, grads, parts = total_loss(fp, feat, batch, cfg.weights, state.counters)
        if not np.isfinite(value) or any(not np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDivergedError(
                f"non-finite loss or gradient at epoch {state.epoch} batch {b}")
        state.optimizer.step(state.params, grads)
        sums["total"] += value * len(batch)
        for name in ("bpr", "cca", "uia", "reg"):
            sums[name] += parts[name] * len(batch)
        seen += len(batch)
    if not state.params.all_finite():
        raise TrainingDivergedError(f"non-finite parameter after epoch {state.epoch}")
    state.epoch += 1
    return {f"loss_{k}": v / seen for k, v in sums.items()}


def fit(ds: Dataset, graphs: GraphBundle, feat: FeatureMatrix, cfg: TrainConfig,
        checkpoint_hook=None) -> tuple[ModelParams, list[dict]]:
    """Train until max_epochs or patience exhausted; return the parameters of
    the best validation epoch and the per-epoch log records.

    checkpoint_hook(tag, params, state) is invoked with tag "best" whenever
    validation improves and with "final" or "failed" on exit.
    """
    ss = np.random.SeedSequence(cfg.seed)
    init_ss, sample_ss = ss.spawn(2)
    params = init_params(ds.num_users, ds.num_items, cfg.d_e, feat.dim, cfg.d_h,
                         np.random.default_rng(init_ss))
    state = TrainState(params=params,
                       optimizer=make_optimizer(cfg.optimizer, params, cfg.learning_rate),
                       rng=np.random.default_rng(sample_ss))
    user_train = ds.user_train_items()
    best_params = params.copy()
    log: list[dict] = []
    try:
        for _ in range(cfg.max_epochs):
            t0 = time.perf_counter()
            record = train_epoch(state, ds, graphs, feat, cfg, user_train)
            fp = forward(state.params, graphs, feat, cfg.gcn_layers)
            report = evaluate(fp.reps, ds, "val", (20,))
            record.update({
                "epoch": state.epoch,
                "val_recall@20": report.recall[20],
                "val_ndcg@20": report.ndcg[20],
                "wall_time": time.perf_counter() - t0,
            })
            log.append(record)
            if report.recall[20] > state.best_metric:
                state.best_metric = report.recall[20]
                state.best_epoch = state.epoch
                best_params = state.params.copy()
                if checkpoint_hook is not None:
                    checkpoint_hook("best", best_params, state)
            if state.epoch - state.best_epoch >= cfg.patience:
                break
    except TrainingDivergedError:
        if checkpoint_hook is not None:
            checkpoint_hook("failed", state.params, state)
        raise
    if checkpoint_hook is not None:
        checkpoint_hook("final", state.params, state)
    return best_params, log


def format_log_record(record: dict, include_timing: bool = False) -> str:
    """Render one epoch record as a key=value line. Timing is kept out of the
    persisted log so repeated runs produce identical bytes."""
    keys = ["epoch", "loss_total", "loss_bpr", "loss_cca", "loss_uia", "loss_reg",
            "val_recall@20", "val_ndcg@20"]
    if include_timing:
        keys.append("wall_time")
    parts = []
    for key in keys:
        value = record[key]
        parts.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    return " ".join(parts)
