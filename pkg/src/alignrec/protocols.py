"""Feature-quality protocols that rank with raw features and no trained
parameters.

zero-shot
    Temporal split required: the held-out most recent item per user is the
    target. A user's feature is the unweighted mean of the history items'
    rows; candidates are all items except the history, ranked by cosine.

item-CF
    Co-occurrence cosine between item user-sets over train interactions is
    the reference signal. For each item the highest-scoring partner is the
    target; candidates are all other items ranked by feature cosine.

mask-modality
    Replaces a seeded uniform sample of item rows with externally supplied
    single-modality rows, then reruns one of the base protocols on the
    composite matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .errors import ConfigError, DimensionError
from .evaluator import EvalReport, ndcg_at_k, rank_scores, recall_at_k
from .features import FeatureMatrix
from .sparse import SparseMatrix


@dataclass(frozen=True)
class ProtocolConfig:
    ks: tuple[int, ...] = (10, 20, 50)
    similarity: str = "cosine"
    mask_ratio: float = 0.0
    mask_seed: int = 0

    def __post_init__(self):
        if not self.ks:
            raise ConfigError("protocol needs at least one K")
        if self.similarity != "cosine":
            raise ConfigError(f"unsupported similarity '{self.similarity}'")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ConfigError(f"mask_ratio must be in [0, 1], got {self.mask_ratio}")


def _unit_rows(data: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(data, axis=1)
    out = np.zeros_like(data)
    nz = norms > 0.0
    out[nz] = data[nz] / norms[nz, None]
    return out


def zero_shot_eval(feat: FeatureMatrix, ds: Dataset, cfg: ProtocolConfig) -> EvalReport:
    """Recall of each user's held-out item among feature-similar candidates."""
    if feat.rows != ds.num_items:
        raise DimensionError(f"feature rows {feat.rows} != items {ds.num_items}")
    ks = tuple(sorted(cfg.ks))
    history = [[] for _ in range(ds.num_users)]
    for u, i in ds.train:
        history[u].append(int(i))
    # canonical order: the mean must not depend on interaction order
    history = [sorted(h) for h in history]
    target: dict[int, int] = {}
    for u, i in ds.test:
        target[int(u)] = int(i)
    unit = _unit_rows(feat.data)

    rec = {k: [] for k in ks}
    ndcg = {k: [] for k in ks}
    skipped = 0
    for u in range(ds.num_users):
        if u not in target or not history[u]:
            skipped += 1
            continue
        user_feat = feat.data[history[u]].mean(axis=0)
        norm = np.linalg.norm(user_feat)
        user_unit = user_feat / norm if norm > 0.0 else user_feat
        scores = unit @ user_unit
        ranked = rank_scores(scores, set(history[u]))
        relevant = {target[u]}
        top = ranked[:max(ks)]
        for k in ks:
            rec[k].append(recall_at_k(top[:k], relevant, k))
            ndcg[k].append(ndcg_at_k(top[:k], relevant, k))
    evaluated = len(rec[ks[0]])
    if evaluated == 0:
        report = EvalReport(recall={k: 0.0 for k in ks}, ndcg={k: 0.0 for k in ks},
                            users_evaluated=0, skipped=skipped)
    else:
        report = EvalReport(
            recall={k: math.fsum(rec[k]) / evaluated for k in ks},
            ndcg={k: math.fsum(ndcg[k]) / evaluated for k in ks},
            users_evaluated=evaluated, skipped=skipped)
    report.extras["protocol"] = "zero_shot"
    return report


def itemcf_score(ds: Dataset) -> SparseMatrix:
    """Co-occurrence cosine |U_i & U_j| / sqrt(|U_i| |U_j|) over train
    interactions, diagonal excluded."""
    r = sp.csr_matrix(
        (np.ones(len(ds.train)), (ds.train[:, 0], ds.train[:, 1])),
        shape=(ds.num_users, ds.num_items))
    co = (r.T @ r).tocoo()
    deg = np.bincount(ds.train[:, 1], minlength=ds.num_items).astype(np.float64)
    keep = co.row != co.col
    rows, cols, counts = co.row[keep], co.col[keep], co.data[keep]
    values = counts / np.sqrt(deg[rows] * deg[cols])
    return SparseMatrix.from_coo(ds.num_items, ds.num_items, rows, cols, values)


def itemcf_eval(feat: FeatureMatrix, ds: Dataset, cfg: ProtocolConfig) -> EvalReport:
    """Recall of each item's best co-occurrence partner among feature-similar
    candidates."""
    if feat.rows != ds.num_items:
        raise DimensionError(f"feature rows {feat.rows} != items {ds.num_items}")
    ks = tuple(sorted(cfg.ks))
    scores_cf = itemcf_score(ds)
    unit = _unit_rows(feat.data)
    rec = {k: [] for k in ks}
    ndcg = {k: [] for k in ks}
    skipped = 0
    for j in range(ds.num_items):
        cols, vals = scores_cf.row(j)
        if cols.size == 0:
            skipped += 1
            continue
        target = int(cols[np.argmax(vals)])  # columns sorted, so ties hit the lower index
        sims = unit @ unit[j]
        ranked = rank_scores(sims, {j})
        relevant = {target}
        top = ranked[:max(ks)]
        for k in ks:
            rec[k].append(recall_at_k(top[:k], relevant, k))
            ndcg[k].append(ndcg_at_k(top[:k], relevant, k))
    evaluated = len(rec[ks[0]])
    if evaluated == 0:
        report = EvalReport(recall={k: 0.0 for k in ks}, ndcg={k: 0.0 for k in ks},
                            users_evaluated=0, skipped=skipped)
    else:
        report = EvalReport(
            recall={k: math.fsum(rec[k]) / evaluated for k in ks},
            ndcg={k: math.fsum(ndcg[k]) / evaluated for k in ks},
            users_evaluated=evaluated, skipped=skipped)
    report.extras["protocol"] = "item_cf"
    return report


def compose_masked(primary: FeatureMatrix, masked: FeatureMatrix,
                   mask_ratio: float, mask_seed: int) -> tuple[FeatureMatrix, int]:
    if masked.data.shape != primary.data.shape:
        raise DimensionError(
            f"masked feature shape {masked.data.shape} != primary {primary.data.shape}")
    n_mask = int(np.floor(mask_ratio * primary.rows))
    data = primary.data.copy()
    if n_mask > 0:
        rng = np.random.default_rng(mask_seed)
        rows = rng.choice(primary.rows, size=n_mask, replace=False)
        data[rows] = masked.data[rows]
    return FeatureMatrix(data), n_mask


def mask_modality_eval(primary: FeatureMatrix, masked: FeatureMatrix,
                       cfg: ProtocolConfig, base: str, ds: Dataset) -> EvalReport:
    """Run a base protocol on the primary matrix with a seeded fraction of
    rows swapped for the masked-modality rows."""
    if base not in ("zero_shot", "item_cf"):
        raise ConfigError(f"unknown base protocol '{base}'")
    composite, n_mask = compose_masked(primary, masked, cfg.mask_ratio, cfg.mask_seed)
    runner = zero_shot_eval if base == "zero_shot" else itemcf_eval
    report = runner(composite, ds, cfg)
    report.extras["protocol"] = f"mask_modality:{base}"
    report.extras["mask_ratio"] = cfg.mask_ratio
    report.extras["mask_seed"] = cfg.mask_seed
    report.extras["masked_rows"] = n_mask
    return report
