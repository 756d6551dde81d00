"""Training losses and their gradients with respect to the model parameters.

Each public loss returns (value, grads) where grads is a dict keyed like
ModelParams. Internally every loss produces gradients in representation
space; ForwardPass.backward chains them to the parameters. The combined
objective merges the weighted representation gradients first and runs a
single backward pass, which by linearity equals the weighted sum of the
component parameter gradients.

Conventions fixed here:

* All batch reductions are arithmetic means, so loss weights do not change
  meaning with batch size.
* The ranking loss is the negative log-sigmoid of the score margin
  (softplus of the negated margin), minimized.
* The alignment InfoNCE operates on L2-normalized vectors; the temperature
  only has a stable meaning on a bounded similarity scale. Candidate sets
  are the distinct positive items and distinct users of the batch, positives
  included in the denominator.
* The similarity regularizer averages over all distinct unordered item
  pairs in the batch; the feature-side cosine is input data and receives no
  gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError
from .features import FeatureMatrix
from .model import ForwardPass, RepGrads


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.01    # content-category alignment
    beta: float = 0.1      # user-item alignment
    lambda_: float = 0.1   # similarity regularizer
    tau: float = 0.2       # InfoNCE temperature

    def __post_init__(self):
        # alpha/beta/lambda may be zero for ablation runs; tau must not be
        for name in ("alpha", "beta", "lambda_"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")
        if self.tau <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.tau}")


@dataclass(frozen=True)
class BatchSample:
    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __post_init__(self):
        if not (len(self.users) == len(self.pos_items) == len(self.neg_items)):
            raise DataError("batch index arrays must have equal length")
        if len(self.users) == 0:
            raise DataError("empty batch")

    def __len__(self) -> int:
        return len(self.users)


def _bpr_rep(fp: ForwardPass, batch: BatchSample) -> tuple[float, RepGrads]:
    reps = fp.reps
    u, i, j = batch.users, batch.pos_items, batch.neg_items
    hu = reps.h_users[u]
    hi = reps.h_items[i]
    hj = reps.h_items[j]
    margin = np.sum(hi * hu, axis=1) - np.sum(hj * hu, axis=1)
    value = float(np.mean(np.logaddexp(0.0, -margin)))
    d_margin = -expit(-margin) / len(batch)
    g = fp.zero_rep_grads()
    np.add.at(g.h_users, u, d_margin[:, None] * (hi - hj))
    np.add.at(g.h_items, i, d_margin[:, None] * hu)
    np.add.at(g.h_items, j, -d_margin[:, None] * hu)
    return value, g


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    nz = norms > 0.0
    unit = np.zeros_like(x)
    unit[nz] = x[nz] / norms[nz, None]
    return unit, norms, nz


def _normalize_backward(d_unit, unit, norms, nz) -> np.ndarray:
    out = np.zeros_like(d_unit)
    inner = np.sum(unit[nz] * d_unit[nz], axis=1, keepdims=True)
    out[nz] = (d_unit[nz] - inner * unit[nz]) / norms[nz, None]
    return out


def _infonce_side(x: np.ndarray, y: np.ndarray, tau: float):
    """Cross-entropy of matching row a of x to row a of y among all rows.

    Returns the mean loss and gradients with respect to the raw (pre
    normalization) inputs.
    """
    n = x.shape[0]
    x_unit, x_norms, x_nz = _normalize_rows(x)
    y_unit, y_norms, y_nz = _normalize_rows(y)
    logits = (x_unit @ y_unit.T) / tau
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    value = float(-np.mean(np.diag(log_probs)))
    d_logits = (probs - np.eye(n)) / n
    d_x_unit = (d_logits @ y_unit) / tau
    d_y_unit = (d_logits.T @ x_unit) / tau
    return value, _normalize_backward(d_x_unit, x_unit, x_norms, x_nz), \
        _normalize_backward(d_y_unit, y_unit, y_norms, y_nz)


def _cca_rep(fp: ForwardPass, batch: BatchSample, tau: float) -> tuple[float, RepGrads]:
    reps = fp.reps
    items = np.unique(batch.pos_items)
    users = np.unique(batch.users)
    v_items, d_mm_i, d_id_i = _infonce_side(reps.h_mm_items[items],
                                            reps.h_id_items[items], tau)
    v_users, d_mm_u, d_id_u = _infonce_side(reps.h_mm_users[users],
                                            reps.h_id_users[users], tau)
    g = fp.zero_rep_grads()
    g.h_mm_items[items] += d_mm_i
    g.h_id_items[items] += d_id_i
    g.h_mm_users[users] += d_mm_u
    g.h_id_users[users] += d_id_u
    return v_items + v_users, g


def _reg_rep(fp: ForwardPass, feat: FeatureMatrix, batch: BatchSample) -> tuple[float, RepGrads]:
    reps = fp.reps
    items = np.unique(batch.pos_items)
    g = fp.zero_rep_grads()
    n = items.shape[0]
    if n < 2:
        return 0.0, g
    x = reps.h_mm_items[items]
    x_unit, x_norms, x_nz = _normalize_rows(x)
    f_unit, _, f_nz = _normalize_rows(feat.data[items])
    if not np.all(f_nz):
        raise DataError("zero-norm feature row among batch items")
    cos_x = x_unit @ x_unit.T
    cos_f = f_unit @ f_unit.T
    m = n * (n - 1) // 2
    diff = cos_x - cos_f
    iu = np.triu_indices(n, k=1)
    value = float(np.sum(np.abs(diff[iu])) / m)

    w = np.sign(diff) / m
    np.fill_diagonal(w, 0.0)
    w[~x_nz, :] = 0.0
    w[:, ~x_nz] = 0.0
    # d/dx_c of sum_{a<b} w_ab cos(x_a, x_b):
    #   ( [w @ x_unit]_c  -  sum_b w_cb cos_cb * x_unit_c ) / |x_c|
    row_mix = w @ x_unit
    diag_coef = np.sum(w * cos_x, axis=1, keepdims=True)
    d_x = np.zeros_like(x)
    d_x[x_nz] = (row_mix[x_nz] - diag_coef[x_nz] * x_unit[x_nz]) / x_norms[x_nz, None]
    g.h_mm_items[items] += d_x
    return value, g


def _uia_rep(fp: ForwardPass, batch: BatchSample,
             counters: dict | None = None) -> tuple[float, RepGrads]:
    reps = fp.reps
    u, i = batch.users, batch.pos_items
    hu = reps.h_users[u]
    hi = reps.h_items[i]
    ru = np.linalg.norm(hu, axis=1)
    ri = np.linalg.norm(hi, axis=1)
    ok = (ru > 0.0) & (ri > 0.0)
    if counters is not None and np.any(~ok):
        counters["uia_zero_norm"] = counters.get("uia_zero_norm", 0) + int(np.sum(~ok))
    cos = np.zeros(len(batch))
    cos[ok] = np.sum(hu[ok] * hi[ok], axis=1) / (ru[ok] * ri[ok])
    value = float(np.mean(1.0 - cos))

    g = fp.zero_rep_grads()
    scale = -1.0 / len(batch)
    d_hu = np.zeros_like(hu)
    d_hi = np.zeros_like(hi)
    d_hu[ok] = scale * (hi[ok] / (ru[ok] * ri[ok])[:, None]
                        - (cos[ok] / ru[ok] ** 2)[:, None] * hu[ok])
    d_hi[ok] = scale * (hu[ok] / (ru[ok] * ri[ok])[:, None]
                        - (cos[ok] / ri[ok] ** 2)[:, None] * hi[ok])
    np.add.at(g.h_users, u, d_hu)
    np.add.at(g.h_items, i, d_hi)
    return value, g


def bpr_loss(fp: ForwardPass, batch: BatchSample):
    value, g = _bpr_rep(fp, batch)
    return value, fp.backward(g)


def cca_infonce(fp: ForwardPass, batch: BatchSample, tau: float):
    value, g = _cca_rep(fp, batch, tau)
    return value, fp.backward(g)


def reg_similarity(fp: ForwardPass, feat: FeatureMatrix, batch: BatchSample):
    value, g = _reg_rep(fp, feat, batch)
    return value, fp.backward(g)


def uia_cosine(fp: ForwardPass, batch: BatchSample, counters: dict | None = None):
    value, g = _uia_rep(fp, batch, counters)
    return value, fp.backward(g)


def total_loss(fp: ForwardPass, feat: FeatureMatrix, batch: BatchSample,
               weights: LossWeights, counters: dict | None = None):
    """Weighted objective. Returns (value, grads, per-component values)."""
    v_bpr, g_bpr = _bpr_rep(fp, batch)
    v_cca, g_cca = _cca_rep(fp, batch, weights.tau)
    v_uia, g_uia = _uia_rep(fp, batch, counters)
    v_reg, g_reg = _reg_rep(fp, feat, batch)
    combined = g_bpr
    combined.add_scaled(g_cca, weights.alpha)
    combined.add_scaled(g_uia, weights.beta)
    combined.add_scaled(g_reg, weights.lambda_)
    value = v_bpr + weights.alpha * v_cca + weights.beta * v_uia + weights.lambda_ * v_reg
    parts = {"bpr": v_bpr, "cca": v_cca, "uia": v_uia, "reg": v_reg}
    return value, fp.backward(combined), parts
