"""Trainable parameters and the representation-building forward pass.

The computation graph is fixed:

    h_id          = mean of L+1 propagation layers of the ID embeddings
                    over the normalized bipartite adjacency
    h_con[i]      = item_emb[i] * logistic(mlp(feat[i]))   (elementwise gate)
    h_mm_items    = sim @ h_con                            (one layer)
    h_mm_users    = inter_norm @ h_mm_items
    h_items       = h_mm_items + h_id_items
    h_users       = h_mm_users + h_id_users

ForwardPass caches the intermediates so losses can push gradients with
respect to any representation back to the parameters through `backward`.
The adjacency is symmetric, which lets the backward pass reuse the same
propagation routine for the embedding gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DimensionError
from .features import FeatureMatrix
from .graphs import GraphBundle
from .sparse import SparseMatrix

PARAM_NAMES = ("user_emb", "item_emb", "gate_w1", "gate_b1", "gate_w2", "gate_b2")


@dataclass
class ModelParams:
    user_emb: np.ndarray  # num_users x d_e
    item_emb: np.ndarray  # num_items x d_e
    gate_w1: np.ndarray   # d_f x d_h
    gate_b1: np.ndarray   # d_h
    gate_w2: np.ndarray   # d_h x d_e
    gate_b2: np.ndarray   # d_e

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: getattr(self, name).copy() for name in PARAM_NAMES})

    def total_count(self) -> int:
        return sum(getattr(self, name).size for name in PARAM_NAMES)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, name))) for name in PARAM_NAMES)

    @property
    def num_users(self) -> int:
        return self.user_emb.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_emb.shape[0]

    @property
    def d_e(self) -> int:
        return self.user_emb.shape[1]


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_out, fan_in = shape[0], shape[1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(num_users: int, num_items: int, d_e: int, d_f: int, d_h: int,
                rng: np.random.Generator) -> ModelParams:
    """Seed-controlled Xavier-uniform matrices, zero biases."""
    return ModelParams(
        user_emb=xavier_uniform(rng, (num_users, d_e)),
        item_emb=xavier_uniform(rng, (num_items, d_e)),
        gate_w1=xavier_uniform(rng, (d_f, d_h)),
        gate_b1=np.zeros(d_h),
        gate_w2=xavier_uniform(rng, (d_h, d_e)),
        gate_b2=np.zeros(d_e),
    )


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(getattr(params, name)) for name in PARAM_NAMES}


@dataclass
class Representations:
    h_id_users: np.ndarray
    h_id_items: np.ndarray
    h_con_items: np.ndarray
    h_mm_items: np.ndarray
    h_mm_users: np.ndarray
    h_users: np.ndarray
    h_items: np.ndarray


@dataclass
class RepGrads:
    """Gradient accumulators in representation space, one per tensor that a
    loss may touch directly."""

    h_users: np.ndarray
    h_items: np.ndarray
    h_mm_users: np.ndarray
    h_mm_items: np.ndarray
    h_id_users: np.ndarray
    h_id_items: np.ndarray
    h_con_items: np.ndarray

    @classmethod
    def zeros(cls, num_users: int, num_items: int, d_e: int) -> "RepGrads":
        u = lambda: np.zeros((num_users, d_e))
        i = lambda: np.zeros((num_items, d_e))
        return cls(h_users=u(), h_items=i(), h_mm_users=u(), h_mm_items=i(),
                   h_id_users=u(), h_id_items=i(), h_con_items=i())

    def add_scaled(self, other: "RepGrads", scale: float) -> None:
        for name in ("h_users", "h_items", "h_mm_users", "h_mm_items",
                     "h_id_users", "h_id_items", "h_con_items"):
            getattr(self, name).__iadd__(scale * getattr(other, name))


def lightgcn_propagate(adj_norm: SparseMatrix, emb_stack: np.ndarray, layers: int) -> np.ndarray:
    """Mean of the embedding stack and its `layers` successive propagations."""
    if adj_norm.cols != emb_stack.shape[0]:
        raise DimensionError(
            f"adjacency is {adj_norm.rows}x{adj_norm.cols} but embedding stack has "
            f"{emb_stack.shape[0]} rows")
    acc = emb_stack.copy()
    h = emb_stack
    for _ in range(layers):
        h = adj_norm.dot(h)
        acc += h
    return acc / (layers + 1)


def content_gate(params: ModelParams, feat: FeatureMatrix) -> np.ndarray:
    """item_emb gated by logistic(mlp(feature)); convenience wrapper that
    discards the cache."""
    return _gate_forward(params, feat.data)[0]


def _gate_forward(params: ModelParams, feat_data: np.ndarray):
    if feat_data.shape[1] != params.gate_w1.shape[0]:
        raise DimensionError(
            f"feature dim {feat_data.shape[1]} does not match gate input {params.gate_w1.shape[0]}")
    z1 = feat_data @ params.gate_w1 + params.gate_b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.gate_w2 + params.gate_b2
    gate = expit(z2)
    h_con = params.item_emb * gate
    return h_con, z1, a1, gate


def item_multimodal(sim: SparseMatrix, h_con_items: np.ndarray) -> np.ndarray:
    return sim.dot(h_con_items)


def user_multimodal(inter_norm: SparseMatrix, h_mm_items: np.ndarray) -> np.ndarray:
    return inter_norm.dot(h_mm_items)


def fuse(h_mm: np.ndarray, h_id: np.ndarray) -> np.ndarray:
    return h_mm + h_id


def score(h_user: np.ndarray, h_item: np.ndarray) -> float:
    return float(np.dot(h_user, h_item))


@dataclass
class ForwardPass:
    """Representations plus everything needed to run the backward pass."""

    reps: Representations
    params: ModelParams
    graphs: GraphBundle
    feat: FeatureMatrix
    layers: int
    _z1: np.ndarray = field(repr=False, default=None)
    _a1: np.ndarray = field(repr=False, default=None)
    _gate: np.ndarray = field(repr=False, default=None)
    _inter_t: SparseMatrix = field(repr=False, default=None)
    _sim_t: SparseMatrix = field(repr=False, default=None)

    def zero_rep_grads(self) -> RepGrads:
        p = self.params
        return RepGrads.zeros(p.num_users, p.num_items, p.d_e)

    def backward(self, g: RepGrads) -> dict[str, np.ndarray]:
        """Chain representation-space gradients back to parameter space."""
        p = self.params
        grads = zero_grads(p)

        d_mm_users = g.h_mm_users + g.h_users
        d_id_users = g.h_id_users + g.h_users
        d_mm_items = g.h_mm_items + g.h_items + self._inter_t.dot(d_mm_users)
        d_id_items = g.h_id_items + g.h_items
        d_con = g.h_con_items + self._sim_t.dot(d_mm_items)

        # gate path
        grads["item_emb"] += self._gate * d_con
        d_z2 = (p.item_emb * d_con) * self._gate * (1.0 - self._gate)
        grads["gate_w2"] += self._a1.T @ d_z2
        grads["gate_b2"] += d_z2.sum(axis=0)
        d_a1 = d_z2 @ p.gate_w2.T
        d_z1 = d_a1 * (self._z1 > 0.0)
        grads["gate_w1"] += self.feat.data.T @ d_z1
        grads["gate_b1"] += d_z1.sum(axis=0)

        # propagation path; the adjacency is symmetric, so the transposed
        # chain is the same propagation applied to the output gradient
        d_stack = np.concatenate([d_id_users, d_id_items], axis=0)
        d_emb = lightgcn_propagate(self.graphs.adj_norm, d_stack, self.layers)
        grads["user_emb"] += d_emb[:p.num_users]
        grads["item_emb"] += d_emb[p.num_users:]
        return grads


def forward(params: ModelParams, graphs: GraphBundle, feat: FeatureMatrix,
            layers: int) -> ForwardPass:
    """Run the full representation pipeline and retain intermediates."""
    if layers < 0:
        raise DimensionError(f"layer count must be >= 0, got {layers}")
    emb_stack = np.concatenate([params.user_emb, params.item_emb], axis=0)
    h_id = lightgcn_propagate(graphs.adj_norm, emb_stack, layers)
    h_id_users = h_id[:params.num_users]
    h_id_items = h_id[params.num_users:]

    h_con, z1, a1, gate = _gate_forward(params, feat.data)
    h_mm_items = item_multimodal(graphs.sim, h_con)
    h_mm_users = user_multimodal(graphs.inter_norm, h_mm_items)

    reps = Representations(
        h_id_users=h_id_users, h_id_items=h_id_items, h_con_items=h_con,
        h_mm_items=h_mm_items, h_mm_users=h_mm_users,
        h_users=fuse(h_mm_users, h_id_users), h_items=fuse(h_mm_items, h_id_items))
    return ForwardPass(reps=reps, params=params, graphs=graphs, feat=feat,
                       layers=layers, _z1=z1, _a1=a1, _gate=gate,
                       _inter_t=graphs.inter_norm.transpose(),
                       _sim_t=graphs.sim.transpose())
