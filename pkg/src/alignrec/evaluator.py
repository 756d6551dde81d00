"""All-ranking top-K evaluation: Recall@K, NDCG@K, and the long-tail slice.

Rankings score every non-excluded item with the inner product and break ties
by lower item index. Seen positives are masked: the train split is always
excluded from the candidate set, and the validation split is additionally
excluded when scoring the test split.

Per-user metric values are accumulated with exactly-rounded summation
(math.fsum) so reported means are reproducible bit for bit and can be checked
against an independent implementation without tolerance.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .model import Representations

_CHUNK = 256


def max_workers() -> int:
    """Thread cap from ALIGNREC_THREADS; 0 or unset means automatic."""
    raw = os.environ.get("ALIGNREC_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"ALIGNREC_THREADS must be an integer, got '{raw}'") from None
    if value < 0:
        raise ConfigError("ALIGNREC_THREADS must be >= 0")
    if value == 0:
        return min(os.cpu_count() or 1, 8)
    return value


@dataclass
class EvalReport:
    recall: dict[int, float]
    ndcg: dict[int, float]
    users_evaluated: int
    slice_label: str = "full"
    skipped: int = 0
    extras: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"slice = {self.slice_label}",
                 f"users_evaluated = {self.users_evaluated}"]
        if self.skipped:
            lines.append(f"skipped = {self.skipped}")
        for key in sorted(self.extras):
            lines.append(f"{key} = {self.extras[key]}")
        for k in sorted(self.recall):
            lines.append(f"recall@{k} = {self.recall[k]!r}")
            lines.append(f"ndcg@{k} = {self.ndcg[k]!r}")
        return "\n".join(lines) + "\n"

    def to_line(self, tag: str) -> str:
        parts = [f"eval={tag}", f"slice={self.slice_label}",
                 f"users={self.users_evaluated}"]
        for k in sorted(self.recall):
            parts.append(f"recall@{k}={self.recall[k]!r}")
            parts.append(f"ndcg@{k}={self.ndcg[k]!r}")
        return " ".join(parts)


def rank_all(reps: Representations, ds: Dataset, user: int,
             exclude: set[int]) -> np.ndarray:
    """Descending-score ordering of all non-excluded items for one user."""
    scores = reps.h_items @ reps.h_users[user]
    return rank_scores(scores, exclude)


def rank_scores(scores: np.ndarray, exclude: set[int]) -> np.ndarray:
    keep = np.ones(scores.shape[0], dtype=bool)
    if exclude:
        keep[list(exclude)] = False
    idx = np.flatnonzero(keep)
    order = np.lexsort((idx, -scores[idx]))
    return idx[order]


def recall_at_k(ranked, relevant: set[int], k: int) -> float:
    if not relevant:
        return 0.0
    hits = sum(1 for item in ranked[:k] if int(item) in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked, relevant: set[int], k: int) -> float:
    """Binary gain, 1/log2(rank+1) discount with ranks starting at 1, ideal
    normalization truncated at k."""
    if not relevant:
        return 0.0
    dcg = math.fsum(1.0 / math.log2(rank + 1.0)
                    for rank, item in enumerate(ranked[:k], start=1)
                    if int(item) in relevant)
    ideal = math.fsum(1.0 / math.log2(rank + 1.0)
                      for rank in range(1, min(k, len(relevant)) + 1))
    return dcg / ideal if ideal > 0.0 else 0.0


def _relevant_by_user(arr: np.ndarray, num_users: int) -> list[set[int]]:
    out = [set() for _ in range(num_users)]
    for u, i in arr:
        out[u].add(int(i))
    return out


def _user_metrics(reps, ds, users, exclude_sets, relevant_sets, ks):
    rec = {k: [] for k in ks}
    ndcg = {k: [] for k in ks}
    for u in users:
        ranked = rank_all(reps, ds, int(u), exclude_sets[u])
        relevant = relevant_sets[u]
        top = ranked[:max(ks)]
        for k in ks:
            rec[k].append(recall_at_k(top[:k], relevant, k))
            ndcg[k].append(ndcg_at_k(top[:k], relevant, k))
    return rec, ndcg


def _evaluate_users(reps, ds, users, exclude_sets, relevant_sets, ks,
                    slice_label, skipped=0) -> EvalReport:
    ks = tuple(sorted(ks))
    if not ks:
        raise ConfigError("at least one K is required")
    if len(users) == 0:
        return EvalReport(recall={k: 0.0 for k in ks}, ndcg={k: 0.0 for k in ks},
                          users_evaluated=0, slice_label=slice_label, skipped=skipped)
    workers = max_workers()
    chunks = [users[s:s + _CHUNK] for s in range(0, len(users), _CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda c: _user_metrics(reps, ds, c, exclude_sets, relevant_sets, ks),
                chunks))
    else:
        results = [_user_metrics(reps, ds, c, exclude_sets, relevant_sets, ks)
                   for c in chunks]
    recall, ndcg = {}, {}
    for k in ks:
        rec_vals = [v for rec, _ in results for v in rec[k]]
        ndcg_vals = [v for _, nd in results for v in nd[k]]
        recall[k] = math.fsum(rec_vals) / len(rec_vals)
        ndcg[k] = math.fsum(ndcg_vals) / len(ndcg_vals)
    return EvalReport(recall=recall, ndcg=ndcg, users_evaluated=len(users),
                      slice_label=slice_label, skipped=skipped)


def evaluate(reps: Representations, ds: Dataset, split: str,
             ks=(10, 20, 50)) -> EvalReport:
    """Per-user mean Recall@K / NDCG@K over users with interactions in the
    split."""
    if split not in ("val", "test"):
        raise ConfigError(f"evaluation split must be val or test, got '{split}'")
    relevant = _relevant_by_user(ds.split(split), ds.num_users)
    exclude = _relevant_by_user(ds.train, ds.num_users)
    if split == "test":
        for u, i in ds.val:
            exclude[u].add(int(i))
    users = np.array([u for u in range(ds.num_users) if relevant[u]], dtype=np.int64)
    return _evaluate_users(reps, ds, users, exclude, relevant, ks, "full")


def longtail_evaluate(reps: Representations, ds: Dataset, ks=(10, 20, 50),
                      threshold: float = 4) -> EvalReport:
    """Test-split evaluation restricted to items with a train interaction
    count strictly below the threshold."""
    relevant = _relevant_by_user(ds.test, ds.num_users)
    degrees = ds.item_train_degree
    restricted = [{i for i in rel if degrees[i] < threshold} for rel in relevant]
    exclude = _relevant_by_user(ds.train, ds.num_users)
    for u, i in ds.val:
        exclude[u].add(int(i))
    users = np.array([u for u in range(ds.num_users) if restricted[u]], dtype=np.int64)
    skipped = sum(1 for u in range(ds.num_users) if relevant[u] and not restricted[u])
    return _evaluate_users(reps, ds, users, exclude, restricted, ks,
                           "longtail", skipped=skipped)
