"""Filtered ranking evaluation: MRR and Hits@K, globally and per relation.

Every triple of the chosen split is scored as a tail-prediction task: all
entities are ranked as candidate tails of (h, r, ?).  Known true tails from
the filter splits (train, valid, test by default) are removed from the
candidate set — except the gold tail itself — and ties are resolved
pessimistically: the rank counts every unfiltered competitor scoring at
least as high as the gold tail.  Head prediction is realised upstream by
evaluating over a store augmented with inverse relations.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySplitError, IdLookupError
from .kgdata import TripleStore
from .model import Model, score_candidates

HITS_KS = (1, 3, 10)


@dataclass
class RelationMetrics:
    mrr: float
    hits: dict[int, float]
    count: int


@dataclass
class EvalReport:
    mrr: float
    hits: dict[int, float]
    triple_count: int
    per_relation: dict[int, RelationMetrics] = field(default_factory=dict)


def build_filter_index(
    store: TripleStore, splits=("train", "valid", "test")
) -> dict[tuple[int, int], np.ndarray]:
    """Map (head, relation) to the sorted array of its known true tails."""
    tails: dict[tuple[int, int], set[int]] = {}
    for split in splits:
        for h, r, t in store.split(split):
            tails.setdefault((int(h), int(r)), set()).add(int(t))
    return {
        key: np.fromiter(sorted(vals), dtype=np.int64) for key, vals in tails.items()
    }


def filtered_rank(
    m: Model,
    store: TripleStore,
    triple,
    filter_splits=("train", "valid", "test"),
    _index: dict[tuple[int, int], np.ndarray] | None = None,
) -> int:
    """Pessimistic filtered rank of the gold tail among all entities.

    rank = 1 + #{ e != t unfiltered with score(h, r, e) >= score(h, r, t) }.
    """
    h, r, t = (int(v) for v in triple)
    if not 0 <= t < m.n_entities:
        raise IdLookupError(f"entity id {t} out of range")
    index = build_filter_index(store, filter_splits) if _index is None else _index
    scores = score_candidates(m, h, r)
    allowed = np.ones(m.n_entities, dtype=bool)
    known = index.get((h, r))
    if known is not None:
        allowed[known] = False
    allowed[t] = False  # the gold tail is never its own competitor
    return 1 + int(np.count_nonzero(scores[allowed] >= scores[t]))


def aggregate_ranks(ranks, relations, ks=HITS_KS) -> EvalReport:
    """Fold per-triple ranks into global and per-relation MRR / Hits@K."""
    ranks = np.asarray(ranks, dtype=np.int64)
    relations = np.asarray(relations, dtype=np.int64)
    if ranks.size == 0:
        raise EmptySplitError("aggregate_ranks: no ranks to aggregate")
    rr = 1.0 / ranks
    per_relation: dict[int, RelationMetrics] = {}
    for rel in np.unique(relations):
        sel = relations == rel
        per_relation[int(rel)] = RelationMetrics(
            mrr=float(np.mean(rr[sel])),
            hits={k: float(np.mean(ranks[sel] <= k)) for k in ks},
            count=int(np.count_nonzero(sel)),
        )
    return EvalReport(
        mrr=float(np.mean(rr)),
        hits={k: float(np.mean(ranks <= k)) for k in ks},
        triple_count=int(ranks.size),
        per_relation=per_relation,
    )


def evaluate(
    m: Model,
    store: TripleStore,
    split: str = "test",
    filter_splits=("train", "valid", "test"),
    threads: int = 1,
) -> EvalReport:
    """Rank every triple of ``split`` and aggregate the metrics.

    For the standard protocol (head and tail prediction) pass a store that
    has been augmented with inverse relations.
    """
    triples = store.split(split)
    if triples.shape[0] == 0:
        raise EmptySplitError(f"evaluate: split {split!r} is empty")
    index = build_filter_index(store, filter_splits)

    def rank_block(block: np.ndarray) -> list[int]:
        return [
            filtered_rank(m, store, row, filter_splits, _index=index)
            for row in block
        ]

    if threads <= 1:
        ranks = rank_block(triples)
    else:
        blocks = np.array_split(triples, min(threads, triples.shape[0]))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(rank_block, blocks))
        ranks = [r for part in parts for r in part]
    return aggregate_ranks(ranks, triples[:, 1])


# --- report rendering ---------------------------------------------------------


def report_csv(report: EvalReport, store: TripleStore | None = None) -> str:
    """CSV rows per relation plus a TOTAL row."""
    def name(rel: int) -> str:
        if store is not None and rel < store.n_relations:
            return store.relation_names[rel]
        return str(rel)

    lines = ["relation,count,mrr,hits1,hits3,hits10"]
    for rel in sorted(report.per_relation):
        rm = report.per_relation[rel]
        lines.append(
            f"{name(rel)},{rm.count},{rm.mrr:.6f},"
            f"{rm.hits[1]:.6f},{rm.hits[3]:.6f},{rm.hits[10]:.6f}"
        )
    lines.append(
        f"TOTAL,{report.triple_count},{report.mrr:.6f},"
        f"{report.hits[1]:.6f},{report.hits[3]:.6f},{report.hits[10]:.6f}"
    )
    return "\n".join(lines) + "\n"


def report_table(report: EvalReport, store: TripleStore | None = None) -> str:
    """Human-readable fixed-width table of the same numbers."""
    rows = [("relation", "count", "MRR", "H@1", "H@3", "H@10")]
    def name(rel: int) -> str:
        if store is not None and rel < store.n_relations:
            return store.relation_names[rel]
        return str(rel)

    for rel in sorted(report.per_relation):
        rm = report.per_relation[rel]
        rows.append(
            (
                name(rel),
                str(rm.count),
                f"{rm.mrr:.4f}",
                f"{rm.hits[1]:.4f}",
                f"{rm.hits[3]:.4f}",
                f"{rm.hits[10]:.4f}",
            )
        )
    rows.append(
        (
            "TOTAL",
            str(report.triple_count),
            f"{report.mrr:.4f}",
            f"{report.hits[1]:.4f}",
            f"{report.hits[3]:.4f}",
            f"{report.hits[10]:.4f}",
        )
    )
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    out = []
    for i, row in enumerate(rows):
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"
