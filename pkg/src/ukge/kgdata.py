"""Triple stores: loading, inverse augmentation, graph statistics, synthesis.

Input files are UTF-8 TSV with one ``head<TAB>relation<TAB>tail`` triple per
line (LF endings, no header).  Dictionaries are built over the union of the
train/valid/test splits in first-seen order, so ids are dense and stable for
a fixed input.  Stores are treated as immutable after construction;
:func:`augment_inverse` returns a new store with an inverse relation (and
reversed triples) added for every base relation, which is how head prediction
is realised downstream.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    EmptySplitError,
    IdLookupError,
    ParseError,
    StateError,
    UndefinedMetricError,
)

SPLITS = ("train", "valid", "test")

#: suffix appended to a relation name to form its inverse's name
INVERSE_SUFFIX = "_inv"


@dataclass
class TripleStore:
    """Entity/relation dictionaries plus integer triple arrays per split."""

    entity_names: list[str]
    relation_names: list[str]
    train: np.ndarray  # (n, 3) int64 rows (h, r, t)
    valid: np.ndarray
    test: np.ndarray
    augmented: bool = False
    n_base_relations: int = 0
    test_only_entities: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.n_base_relations == 0:
            self.n_base_relations = len(self.relation_names)
        self._entity_ids = {name: i for i, name in enumerate(self.entity_names)}
        self._relation_ids = {name: i for i, name in enumerate(self.relation_names)}

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ConfigurationError(f"unknown split {name!r}")
        return getattr(self, name)

    def entity_id(self, name: str) -> int:
        try:
            return self._entity_ids[name]
        except KeyError:
            raise IdLookupError(f"unknown entity {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self._relation_ids[name]
        except KeyError:
            raise IdLookupError(f"unknown relation {name!r}") from None

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test], axis=0)


def _parse_file(path: str) -> list[tuple[str, str, str]]:
    rows: list[tuple[str, str, str]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            fields = line.split("\t")
            if len(fields) != 3 or any(f == "" for f in fields):
                raise ParseError(path, lineno, "expected 3 tab-separated fields")
            rows.append((fields[0], fields[1], fields[2]))
    return rows


def _dedupe(rows: list[tuple[str, str, str]]) -> list[tuple[str, str, str]]:
    return list(dict.fromkeys(rows))


def load_triples(
    train_path: str,
    valid_path: str | None = None,
    test_path: str | None = None,
) -> TripleStore:
    """Load up to three TSV splits into one store.

    Duplicate triples are dropped within each split (first occurrence kept).
    Entities appearing only in the test split are allowed but recorded in
    ``test_only_entities`` so callers can flag them.
    """
    raw = {
        "train": _dedupe(_parse_file(train_path)),
        "valid": _dedupe(_parse_file(valid_path)) if valid_path else [],
        "test": _dedupe(_parse_file(test_path)) if test_path else [],
    }
    if not raw["train"]:
        raise EmptySplitError(f"{train_path}: train split is empty")
    entity_names: list[str] = []
    relation_names: list[str] = []
    e_ids: dict[str, int] = {}
    r_ids: dict[str, int] = {}
    for split in SPLITS:
        for h, r, t in raw[split]:
            for name in (h, t):
                if name not in e_ids:
                    e_ids[name] = len(entity_names)
                    entity_names.append(name)
            if r not in r_ids:
                r_ids[r] = len(relation_names)
                relation_names.append(r)
    seen_before_test = {
        name for h, r, t in raw["train"] + raw["valid"] for name in (h, t)
    }
    test_only = sorted(
        {name for h, r, t in raw["test"] for name in (h, t)} - seen_before_test
    )
    arrays = {}
    for split in SPLITS:
        rows = [(e_ids[h], r_ids[r], e_ids[t]) for h, r, t in raw[split]]
        arrays[split] = np.asarray(rows, dtype=np.int64).reshape(len(rows), 3)
    return TripleStore(
        entity_names=entity_names,
        relation_names=relation_names,
        train=arrays["train"],
        valid=arrays["valid"],
        test=arrays["test"],
        test_only_entities=test_only,
    )


def augment_inverse(store: TripleStore) -> TripleStore:
    """Return a store with an inverse relation per base relation.

    The relation dictionary keeps base relations first, then their inverses
    in the same order (inverse id = base id + n_base).  Every split gains the
    reversed copy of each of its triples, so training sees both directions
    and evaluation can realise head prediction as tail prediction under the
    inverse relation.
    """
    if store.augmented:
        raise StateError("store is already augmented with inverse relations")
    n_base = store.n_relations
    def reverse(arr: np.ndarray) -> np.ndarray:
        if arr.size == 0:
            return arr
        rev = np.stack([arr[:, 2], arr[:, 1] + n_base, arr[:, 0]], axis=1)
        return np.concatenate([arr, rev], axis=0)
    return TripleStore(
        entity_names=list(store.entity_names),
        relation_names=list(store.relation_names)
        + [name + INVERSE_SUFFIX for name in store.relation_names],
        train=reverse(store.train),
        valid=reverse(store.valid),
        test=reverse(store.test),
        augmented=True,
        n_base_relations=n_base,
        test_only_entities=list(store.test_only_entities),
    )


# --- graph statistics -------------------------------------------------------


def krackhardt_score(store: TripleStore, relation: int) -> float:
    """Hierarchy score of one relation's directed graph.

    Over the subgraph induced by the relation's edges, consider every ordered
    pair (u, v) with u != v such that v is reachable from u along directed
    edges; the score is the fraction of those pairs where u is *not*
    reachable back from v.  Chains score 1.0, cycles 0.0.  Computed by BFS
    from every source node.
    """
    if not 0 <= relation < store.n_relations:
        raise IdLookupError(f"relation id {relation} out of range")
    triples = store.all_triples()
    edges = triples[triples[:, 1] == relation]
    if edges.shape[0] == 0:
        raise UndefinedMetricError(
            f"relation {store.relation_names[relation]!r} has no edges"
        )
    adj: dict[int, list[int]] = {}
    nodes: set[int] = set()
    for h, _, t in edges:
        adj.setdefault(int(h), []).append(int(t))
        nodes.add(int(h))
        nodes.add(int(t))
    reach: dict[int, set[int]] = {}
    for u in nodes:
        seen: set[int] = set()
        queue = deque(adj.get(u, ()))
        seen.update(adj.get(u, ()))
        while queue:
            v = queue.popleft()
            for w in adj.get(v, ()):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        reach[u] = seen
    total = 0
    one_way = 0
    for u in nodes:
        for v in reach[u]:
            if v == u:
                continue
            total += 1
            if u not in reach[v]:
                one_way += 1
    if total == 0:
        raise UndefinedMetricError(
            f"relation {store.relation_names[relation]!r} connects no ordered pairs"
        )
    return one_way / total


def relation_counts(store: TripleStore) -> np.ndarray:
    """Triple count per relation over all splits."""
    counts = np.zeros(store.n_relations, dtype=np.int64)
    triples = store.all_triples()
    if triples.size:
        ids, freq = np.unique(triples[:, 1], return_counts=True)
        counts[ids] = freq
    return counts


def stats_csv(store: TripleStore) -> str:
    """Per-relation statistics as CSV: relation, count, khs."""
    counts = relation_counts(store)
    lines = ["relation,count,khs"]
    for rid, name in enumerate(store.relation_names):
        try:
            khs = f"{krackhardt_score(store, rid):.6f}"
        except UndefinedMetricError:
            khs = ""
        lines.append(f"{name},{counts[rid]},{khs}")
    return "\n".join(lines) + "\n"


# --- synthetic data -----------------------------------------------------------


def make_synthetic(
    levels: int = 3,
    branching: int = 3,
    cycle: int | None = None,
    seed: int = 0,
) -> TripleStore:
    """Balanced-tree-plus-ring toy knowledge graph.

    Builds a balanced tree of the given depth and branching factor whose
    child->parent edges carry relation ``isa``, plus a directed ring under
    relation ``next`` over the first ``cycle`` leaves (default: all leaves).
    The union of edges is shuffled with the seed and split 80/10/10 into
    train/valid/test.
    """
    if levels < 2:
        raise ConfigurationError("make_synthetic: need at least 2 levels")
    if branching < 1:
        raise ConfigurationError("make_synthetic: branching must be >= 1")
    names: list[str] = ["n0"]
    parents: list[int] = []
    prev_level = [0]
    for _ in range(levels - 1):
        new_level = []
        for parent in prev_level:
            for _ in range(branching):
                child = len(names)
                names.append(f"n{child}")
                parents.append(parent)
                new_level.append(child)
        prev_level = new_level
    leaves = prev_level
    isa = [(child, 0, parents[child - 1]) for child in range(1, len(names))]
    if cycle is None:
        cycle = len(leaves)
    if not 2 <= cycle <= len(leaves):
        raise ConfigurationError(
            f"make_synthetic: cycle must be in [2, {len(leaves)}], got {cycle}"
        )
    ring_nodes = leaves[:cycle]
    ring = [
        (ring_nodes[i], 1, ring_nodes[(i + 1) % cycle]) for i in range(cycle)
    ]
    triples = np.asarray(isa + ring, dtype=np.int64)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(triples))
    triples = triples[perm]
    n = len(triples)
    n_train = int(n * 0.8)
    n_valid = int(n * 0.1)
    return TripleStore(
        entity_names=names,
        relation_names=["isa", "next"],
        train=triples[:n_train],
        valid=triples[n_train : n_train + n_valid],
        test=triples[n_train + n_valid :],
    )


def write_split_tsv(store: TripleStore, split: str, path: str) -> None:
    """Write one split back to TSV (names, LF endings)."""
    rows = store.split(split)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in rows:
            fh.write(
                f"{store.entity_names[h]}\t{store.relation_names[r]}\t"
                f"{store.entity_names[t]}\n"
            )
