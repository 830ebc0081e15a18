"""Balanced pair construction, sparse/dense scenarios, and the similarity graph.

Pairs follow the closed-chain recipe: inside each class, consecutive items
form positive pairs and the last item closes the cycle back to the first;
every item also gets one negative partner from a uniformly random other class.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from ._seeding import derive_rng, derive_seed
from .datasets import DatasetError, LabeledDataset
from .noise import NoiseSpec, apply_pln, apply_sln

SAME_INDEX = "same-index"
RANDOM_INDEX = "random-index"
INDEX_MODES = (SAME_INDEX, RANDOM_INDEX)


class PairError(ValueError):
    pass


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PairDataset:
    """Index pairs into a LabeledDataset with binary labels (1 = similar).

    ``pair_labels`` are the labels the network trains on (after any noise);
    ``clean_labels`` are the labels induced by the uncorrupted class labels.
    """

    pairs: np.ndarray
    pair_labels: np.ndarray
    source: str = ""
    clean_labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        y = np.asarray(self.pair_labels, dtype=np.int64)
        clean = y if self.clean_labels is None else np.asarray(self.clean_labels, dtype=np.int64)
        if y.shape != (pairs.shape[0],) or clean.shape != y.shape:
            raise PairError(
                f"pairs/labels length mismatch: {pairs.shape[0]} pairs, {y.shape[0]} labels, "
                f"{clean.shape[0]} clean labels")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise PairError("self-pairs are not allowed")
        if y.size and (not np.isin(y, (0, 1)).all() or not np.isin(clean, (0, 1)).all()):
            raise PairError("pair labels must be 0 or 1")
        object.__setattr__(self, "pairs", _frozen(pairs, np.int64))
        object.__setattr__(self, "pair_labels", _frozen(y, np.int64))
        object.__setattr__(self, "clean_labels", _frozen(clean, np.int64))

    def __len__(self) -> int:
        return int(self.pairs.shape[0])

    @property
    def n_positive(self) -> int:
        return int(self.pair_labels.sum())

    def clean_view(self) -> "PairDataset":
        """Same pairs carrying their clean labels."""
        return PairDataset(self.pairs, self.clean_labels, self.source, self.clean_labels,
                           dict(self.meta))

    def noise_mask(self) -> np.ndarray:
        return self.pair_labels != self.clean_labels

    def nodes(self) -> np.ndarray:
        return np.unique(self.pairs)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a_index", "b_index", "y_pair", "y_pair_clean"])
            for (a, b), y, yc in zip(self.pairs.tolist(), self.pair_labels.tolist(),
                                     self.clean_labels.tolist()):
                w.writerow([a, b, y, yc])

    @classmethod
    def from_csv(cls, path, source: str = "", meta: dict | None = None) -> "PairDataset":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pairs = [[int(r["a_index"]), int(r["b_index"])] for r in rows]
        y = [int(r["y_pair"]) for r in rows]
        yc = [int(r.get("y_pair_clean", r["y_pair"])) for r in rows]
        return cls(np.array(pairs, dtype=np.int64).reshape(-1, 2), y, source, yc, meta or {})


def save_pairs(pd: PairDataset, csv_path, sidecar: dict | None = None):
    """Write the columnar CSV plus a JSON sidecar next to it."""
    csv_path = Path(csv_path)
    pd.to_csv(csv_path)
    doc = {"source": pd.source, "n_pairs": len(pd), "meta": pd.meta}
    if sidecar:
        doc.update(sidecar)
    csv_path.with_suffix(".json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_pairs(csv_path) -> PairDataset:
    csv_path = Path(csv_path)
    side = csv_path.with_suffix(".json")
    doc = json.loads(side.read_text()) if side.exists() else {}
    return PairDataset.from_csv(csv_path, doc.get("source", ""), doc.get("meta", {}))


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "dense"
    n_pairs_target: int = 1000
    runs: int = 1
    negative_index_mode: str = SAME_INDEX
    seed: int = 0

    def validate(self, n_c: int | None = None):
        if self.kind not in ("sparse", "dense"):
            raise PairError(f"scenario kind must be 'sparse' or 'dense', got {self.kind!r}")
        if self.negative_index_mode not in INDEX_MODES:
            raise PairError(f"negative_index_mode must be one of {INDEX_MODES}")
        if self.runs < 1:
            raise PairError("runs must be >= 1")
        if self.n_pairs_target < 2 or self.n_pairs_target % 2:
            raise PairError(f"n_pairs_target must be a positive even number, got {self.n_pairs_target}")
        if self.kind == "dense" and n_c is not None and self.n_pairs_target % (2 * n_c):
            raise PairError(
                f"dense n_pairs_target={self.n_pairs_target} is not divisible by 2*n_c={2 * n_c}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_pairs_target": self.n_pairs_target, "runs": self.runs,
                "negative_index_mode": self.negative_index_mode, "seed": self.seed}


def balanced_pair_indices(labels, n_c: int, mode: str, rng: np.random.Generator):
    """Core of the pair construction on a label vector.

    Returns ``(pairs, y)`` with pairs laid out item by item as
    ``[positive, negative]``, classes in order 1..n_c.
    """
    if mode not in INDEX_MODES:
        raise PairError(f"unknown negative index mode {mode!r}")
    labels = np.asarray(labels)
    members = [np.flatnonzero(labels == c) for c in range(1, n_c + 1)]
    sizes = np.array([len(m) for m in members])
    if n_c < 2:
        raise PairError("at least two classes are needed for negative pairs")
    for c, s in enumerate(sizes, start=1):
        if s < 2:
            raise PairError(f"class {c} has {s} item(s); closed chains need at least 2")
    if mode == SAME_INDEX and np.any(sizes != sizes[0]):
        raise PairError(
            f"same-index negatives need equal class sizes, got {sizes.tolist()}")

    flat = np.concatenate(members)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    blocks = []
    for c0, idx in enumerate(members):
        n = len(idx)
        other = (c0 + rng.integers(1, n_c, size=n)) % n_c
        if mode == SAME_INDEX:
            pos_in_other = np.arange(n)
        else:
            pos_in_other = np.floor(rng.random(n) * sizes[other]).astype(np.int64)
        partner = flat[starts[other] + pos_in_other]
        block = np.empty((n, 2, 2), dtype=np.int64)
        block[:, 0, 0] = idx
        block[:, 0, 1] = np.roll(idx, -1)
        block[:, 1, 0] = idx
        block[:, 1, 1] = partner
        blocks.append(block.reshape(-1, 2))
    pairs = np.concatenate(blocks)
    y = np.tile([1, 0], pairs.shape[0] // 2)
    return pairs, y


def create_balanced_pairs(ds: LabeledDataset, mode: str = SAME_INDEX, seed: int = 0) -> PairDataset:
    """Closed positive chains per class plus one negative per item.

    ``mode`` picks the negative partner inside the random other class:
    ``same-index`` takes the item at the same position, ``random-index`` a
    uniformly random one. The result holds ``2 * len(ds)`` pairs, half of them
    positive.
    """
    pairs, y = balanced_pair_indices(ds.labels, ds.n_c, mode, derive_rng(seed, "pairs"))
    return PairDataset(pairs, y, ds.name, y, {"negative_index_mode": mode})


def reduce_indices(ds: LabeledDataset, new_size: int, seed: int = 0) -> np.ndarray:
    if new_size % ds.n_c:
        raise DatasetError(f"new_size={new_size} is not divisible by n_c={ds.n_c}")
    per_class = new_size // ds.n_c
    rng = derive_rng(seed, "reduce")
    out = []
    for c in range(1, ds.n_c + 1):
        idx = ds.class_indices(c)
        if len(idx) < per_class:
            raise DatasetError(f"class {c} has {len(idx)} items, {per_class} requested")
        out.append(rng.choice(idx, per_class, replace=False))
    # keep the source order so classes stay interleaved
    return np.sort(np.concatenate(out))


def reduce_dataset(ds: LabeledDataset, new_size: int, seed: int = 0) -> LabeledDataset:
    """Class-balanced subsample with ``new_size / n_c`` items per class."""
    return ds.subset(reduce_indices(ds, new_size, seed))


def _select_balanced(y: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    half = n // 2
    zeros, ones = np.flatnonzero(y == 0), np.flatnonzero(y == 1)
    if len(zeros) < half or len(ones) < half:
        raise PairError(
            f"cannot draw {half}+{half} balanced pairs from {len(zeros)} negatives "
            f"and {len(ones)} positives")
    return np.concatenate([rng.choice(zeros, half, replace=False),
                           rng.choice(ones, half, replace=False)])


def _mode_for(labels, n_c: int, mode: str) -> str:
    # SLN makes class sizes unequal, where same-index partners may not exist.
    if mode == SAME_INDEX:
        sizes = np.bincount(np.asarray(labels) - 1, minlength=n_c)
        if np.any(sizes != sizes[0]):
            return RANDOM_INDEX
    return mode


def build_scenario(ds: LabeledDataset, cfg: ScenarioConfig,
                   noise: NoiseSpec = NoiseSpec()) -> list[PairDataset]:
    """Produce ``cfg.runs`` training pair sets for one scenario/noise setting.

    Sparse: pairs come from the whole corpus and ``n_pairs_target`` balanced
    pairs are subsampled per run (balance on the observed, post-noise labels).
    Dense: every run reduces the corpus to ``n_pairs_target / 2`` items and
    keeps all of their pairs. Pair indices always refer to ``ds``.
    """
    cfg.validate(ds.n_c)
    n = cfg.n_pairs_target
    out = []
    base = None
    if cfg.kind == "sparse" and noise.kind != "sln":
        base = balanced_pair_indices(ds.labels, ds.n_c, cfg.negative_index_mode,
                                     derive_rng(cfg.seed, "pairs"))

    for r in range(cfg.runs):
        noise_seed = derive_seed(noise.seed, "run", r)
        if cfg.kind == "sparse":
            index_map = np.arange(len(ds))
            if base is not None:
                pairs, clean = base
                mode = cfg.negative_index_mode
                y = apply_pln(clean, noise.rate, noise_seed) if noise.kind == "pln" else clean
            else:
                noisy_labels = apply_sln(ds.labels, noise.rate, ds.n_c, noise_seed)
                mode = _mode_for(noisy_labels, ds.n_c, cfg.negative_index_mode)
                pairs, y = balanced_pair_indices(noisy_labels, ds.n_c, mode,
                                                 derive_rng(cfg.seed, "pairs", r))
                clean = (ds.labels[pairs[:, 0]] == ds.labels[pairs[:, 1]]).astype(np.int64)
            keep = _select_balanced(y, n, derive_rng(cfg.seed, "subsample", r))
            pairs, y, clean = pairs[keep], y[keep], clean[keep]
        else:
            index_map = reduce_indices(ds, n // 2, derive_seed(cfg.seed, "reduce", r))
            sub_labels = ds.labels[index_map]
            pair_rng = derive_rng(cfg.seed, "pairs", r)
            if noise.kind == "sln":
                noisy_labels = apply_sln(sub_labels, noise.rate, ds.n_c, noise_seed)
                mode = _mode_for(noisy_labels, ds.n_c, cfg.negative_index_mode)
                pairs, y = balanced_pair_indices(noisy_labels, ds.n_c, mode, pair_rng)
                clean = (sub_labels[pairs[:, 0]] == sub_labels[pairs[:, 1]]).astype(np.int64)
            else:
                mode = cfg.negative_index_mode
                pairs, clean = balanced_pair_indices(sub_labels, ds.n_c, mode, pair_rng)
                y = apply_pln(clean, noise.rate, noise_seed) if noise.kind == "pln" else clean
        pairs = index_map[pairs]
        meta = {"scenario": cfg.to_dict(), "noise": noise.to_dict(), "run": r,
                "negative_index_mode": mode}
        out.append(PairDataset(pairs, y, ds.name, clean, meta))
    return out


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    """Unoriented multigraph of labeled edges (1 = similar, 0 = different).

    ``origin`` keeps each edge's endpoints in the graph it was derived from,
    which matters once nodes have been contracted.
    """

    nodes: np.ndarray
    edges: np.ndarray
    labels: np.ndarray
    origin: np.ndarray | None = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "nodes", _frozen(self.nodes, np.int64))
        object.__setattr__(self, "edges", _frozen(edges, np.int64))
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64))
        origin = edges if self.origin is None else np.asarray(self.origin).reshape(-1, 2)
        object.__setattr__(self, "origin", _frozen(origin, np.int64))

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def density(self) -> float:
        possible = comb(self.n_nodes, 2)
        return self.n_edges / possible if possible else float("nan")

    @classmethod
    def from_edges(cls, edges) -> "SimilarityGraph":
        """Build from ``(u, v, label)`` triples; labels may be 1/0 or '+'/'-'."""
        rows = [(u, v, 1 if lab in (1, True, "+") else 0) for u, v, lab in edges]
        uv = np.array([(u, v) for u, v, _ in rows], dtype=np.int64).reshape(-1, 2)
        return cls(np.unique(uv), uv, np.array([r[2] for r in rows], dtype=np.int64))


def graph_of(pd: PairDataset) -> SimilarityGraph:
    """Similarity multigraph of a pair dataset, one edge per pair."""
    return SimilarityGraph(pd.nodes(), pd.pairs, pd.pair_labels)
