"""Desk-scale experiments: width sweeps, online vs. offline training, DIBS batches.

Every experiment takes a single master ``seed``; all data, pair, noise,
initialization and shuffling streams are derived from it, so seed fields
inside nested specs are ignored. Errors reported as "final" are the mean over
the last 10% of a run's evaluation points.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ._seeding import derive_rng, derive_seed
from .datasets import LabeledDataset, SyntheticSpec, generate_synthetic
from .dibs import DEFAULT_MAX_NODES, dibs_bounds, estimate_error_dibs, min_violation_oracle
from .noise import NoiseSpec
from .pairgraph import SAME_INDEX, PairDataset, ScenarioConfig, build_scenario, graph_of
from .snn import (LossSpec, MlpConfig, RunRecord, SiameseMLP, TrainConfig, Trainer, evaluate,
                  train)

DEFAULT_WIDTHS = (4, 8, 16, 32, 64, 128, 256, 512)
TAIL = 0.1


class ExperimentConfigError(ValueError):
    """Invalid experiment configuration, detected before any training."""


class ExperimentError(RuntimeError):
    """A run failed; completed cells were persisted before this was raised."""


def summarize(values) -> dict:
    """Median, mean and standard error (ddof=1) of a batch of run values."""
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        return {"n": 0, "median": math.nan, "mean": math.nan, "stderr": math.nan}
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return {"n": int(x.size), "median": float(np.median(x)), "mean": float(x.mean()),
            "stderr": se}


def _dump_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, rows: list[dict], columns: list[str]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


def clean_test_pairs(spec: SyntheticSpec, n_pairs: int, seed: int):
    """Held-out items from the same generator and a balanced clean pair sample."""
    ds = generate_synthetic(replace(spec, seed=derive_seed(seed, "test-data")))
    n_pairs = min(n_pairs, 2 * len(ds))
    n_pairs -= n_pairs % 2
    pairs = build_scenario(ds, ScenarioConfig("sparse", n_pairs, 1,
                                              seed=derive_seed(seed, "test-pairs")))[0]
    return ds, pairs


# --- double descent --------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    widths: tuple = DEFAULT_WIDTHS
    data: SyntheticSpec = SyntheticSpec()
    scenario: ScenarioConfig = ScenarioConfig("dense", 1000, 5)
    noise: NoiseSpec = NoiseSpec()
    loss: LossSpec = LossSpec()
    train: TrainConfig = TrainConfig(eval_every=10)
    n_test_pairs: int = 2000
    workers: int = 1
    seed: int = 0

    def validate(self):
        w = list(self.widths)
        if not w or any(int(x) < 1 for x in w):
            raise ExperimentConfigError("widths must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(w, w[1:])):
            raise ExperimentConfigError(f"widths must be strictly increasing, got {w}")
        if self.scenario.runs < 1:
            raise ExperimentConfigError("runs must be >= 1")
        if self.n_test_pairs < 2:
            raise ExperimentConfigError("n_test_pairs must be >= 2")
        if self.workers < 1:
            raise ExperimentConfigError("workers must be >= 1")
        try:
            self.data.validate()
            self.scenario.validate(self.data.n_c)
        except ValueError as exc:
            raise ExperimentConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "data": asdict(self.data),
                "scenario": self.scenario.to_dict(), "noise": self.noise.to_dict(),
                "loss": asdict(self.loss), "train": asdict(self.train),
                "n_test_pairs": self.n_test_pairs, "seed": self.seed}


@dataclass
class SweepResult:
    config: dict
    rows: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def peak(self, delta: float = 0.01):
        return find_peak(self.rows, delta) if len(self.rows) >= 3 else None


CURVE_COLUMNS = ["width", "n_params", "runs",
                 "median_train_error", "mean_train_error", "stderr_train_error",
                 "median_test_error", "mean_test_error", "stderr_test_error"]


def _sweep_cell(args):
    ds, pairs, test_ds, test_pairs, mlp, loss, tcfg = args
    return train(ds, pairs, mlp, loss, tcfg, eval_pairs=test_pairs, eval_ds=test_ds)


def _sweep_rows(cfg: SweepConfig, cells: list[dict]) -> list[dict]:
    rows = []
    for w in cfg.widths:
        mine = [c for c in cells if c["width"] == w]
        if not mine:
            continue
        tr = summarize(c["final_train_error"] for c in mine)
        te = summarize(c["final_test_error"] for c in mine)
        rows.append({"width": int(w), "n_params": mine[0]["n_params"], "runs": len(mine),
                     "median_train_error": tr["median"], "mean_train_error": tr["mean"],
                     "stderr_train_error": tr["stderr"], "median_test_error": te["median"],
                     "mean_test_error": te["mean"], "stderr_test_error": te["stderr"]})
    return rows


def _persist_sweep(out: Path, result: SweepResult, status: str, error: str | None = None):
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "curves.csv", result.rows, CURVE_COLUMNS)
    doc = {"status": status, "config": result.config, "cells": result.cells,
           "rows": result.rows}
    if len(result.rows) >= 3:
        doc["peak_width"] = result.peak()
    if error is not None:
        doc["error"] = error
    _dump_json(out / "summary.json", doc)


def dd_sweep(cfg: SweepConfig, out_dir=None) -> SweepResult:
    """Train every (width, run) cell and aggregate final errors per width.

    Run ``r`` uses the same pair set and training seed at every width, so the
    width is the only thing that changes along a curve. With ``out_dir`` each
    cell is written to ``run_<i>.csv`` as soon as it finishes; on failure the
    completed cells and a partial summary are kept and ExperimentError raised.
    """
    cfg.validate()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    ds = generate_synthetic(replace(cfg.data, seed=derive_seed(cfg.seed, "train-data")))
    scen = replace(cfg.scenario, seed=derive_seed(cfg.seed, "pairs"))
    noise = replace(cfg.noise, seed=derive_seed(cfg.seed, "noise"))
    pair_sets = build_scenario(ds, scen, noise)
    test_ds, test_pairs = clean_test_pairs(cfg.data, cfg.n_test_pairs, cfg.seed)

    jobs, keys = [], []
    for w in cfg.widths:
        for r, pairs in enumerate(pair_sets):
            run_seed = derive_seed(cfg.seed, "run", r)
            mlp = MlpConfig(ds.dim, int(w), seed=run_seed)
            jobs.append((ds, pairs, test_ds, test_pairs, mlp, cfg.loss,
                         replace(cfg.train, seed=run_seed)))
            keys.append((int(w), r, int(np.sum(pairs.noise_mask())), len(pairs)))

    result = SweepResult(cfg.to_dict())

    def collect(i, rec: RunRecord):
        w, r, n_noisy, n_pairs = keys[i]
        result.records.append(rec)
        result.cells.append({"index": i, "width": w, "run": r, "n_pairs": n_pairs,
                             "n_noisy_pairs": n_noisy, "n_params": rec.config["n_params"],
                             "final_train_error": rec.asymptotic("train_error", TAIL),
                             "final_test_error": rec.asymptotic("test_error", TAIL)})
        if out is not None:
            rec.to_csv(out / f"run_{i}.csv")

    try:
        if cfg.workers == 1:
            for i, job in enumerate(jobs):
                collect(i, _sweep_cell(job))
        else:
            with ProcessPoolExecutor(cfg.workers) as pool:
                for i, rec in enumerate(pool.map(_sweep_cell, jobs)):
                    collect(i, rec)
    except Exception as exc:
        result.rows = _sweep_rows(cfg, result.cells)
        if out is not None:
            _persist_sweep(out, result, "failed", f"{type(exc).__name__}: {exc}")
        raise ExperimentError(f"sweep cell {len(result.cells)} failed: {exc}") from exc

    result.rows = _sweep_rows(cfg, result.cells)
    if out is not None:
        _persist_sweep(out, result, "complete")
    return result


def find_peak(table, delta: float = 0.01, key: str = "median_test_error"):
    """Interior width of the highest median test error, if it stands out by ``delta``.

    ``table`` is a sequence of row dicts (``width`` and ``key``) or of
    ``(width, value)`` pairs ordered by width. The interior maximum must beat
    the lowest value on its left and the lowest on its right by at least
    ``delta``; otherwise there is no peak and None is returned.
    """
    rows = list(table)
    if len(rows) < 3:
        raise ExperimentConfigError(f"peak detection needs >= 3 grid points, got {len(rows)}")
    if isinstance(rows[0], dict):
        widths = [r["width"] for r in rows]
        vals = np.array([r[key] for r in rows], dtype=np.float64)
    else:
        widths = [r[0] for r in rows]
        vals = np.array([r[1] for r in rows], dtype=np.float64)
    k = 1 + int(np.argmax(vals[1:-1]))
    if vals[k] - vals[:k].min() >= delta and vals[k] - vals[k + 1:].min() >= delta:
        return widths[k]
    return None


# --- online vs. offline ----------------------------------------------------

@dataclass(frozen=True)
class OnlineOfflineConfig:
    """Offline: ``offline_epochs`` passes over one fixed pair set. Online: the
    same number of weight updates, each minibatch made of pairs never seen
    before, built from freshly generated items."""

    # tighter blobs than the sweep default: at spread 1 the clean offline
    # world has not converged in 40 epochs
    data: SyntheticSpec = SyntheticSpec(spread=0.5)
    offline: ScenarioConfig = ScenarioConfig("dense", 1000, 1)
    offline_epochs: int = 40
    online_pairs: int = 50000
    noise_kinds: tuple = ("none", "pln", "sln")
    effective_noise: float = 0.1
    width: int = 200
    loss: LossSpec = LossSpec()
    train: TrainConfig = TrainConfig(learning_rate=1e-3)
    eval_every: int = 8
    n_test_pairs: int = 2000
    runs: int = 5
    seed: int = 0

    @property
    def offline_batches_per_epoch(self) -> int:
        return math.ceil(self.offline.n_pairs_target / self.train.batch_size)

    @property
    def iterations(self) -> int:
        return self.offline_epochs * self.offline_batches_per_epoch

    def iteration_grid(self) -> list[int]:
        grid = list(range(self.eval_every, self.iterations + 1, self.eval_every))
        if not grid or grid[-1] != self.iterations:
            grid.append(self.iterations)
        return grid

    def noise_specs(self) -> list[NoiseSpec]:
        return [NoiseSpec() if k == "none" else NoiseSpec.matched(k, self.effective_noise)
                for k in self.noise_kinds]

    def validate(self):
        if self.offline_epochs < 1 or self.runs < 1 or self.eval_every < 1 or self.width < 1:
            raise ExperimentConfigError("offline_epochs, runs, eval_every and width must be >= 1")
        need = self.iterations * self.train.batch_size
        if self.online_pairs < need:
            raise ExperimentConfigError(
                f"online pair budget {self.online_pairs} is smaller than iterations x batch "
                f"= {self.iterations} x {self.train.batch_size} = {need}")
        try:
            self.data.validate()
            self.offline.validate(self.data.n_c)
            self.noise_specs()
        except ValueError as exc:
            raise ExperimentConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {"data": asdict(self.data), "offline": self.offline.to_dict(),
                "offline_epochs": self.offline_epochs, "online_pairs": self.online_pairs,
                "noise_kinds": list(self.noise_kinds), "effective_noise": self.effective_noise,
                "width": self.width, "loss": asdict(self.loss), "train": asdict(self.train),
                "eval_every": self.eval_every, "n_test_pairs": self.n_test_pairs,
                "runs": self.runs, "seed": self.seed, "iterations": self.iterations}


class FreshPairStream:
    """Minibatches of pairs that are never reused.

    Each chunk is a newly generated synthetic dataset; its pair set is built
    with the noise applied, duplicates of an unordered pair are dropped, and
    the rest is consumed in shuffled order. ``consumed`` holds every
    ``(chunk_id, a, b)`` handed out and is checked on every draw.
    """

    def __init__(self, spec: SyntheticSpec, noise: NoiseSpec, seed: int):
        self.spec, self.noise, self.seed = spec, noise, seed
        self.chunk_id = -1
        self.consumed: set = set()
        self._items = self._pairs = self._y = None
        self._pos = 0

    def _next_chunk(self):
        self.chunk_id += 1
        k = self.chunk_id
        ds = generate_synthetic(replace(self.spec, seed=derive_seed(self.seed, "chunk", k)))
        scen = ScenarioConfig("dense", 2 * len(ds), 1, SAME_INDEX,
                              derive_seed(self.seed, "chunk-pairs", k))
        pd = build_scenario(ds, scen, replace(self.noise, seed=derive_seed(self.seed, "chunk-noise", k)))[0]
        lo = np.minimum(pd.pairs[:, 0], pd.pairs[:, 1])
        hi = np.maximum(pd.pairs[:, 0], pd.pairs[:, 1])
        _, first = np.unique(np.stack([lo, hi], axis=1), axis=0, return_index=True)
        keep = np.sort(first)
        order = derive_rng(self.seed, "chunk-order", k).permutation(keep.size)
        self._items = ds.items
        self._pairs = pd.pairs[keep][order]
        self._y = pd.pair_labels[keep][order]
        self._pos = 0

    def draw(self, n: int):
        xa, xb, ys = [], [], []
        while n > 0:
            if self._pairs is None or self._pos >= len(self._pairs):
                self._next_chunk()
            take = min(n, len(self._pairs) - self._pos)
            p = self._pairs[self._pos:self._pos + take]
            for a, b in p.tolist():
                key = (self.chunk_id, min(a, b), max(a, b))
                if key in self.consumed:
                    raise ExperimentError(f"online pair {key} consumed twice")
                self.consumed.add(key)
            xa.append(self._items[p[:, 0]])
            xb.append(self._items[p[:, 1]])
            ys.append(self._y[self._pos:self._pos + take])
            self._pos += take
            n -= take
        return np.concatenate(xa), np.concatenate(xb), np.concatenate(ys)


def _offline_world(cfg: OnlineOfflineConfig, noise: NoiseSpec, run: int, test_ds, test_pairs,
                   grid: list[int]) -> RunRecord:
    seed = derive_seed(cfg.seed, "offline", noise.kind, run)
    ds = generate_synthetic(replace(cfg.data, seed=derive_seed(seed, "data")))
    scen = replace(cfg.offline, runs=1, seed=derive_seed(seed, "pairs"))
    pairs = build_scenario(ds, scen, replace(noise, seed=derive_seed(seed, "noise")))[0]
    net = SiameseMLP(MlpConfig(ds.dim, cfg.width, seed=derive_seed(cfg.seed, "net", run)), cfg.loss)
    trainer = Trainer(net, cfg.train)
    items = np.asarray(ds.items, dtype=net.theta.dtype)
    test_items = np.asarray(test_ds.items, dtype=net.theta.dtype)
    P, Y = pairs.pairs, pairs.pair_labels
    rng = derive_rng(seed, "shuffle")
    record = RunRecord(config={"world": "offline", "noise": noise.to_dict(), "run": run,
                               "n_pairs": len(pairs)}, seed=seed)
    marks = set(grid)
    bs = cfg.train.batch_size
    for _ in range(cfg.offline_epochs):
        order = rng.permutation(len(P))
        for start in range(0, len(order), bs):
            idx = order[start:start + bs]
            trainer.step(items[P[idx, 0]], items[P[idx, 1]], Y[idx])
            if trainer.iterations in marks:
                tr_err, tr_loss = evaluate(net, items, P, Y)
                te_err = evaluate(net, test_items, test_pairs.pairs, test_pairs.pair_labels)[0]
                record.append(trainer.iterations, tr_err, te_err, tr_loss)
    return record


def _online_world(cfg: OnlineOfflineConfig, noise: NoiseSpec, run: int, test_ds, test_pairs,
                  grid: list[int]) -> tuple[RunRecord, int]:
    seed = derive_seed(cfg.seed, "online", noise.kind, run)
    stream = FreshPairStream(cfg.data, noise, seed)
    net = SiameseMLP(MlpConfig(cfg.data.d, cfg.width, seed=derive_seed(cfg.seed, "net", run)),
                     cfg.loss)
    trainer = Trainer(net, cfg.train)
    test_items = np.asarray(test_ds.items, dtype=net.theta.dtype)
    record = RunRecord(config={"world": "online", "noise": noise.to_dict(), "run": run},
                       seed=seed)
    marks = set(grid)
    for _ in range(cfg.iterations):
        xa, xb, y = stream.draw(cfg.train.batch_size)
        trainer.step(xa.astype(net.theta.dtype), xb.astype(net.theta.dtype), y)
        if trainer.iterations in marks:
            te_err, te_loss = evaluate(net, test_items, test_pairs.pairs, test_pairs.pair_labels)
            record.append(trainer.iterations, math.nan, te_err, te_loss)
    return record, len(stream.consumed)


@dataclass
class OnlineOfflineResult:
    config: dict
    steps: list
    median_test: dict = field(default_factory=dict)     # (world, noise kind) -> curve
    final_test: dict = field(default_factory=dict)      # (world, noise kind) -> median
    offline_final_train: dict = field(default_factory=dict)
    records: list = field(default_factory=list)          # (world, kind, run, RunRecord)
    consumed_pairs: dict = field(default_factory=dict)


def online_offline(cfg: OnlineOfflineConfig, out_dir=None) -> OnlineOfflineResult:
    """Both worlds per noise kind and run, evaluated on one clean held-out pair set."""
    cfg.validate()
    grid = cfg.iteration_grid()
    test_ds, test_pairs = clean_test_pairs(cfg.data, cfg.n_test_pairs, cfg.seed)
    result = OnlineOfflineResult(cfg.to_dict(), grid)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    i = 0
    for noise in cfg.noise_specs():
        curves = {"offline": [], "online": []}
        finals = {"offline": [], "online": []}
        train_finals, consumed = [], []
        for r in range(cfg.runs):
            off = _offline_world(cfg, noise, r, test_ds, test_pairs, grid)
            on, n_used = _online_world(cfg, noise, r, test_ds, test_pairs, grid)
            consumed.append(n_used)
            train_finals.append(off.asymptotic("train_error", TAIL))
            for world, rec in (("offline", off), ("online", on)):
                curves[world].append(rec.test_error)
                finals[world].append(rec.asymptotic("test_error", TAIL))
                result.records.append((world, noise.kind, r, rec))
                if out is not None:
                    rec.to_csv(out / f"run_{i}.csv")
                i += 1
        for world in ("offline", "online"):
            result.median_test[(world, noise.kind)] = np.median(curves[world], axis=0).tolist()
            result.final_test[(world, noise.kind)] = float(np.median(finals[world]))
        result.offline_final_train[noise.kind] = float(np.median(train_finals))
        result.consumed_pairs[noise.kind] = consumed
    if out is not None:
        rows = []
        for (world, kind), curve in result.median_test.items():
            rows += [{"world": world, "noise": kind, "step": s, "median_test_error": float(v)}
                     for s, v in zip(grid, curve)]
        _write_rows(out / "curves.csv", rows, ["world", "noise", "step", "median_test_error"])
        runs_index = [{"index": j, "world": w, "noise": k, "run": r}
                      for j, (w, k, r, _) in enumerate(result.records)]
        _dump_json(out / "summary.json", {
            "config": result.config, "runs": runs_index,
            "final_test_error": {f"{w}/{k}": v for (w, k), v in result.final_test.items()},
            "offline_final_train_error": result.offline_final_train,
            "online_pairs_consumed": result.consumed_pairs})
    return result


# --- DIBS validation batches -----------------------------------------------

@dataclass(frozen=True)
class DibsExperimentConfig:
    n_c_grid: tuple = (2, 3, 5, 10)
    P_at_fixed_n_c: float = 0.1
    P_grid: tuple = (0.05, 0.1, 0.2)
    n_c_at_fixed_P: int = 10
    N_c: int = 50
    method: str = "train"
    oracle_nodes: int = DEFAULT_MAX_NODES
    width: int = 256
    data: SyntheticSpec = SyntheticSpec()
    loss: LossSpec = LossSpec()
    train: TrainConfig = TrainConfig(eval_every=10)
    runs: int = 5
    seed: int = 0

    def points(self) -> list[tuple[int, float]]:
        pts = [(int(n), float(self.P_at_fixed_n_c)) for n in self.n_c_grid]
        pts += [(int(self.n_c_at_fixed_P), float(P)) for P in self.P_grid]
        seen, out = set(), []
        for p in pts:
            if p not in seen:
                seen.add(p)
                out.append(p)
        return out

    def validate(self):
        if self.method not in ("train", "oracle", "both"):
            raise ExperimentConfigError(f"method must be train, oracle or both, got {self.method!r}")
        if self.runs < 1 or self.N_c < 2 or self.width < 1:
            raise ExperimentConfigError("runs >= 1, N_c >= 2 and width >= 1 required")
        for n_c, P in self.points():
            if n_c < 2 or not 0.0 <= P <= 0.5:
                raise ExperimentConfigError(f"invalid point n_c={n_c}, P={P}")
            if self.method != "oracle" and n_c > self.data.d and self.data.d == 1:
                raise ExperimentConfigError("data.d too small for the class count")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_c_grid"], d["P_grid"] = list(self.n_c_grid), list(self.P_grid)
        return d


DIBS_COLUMNS = ["n_c", "P", "N_c", "method", "n", "mean", "stderr", "lower", "upper", "inside"]


def trained_dibs_value(n_c: int, P: float, N_c: int, width: int, seed: int,
                       data: SyntheticSpec = SyntheticSpec(), loss: LossSpec = LossSpec(),
                       tcfg: TrainConfig = TrainConfig(eval_every=10)) -> float:
    """Asymptotic train error of one network on one dense same-index PLN instance."""
    ds = generate_synthetic(replace(data, n_c=n_c, N_c=N_c, seed=derive_seed(seed, "data")))
    scen = ScenarioConfig("dense", 2 * n_c * N_c, 1, SAME_INDEX, derive_seed(seed, "pairs"))
    pairs = build_scenario(ds, scen, NoiseSpec("pln", 2 * P, derive_seed(seed, "noise")))[0]
    rec = train(ds, pairs, MlpConfig(ds.dim, width, seed=derive_seed(seed, "net")), loss,
                replace(tcfg, seed=derive_seed(seed, "shuffle")))
    return rec.asymptotic("train_error", TAIL)


def oracle_instance(n_c: int, P: float, N_c: int, seed: int) -> PairDataset:
    """A dense same-index PLN pair set over ``n_c * N_c`` featureless items."""
    labels = np.repeat(np.arange(1, n_c + 1), N_c)
    ds = LabeledDataset(np.zeros((labels.size, 1)), labels, n_c, "oracle-instance")
    scen = ScenarioConfig("dense", 2 * labels.size, 1, SAME_INDEX, derive_seed(seed, "pairs"))
    return build_scenario(ds, scen, NoiseSpec("pln", 2 * P, derive_seed(seed, "noise")))[0]


def oracle_dibs_value(n_c: int, P: float, N_c: int, seed: int,
                      max_nodes: int = DEFAULT_MAX_NODES) -> float:
    return min_violation_oracle(graph_of(oracle_instance(n_c, P, N_c, seed)), max_nodes)


def dibs_experiment(cfg: DibsExperimentConfig, out_dir=None) -> list[dict]:
    """Mean asymptotic train error per (n_c, P) point against the analytic bounds.

    The oracle route uses the largest per-class size that keeps the graph
    within ``oracle_nodes`` nodes and compares against the bounds at that
    size; points where even two items per class do not fit are skipped.
    """
    cfg.validate()
    methods = ["train", "oracle"] if cfg.method == "both" else [cfg.method]
    rows, per_run = [], []
    for n_c, P in cfg.points():
        for method in methods:
            if method == "train":
                N_c = cfg.N_c
                vals = [trained_dibs_value(n_c, P, N_c, cfg.width,
                                           derive_seed(cfg.seed, "train", n_c, repr(P), r),
                                           cfg.data, cfg.loss, cfg.train)
                        for r in range(cfg.runs)]
            else:
                N_c = cfg.oracle_nodes // n_c
                if N_c < 2:
                    continue
                vals = [oracle_dibs_value(n_c, P, N_c,
                                          derive_seed(cfg.seed, "oracle", n_c, repr(P), r),
                                          cfg.oracle_nodes)
                        for r in range(cfg.runs)]
            est = estimate_error_dibs(vals, dibs_bounds(P, n_c, N_c))
            rows.append({"n_c": n_c, "P": P, "N_c": N_c, "method": method, "n": est.n,
                         "mean": est.mean, "stderr": est.stderr, "lower": est.lower,
                         "upper": est.upper, "inside": est.inside})
            per_run += [{"n_c": n_c, "P": P, "N_c": N_c, "method": method, "run": r,
                         "train_error": float(v)} for r, v in enumerate(vals)]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "curves.csv", rows, DIBS_COLUMNS)
        _write_rows(out / "run_0.csv", per_run, ["n_c", "P", "N_c", "method", "run", "train_error"])
        _dump_json(out / "summary.json", {"config": cfg.to_dict(), "rows": rows})
    return rows
