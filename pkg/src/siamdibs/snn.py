"""A minimal Siamese MLP trained from scratch with numpy.

Both pair elements go through the same branch: there is a single flat
parameter vector, and the layer weights are views into it, so weight tying
holds by construction and Adam sees one array.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._seeding import derive_rng


class TrainingError(RuntimeError):
    pass


class DegenerateEmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    """Branch architecture: ``n_hidden`` ReLU layers of equal width, linear output.

    ``output_dim=None`` resolves by head: the hidden width for the Euclidean
    head, twice the width for the cosine head.
    """

    input_dim: int
    width: int
    output_dim: int | None = None
    n_hidden: int = 3
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if min(self.input_dim, self.width, self.n_hidden) < 1:
            raise ValueError("input_dim, width and n_hidden must be >= 1")
        if self.output_dim is not None and self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")

    def out_dim(self, loss: "LossSpec | None" = None) -> int:
        if self.output_dim is not None:
            return self.output_dim
        return 2 * self.width if loss is not None and loss.kind == "cosine" else self.width

    def layer_sizes(self, loss: "LossSpec | None" = None) -> list[int]:
        return [self.input_dim] + [self.width] * self.n_hidden + [self.out_dim(loss)]

    def n_params(self, loss: "LossSpec | None" = None) -> int:
        sizes = self.layer_sizes(loss)
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass(frozen=True)
class LossSpec:
    kind: str = "contrastive"
    margin: float = 1.0
    angle: float = math.pi / 3

    def __post_init__(self):
        if self.kind not in ("contrastive", "cosine"):
            raise ValueError(f"loss kind must be 'contrastive' or 'cosine', got {self.kind!r}")
        if not self.margin > 0:
            raise ValueError("margin must be > 0")
        if not 0 < self.angle < math.pi:
            raise ValueError("angle must lie in (0, pi)")

    @property
    def head(self) -> str:
        return "euclidean" if self.kind == "contrastive" else "cosine"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 128
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("epochs, batch_size and eval_every must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


class SiameseMLP:
    def __init__(self, cfg: MlpConfig, loss: LossSpec = LossSpec()):
        self.cfg = cfg
        self.loss = loss
        self.sizes = cfg.layer_sizes(loss)
        dtype = np.dtype(cfg.dtype)
        self.theta = np.zeros(cfg.n_params(loss), dtype=dtype)
        self.layers = []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            W = self.theta[off:off + a * b].reshape(a, b)
            off += a * b
            bias = self.theta[off:off + b]
            off += b
            self.layers.append((W, bias))
        rng = derive_rng(cfg.seed, "init")
        for W, _ in self.layers:
            limit = math.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-limit, limit, size=W.shape)

    @property
    def n_params(self) -> int:
        return int(self.theta.size)

    def embed(self, x) -> np.ndarray:
        return self._forward(x)[0]

    def _forward(self, x):
        h = np.asarray(x, dtype=self.theta.dtype)
        if h.ndim == 1:
            h = h[None, :]
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input dimension {h.shape[1]} != {self.sizes[0]}")
        cache = [h]
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0)
            cache.append(h)
        return h, cache

    def _backward(self, cache, dz) -> np.ndarray:
        grad = np.empty_like(self.theta)
        off = self.theta.size
        g = dz
        for i in range(len(self.layers) - 1, -1, -1):
            W, b = self.layers[i]
            h_in = cache[i]
            nb, nw = b.size, W.size
            grad[off - nb:off] = g.sum(axis=0)
            np.matmul(h_in.T, g, out=grad[off - nb - nw:off - nb].reshape(W.shape))
            off -= nb + nw
            if i > 0:
                g = g @ W.T
                g *= cache[i] > 0
        return grad

    def loss_and_grad(self, xa, xb, y):
        n = len(y)
        z, cache = self._forward(np.concatenate([np.asarray(xa), np.asarray(xb)]))
        za, zb = z[:n], z[n:]
        value, ga, gb = _loss_grad(za, zb, np.asarray(y), self.loss)
        return value, self._backward(cache, np.concatenate([ga, gb]))


def forward(net: SiameseMLP, x) -> np.ndarray:
    """Embedding of ``x`` under the shared branch."""
    return net.embed(x)


def pair_score(z1, z2, head: str = "euclidean") -> np.ndarray:
    """Euclidean distance or cosine similarity between paired embeddings."""
    z1, z2 = np.atleast_2d(z1), np.atleast_2d(z2)
    if z1.shape != z2.shape:
        raise ValueError(f"embedding shapes differ: {z1.shape} vs {z2.shape}")
    if head == "euclidean":
        return np.linalg.norm(z1 - z2, axis=1)
    if head == "cosine":
        n1, n2 = np.linalg.norm(z1, axis=1), np.linalg.norm(z2, axis=1)
        if np.any(n1 == 0) or np.any(n2 == 0):
            raise DegenerateEmbeddingError("cosine similarity of a zero-norm embedding")
        return np.clip(np.sum(z1 * z2, axis=1) / (n1 * n2), -1.0, 1.0)
    raise ValueError(f"unknown head {head!r}")


def contrastive_loss(y, d, margin: float = 1.0) -> float:
    y, d = np.asarray(y, dtype=np.float64), np.asarray(d, dtype=np.float64)
    if y.shape != d.shape:
        raise ValueError("label and distance batches differ in shape")
    hinge = np.maximum(0.0, margin - d)
    return float(np.mean(y * d ** 2 + (1 - y) * hinge ** 2))


def cosine_loss(y, s, angle: float = math.pi / 3) -> float:
    y, s = np.asarray(y, dtype=np.float64), np.asarray(s, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("label and similarity batches differ in shape")
    return float(np.mean(y * (1 - s) + (1 - y) * np.maximum(0.0, s - math.cos(angle))))


def _loss_grad(za, zb, y, loss: LossSpec):
    """Batch-mean loss and its gradients w.r.t. both embeddings."""
    n = za.shape[0]
    y = y.astype(za.dtype)[:, None]
    diff = za - zb
    if loss.kind == "contrastive":
        d = np.sqrt(np.sum(diff * diff, axis=1, keepdims=True))
        hinge = np.maximum(0, loss.margin - d)
        value = float(np.mean(y * d ** 2 + (1 - y) * hinge ** 2))
        safe = np.where(d > 0, d, 1)
        ga = (2 * y * diff - 2 * (1 - y) * np.where(d > 0, hinge / safe, 0) * diff) / n
        return value, ga, -ga
    na = np.linalg.norm(za, axis=1, keepdims=True)
    nb = np.linalg.norm(zb, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise DegenerateEmbeddingError("cosine similarity of a zero-norm embedding")
    s = np.sum(za * zb, axis=1, keepdims=True) / (na * nb)
    thr = math.cos(loss.angle)
    value = float(np.mean(y * (1 - s) + (1 - y) * np.maximum(0, s - thr)))
    dls = (-y + (1 - y) * (s > thr)) / n
    ga = dls * (zb / (na * nb) - s * za / na ** 2)
    gb = dls * (za / (na * nb) - s * zb / nb ** 2)
    return value, ga, gb


def predict(score, loss: LossSpec = LossSpec()) -> np.ndarray:
    """Similar (1) iff distance < margin/2, or cosine > cos(angle/2)."""
    score = np.asarray(score)
    if loss.kind == "contrastive":
        return (score < loss.margin / 2).astype(np.int64)
    return (score > math.cos(loss.angle / 2)).astype(np.int64)


def error_rate(y, y_hat) -> float:
    y, y_hat = np.asarray(y), np.asarray(y_hat)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    return float(np.mean(np.abs(y - y_hat))) if y.size else 0.0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    scratch: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    if not np.isfinite(np.dot(grads, grads)):
        bad = np.flatnonzero(~np.isfinite(grads))
        if bad.size:
            raise TrainingError(
                f"non-finite gradient at step {state.t + 1}: {bad.size} entries, "
                f"first index {bad[0]}")
    if state.scratch is None or state.scratch.shape != params.shape:
        state.scratch = np.empty_like(params)
    buf = state.scratch
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    # m and v updated in place; buf holds grads**2, then the denominator.
    state.m *= b1
    state.m += (1 - b1) * grads
    np.multiply(grads, grads, out=buf)
    buf *= 1 - b2
    state.v *= b2
    state.v += buf
    step = cfg.learning_rate * math.sqrt(1 - b2 ** state.t) / (1 - b1 ** state.t)
    np.sqrt(state.v, out=buf)
    buf += cfg.eps * math.sqrt(1 - b2 ** state.t)
    np.divide(state.m, buf, out=buf)
    buf *= step
    params -= buf
    return params, state


def pair_scores(net: SiameseMLP, items: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    nodes, inv = np.unique(pairs, return_inverse=True)
    z = net.embed(items[nodes]).astype(np.float64)
    inv = inv.reshape(pairs.shape)
    return pair_score(z[inv[:, 0]], z[inv[:, 1]], net.loss.head)


def evaluate(net: SiameseMLP, items: np.ndarray, pairs: np.ndarray, y) -> tuple[float, float]:
    """Full-set ``(error, loss)`` of the network on labeled pairs."""
    if len(pairs) == 0:
        return float("nan"), float("nan")
    score = pair_scores(net, items, pairs)
    if net.loss.kind == "contrastive":
        value = contrastive_loss(y, score, net.loss.margin)
    else:
        value = cosine_loss(y, score, net.loss.angle)
    return error_rate(y, predict(score, net.loss)), value


@dataclass
class RunRecord:
    steps: list = field(default_factory=list)
    train_error: list = field(default_factory=list)
    test_error: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0
    params: np.ndarray | None = None

    def append(self, step, train_error, test_error, train_loss):
        if self.steps and step <= self.steps[-1]:
            raise ValueError("records must be appended in increasing step order")
        self.steps.append(int(step))
        self.train_error.append(float(train_error))
        self.test_error.append(float(test_error))
        self.train_loss.append(float(train_loss))

    def asymptotic(self, key: str = "train_error", tail: float = 0.1) -> float:
        """Mean over the last ``tail`` fraction of evaluation points (at least one)."""
        values = getattr(self, key)
        if not values:
            return float("nan")
        k = max(1, int(math.ceil(tail * len(values))))
        return float(np.mean(values[-k:]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "train_error", "test_error", "train_loss"])
            for row in zip(self.steps, self.train_error, self.test_error, self.train_loss):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])

    def to_json(self) -> str:
        doc = {"config": self.config, "seed": self.seed, "n_points": len(self.steps)}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def dump_params(self, bin_path, manifest_path, sizes: list[int]):
        """Flat little-endian float64 parameters plus a JSON shape manifest."""
        if self.params is None:
            raise ValueError("record carries no parameters")
        np.asarray(self.params, dtype="<f8").tofile(bin_path)
        shapes = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            shapes += [{"name": f"W{len(shapes) // 2}", "shape": [a, b]},
                       {"name": f"b{len(shapes) // 2}", "shape": [b]}]
        with open(manifest_path, "w") as fh:
            json.dump({"dtype": "<f8", "layout": "row-major", "tensors": shapes}, fh, indent=2)
            fh.write("\n")


class Trainer:
    """Owns one network and its optimizer state; feeds it minibatches."""

    def __init__(self, net: SiameseMLP, cfg: TrainConfig):
        self.net = net
        self.cfg = cfg
        self.state = AdamState.zeros_like(net.theta)

    @property
    def iterations(self) -> int:
        return self.state.t

    def step(self, xa, xb, y) -> float:
        value, grad = self.net.loss_and_grad(xa, xb, y)
        adam_step(self.net.theta, grad, self.state, self.cfg)
        return value


def train(ds, pairs, mlp: MlpConfig, loss: LossSpec, cfg: TrainConfig,
          eval_pairs=None, eval_ds=None, keep_params: bool = False) -> RunRecord:
    """Shuffled minibatch training on ``pairs`` (a PairDataset over ``ds``).

    Train error is measured against the labels the network trains on (noisy
    ones included); test error on ``eval_pairs`` over ``eval_ds`` (defaults to
    ``ds``). Evaluation runs every ``cfg.eval_every`` epochs and after the last.
    """
    net = SiameseMLP(mlp, loss)
    trainer = Trainer(net, cfg)
    items = np.asarray(ds.items, dtype=net.theta.dtype)
    eval_items = items if eval_ds is None else np.asarray(eval_ds.items, dtype=net.theta.dtype)
    P, Y = pairs.pairs, pairs.pair_labels
    rng = derive_rng(cfg.seed, "shuffle")
    record = RunRecord(config={"mlp": asdict(mlp), "loss": asdict(loss), "train": asdict(cfg),
                               "n_params": net.n_params, "n_pairs": len(pairs)},
                       seed=cfg.seed)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(P))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            trainer.step(items[P[idx, 0]], items[P[idx, 1]], Y[idx])
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            tr_err, tr_loss = evaluate(net, items, P, Y)
            te_err = (evaluate(net, eval_items, eval_pairs.pairs, eval_pairs.pair_labels)[0]
                      if eval_pairs is not None else float("nan"))
            record.append(epoch, tr_err, te_err, tr_loss)
    if keep_params:
        record.params = net.theta.astype(np.float64)
    return record


def gradient_check(mlp: MlpConfig, loss: LossSpec, xa, xb, y, step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    Runs in float64. Biases are drawn from U(-0.5, 0.5) instead of zero so
    that no pre-activation sits exactly on a ReLU kink. Parameters where both
    gradients are below the finite-difference noise floor (at least 1e-12) are
    skipped; the output bias of the distance head is such a case, its gradient
    being identically zero.
    """
    cfg = MlpConfig(mlp.input_dim, mlp.width, mlp.output_dim, mlp.n_hidden, mlp.seed, "float64")
    net = SiameseMLP(cfg, loss)
    rng = derive_rng(mlp.seed, "gradcheck-bias")
    for _, b in net.layers:
        b[...] = rng.uniform(-0.5, 0.5, size=b.shape)
    y = np.asarray(y)
    value, analytic = net.loss_and_grad(xa, xb, y)
    floor = max(1e-12, 10 * np.finfo(np.float64).eps * max(1.0, abs(value)) / step)
    worst = 0.0
    for i in range(net.theta.size):
        keep = net.theta[i]
        net.theta[i] = keep + step
        up = net.loss_and_grad(xa, xb, y)[0]
        net.theta[i] = keep - step
        down = net.loss_and_grad(xa, xb, y)[0]
        net.theta[i] = keep
        numeric = (up - down) / (2 * step)
        scale = max(abs(analytic[i]), abs(numeric))
        if scale < floor:
            continue
        worst = max(worst, abs(analytic[i] - numeric) / scale)
    return worst
