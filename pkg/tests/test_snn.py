import json
import math

import numpy as np
import pytest

from siamdibs.datasets import SyntheticSpec, generate_synthetic
from siamdibs.pairgraph import ScenarioConfig, build_scenario
from siamdibs.snn import (AdamState, DegenerateEmbeddingError, LossSpec, MlpConfig, RunRecord,
                          SiameseMLP, TrainConfig, TrainingError, _loss_grad, adam_step,
                          contrastive_loss, cosine_loss, error_rate, forward, gradient_check,
                          pair_score, predict, train)


def test_parameter_count_formula():
    cfg = MlpConfig(input_dim=16, width=32)
    d, w, out = 16, 32, 32
    assert cfg.n_params() == d * w + w + 2 * (w * w + w) + w * out + out
    assert SiameseMLP(cfg).n_params == cfg.n_params()
    assert cfg.out_dim(LossSpec("cosine")) == 64
    assert MlpConfig(4, 8, output_dim=3).n_params(LossSpec("cosine")) == 4 * 8 + 8 + 2 * 72 + 27


def test_xavier_init_and_zero_biases():
    net = SiameseMLP(MlpConfig(16, 64, seed=1))
    for W, b in net.layers:
        limit = math.sqrt(6 / (W.shape[0] + W.shape[1]))
        assert np.abs(W).max() <= limit
        assert np.abs(W).max() > 0.9 * limit
        assert np.all(b == 0)


def test_zero_parameters_give_zero_embedding():
    net = SiameseMLP(MlpConfig(3, 5))
    net.theta[:] = 0
    assert np.all(forward(net, np.ones((4, 3))) == 0)


def test_forward_is_deterministic_and_tied():
    a, b = SiameseMLP(MlpConfig(3, 5, seed=2)), SiameseMLP(MlpConfig(3, 5, seed=2))
    x = np.random.default_rng(0).standard_normal((6, 3))
    assert forward(a, x).tobytes() == forward(b, x).tobytes()
    z = forward(a, np.vstack([x[0], x[0]]))
    assert pair_score(z[0], z[1])[0] == 0


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(SiameseMLP(MlpConfig(3, 5)), np.ones((2, 4)))


def test_pair_score_examples():
    assert pair_score([1, 0], [1, 0])[0] == 0
    assert pair_score([1, 0], [1, 0], "cosine")[0] == 1
    assert pair_score([1, 0], [0, 1])[0] == pytest.approx(math.sqrt(2))
    assert pair_score([1, 0], [0, 1], "cosine")[0] == pytest.approx(0)
    assert pair_score([1, 2], [-1, -2], "cosine")[0] == pytest.approx(-1)
    with pytest.raises(DegenerateEmbeddingError):
        pair_score([0, 0], [1, 0], "cosine")


def test_loss_examples():
    assert contrastive_loss([1], [0]) == 0
    assert contrastive_loss([0], [1.3]) == 0
    assert contrastive_loss([0], [0.5]) == pytest.approx(0.25)
    assert cosine_loss([1], [1]) == 0
    assert cosine_loss([0], [0.4]) == 0
    assert cosine_loss([0], [0.9]) == pytest.approx(0.4)


def test_prediction_boundaries():
    assert predict([0.3])[0] == 1
    assert predict([0.5])[0] == 0
    cos_spec = LossSpec("cosine")
    assert predict([math.cos(math.pi / 6)], cos_spec)[0] == 0
    assert predict([0.9], cos_spec)[0] == 1


def test_error_rate_examples():
    y = np.array([1, 0, 1, 0])
    assert error_rate(y, y) == 0
    assert error_rate(y, 1 - y) == 1
    assert error_rate(y, [1, 0, 0, 1]) == 0.5
    with pytest.raises(ValueError):
        error_rate(y, y[:3])


@pytest.mark.parametrize("kind", ["contrastive", "cosine"])
def test_swap_and_permutation_invariance(kind):
    rng = np.random.default_rng(3)
    za, zb = rng.standard_normal((8, 4)), rng.standard_normal((8, 4))
    y = rng.integers(0, 2, 8)
    spec = LossSpec(kind)
    v1 = _loss_grad(za, zb, y, spec)[0]
    v2 = _loss_grad(zb, za, y, spec)[0]
    perm = rng.permutation(8)
    v3 = _loss_grad(za[perm], zb[perm], y[perm], spec)[0]
    assert v1 == pytest.approx(v2) and v1 == pytest.approx(v3)


def test_contrastive_zero_loss_characterization():
    za = np.array([[0.0, 0.0], [0.0, 0.0]])
    zb = np.array([[0.0, 0.0], [1.0, 0.0]])
    value, ga, gb = _loss_grad(za, zb, np.array([1, 0]), LossSpec())
    assert value == 0 and np.all(ga == 0) and np.all(gb == 0)
    assert _loss_grad(za, zb * 0.99, np.array([1, 0]), LossSpec())[0] > 0


def test_adam_examples():
    cfg = TrainConfig(learning_rate=0.01)
    p = np.ones(4)
    st = AdamState.zeros_like(p)
    adam_step(p, np.zeros(4), st, cfg)
    assert np.all(p == 1)
    p = np.ones(4)
    st = AdamState.zeros_like(p)
    adam_step(p, np.full(4, 3.0), st, cfg)
    assert np.allclose(1 - p, 0.01, rtol=1e-6)
    q = np.zeros(6)
    adam_step(q, np.array([1.0, 2, 3, 1, 2, 3]), AdamState.zeros_like(q), cfg)
    assert np.array_equal(q[:3], q[3:])
    with pytest.raises(TrainingError, match="non-finite"):
        adam_step(np.ones(2), np.array([1.0, np.nan]), AdamState.zeros_like(np.ones(2)), cfg)


def _tiny_batch(seed, n=6, d=4):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)), rng.standard_normal((n, d)), rng.integers(0, 2, n)


@pytest.mark.parametrize("kind", ["contrastive", "cosine"])
def test_gradient_check(kind):
    for s in range(3):
        xa, xb, y = _tiny_batch(s)
        assert gradient_check(MlpConfig(4, 6, seed=s), LossSpec(kind), xa, xb, y) < 1e-4


def test_zero_loss_batch_has_zero_gradient():
    net = SiameseMLP(MlpConfig(3, 4, seed=0))
    x = np.ones((2, 3))
    value, grad = net.loss_and_grad(x, x, np.array([1, 1]))
    assert value == 0 and np.all(grad == 0)


def test_clean_separable_training_interpolates():
    ds = generate_synthetic(SyntheticSpec(n_c=4, N_c=25, d=8, seed=0))
    pd = build_scenario(ds, ScenarioConfig("dense", 200, 1, seed=0))[0]
    rec = train(ds, pd, MlpConfig(8, 64, seed=0), LossSpec(),
                TrainConfig(epochs=300, learning_rate=1e-3, eval_every=10))
    assert rec.train_error[-1] < 0.005
    assert rec.steps == list(range(10, 301, 10))


def test_cosine_head_trains():
    ds = generate_synthetic(SyntheticSpec(n_c=4, N_c=25, d=8, seed=0))
    pd = build_scenario(ds, ScenarioConfig("dense", 200, 1, seed=0))[0]
    rec = train(ds, pd, MlpConfig(8, 32, seed=0), LossSpec("cosine"),
                TrainConfig(epochs=200, learning_rate=1e-3, eval_every=50))
    assert rec.train_error[-1] < rec.train_error[0] or rec.train_error[-1] < 0.02


def test_training_is_deterministic():
    ds = generate_synthetic(SyntheticSpec(n_c=3, N_c=10, d=4, seed=0))
    pd = build_scenario(ds, ScenarioConfig("dense", 60, 1, seed=0))[0]
    args = (ds, pd, MlpConfig(4, 8, seed=1), LossSpec(), TrainConfig(epochs=20, seed=2))
    a, b = train(*args, keep_params=True), train(*args, keep_params=True)
    assert a.train_loss == b.train_loss
    assert a.params.tobytes() == b.params.tobytes()


def test_run_record(tmp_path):
    r = RunRecord()
    for i in range(1, 21):
        r.append(i, 0.1 * (i > 18), 0.2, 1.0 / i)
    assert r.asymptotic() == pytest.approx(0.1)
    with pytest.raises(ValueError):
        r.append(5, 0, 0, 0)
    r.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "step,train_error,test_error,train_loss" and len(lines) == 21
    r.params = np.arange(3 * 2 + 2, dtype=float)
    r.dump_params(tmp_path / "p.bin", tmp_path / "p.json", [3, 2])
    assert np.array_equal(np.fromfile(tmp_path / "p.bin", dtype="<f8"), r.params)
    man = json.loads((tmp_path / "p.json").read_text())
    assert man["tensors"] == [{"name": "W0", "shape": [3, 2]}, {"name": "b0", "shape": [2]}]


def test_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(0, 4)
    with pytest.raises(ValueError):
        LossSpec(margin=0)
    with pytest.raises(ValueError):
        LossSpec("cosine", angle=math.pi)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
