import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from siamdibs.noise import (NoiseError, NoiseSpec, apply_pln, apply_sln, calibrate_q,
                            effective_noise_pln, effective_noise_sln, empirical_effective_noise)


def within_3se(observed, p, n):
    return abs(observed - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_sln_zero_rate_is_identity():
    labels = np.arange(1, 11).repeat(10)
    assert np.array_equal(apply_sln(labels, 0.0, 10, seed=1), labels)


def test_sln_full_rate_change_fraction():
    labels = np.tile(np.arange(1, 11), 10_000)
    out = apply_sln(labels, 1.0, 10, seed=2)
    assert within_3se(np.mean(out != labels), 0.9, labels.size)
    assert out.min() >= 1 and out.max() <= 10


def test_sln_calibrated_rate_change_fraction():
    labels = np.tile(np.arange(1, 11), 10_000)
    out = apply_sln(labels, 0.10557, 10, seed=3)
    assert within_3se(np.mean(out != labels), 0.10557 * 0.9, labels.size)


def test_sln_operated_mask():
    labels = np.tile(np.arange(1, 11), 1000)
    out, mask = apply_sln(labels, 0.5, 10, seed=4, return_mask=True)
    assert np.all(out[~mask] == labels[~mask])
    assert within_3se(mask.mean(), 0.5, labels.size)


def test_pln_examples():
    y = np.tile([0, 1], 50_000)
    assert np.array_equal(apply_pln(y, 0.0, seed=0), y)
    assert within_3se(np.mean(apply_pln(y, 0.2, seed=1) != y), 0.1, y.size)
    assert within_3se(np.mean(apply_pln(y, 1.0, seed=2) != y), 0.5, y.size)


def test_noise_is_deterministic():
    y = np.tile([0, 1], 500)
    assert np.array_equal(apply_pln(y, 0.3, 7), apply_pln(y, 0.3, 7))
    assert not np.array_equal(apply_pln(y, 0.3, 7), apply_pln(y, 0.3, 8))


@pytest.mark.parametrize("bad", [-0.1, 1.1])
def test_rate_domain(bad):
    with pytest.raises(NoiseError):
        apply_sln([1, 2], bad, 2, 0)
    with pytest.raises(NoiseError):
        apply_pln([0, 1], bad, 0)
    with pytest.raises(NoiseError):
        effective_noise_sln(bad)
    with pytest.raises(NoiseError):
        effective_noise_pln(bad)
    with pytest.raises(NoiseError):
        calibrate_q(bad)


def test_pln_rejects_non_binary():
    with pytest.raises(NoiseError):
        apply_pln([0, 2], 0.1, 0)


def test_effective_noise_values():
    assert effective_noise_pln(0.2) == pytest.approx(0.1)
    assert effective_noise_sln(0) == 0
    assert effective_noise_sln(1) == 0.5


def test_calibration_examples():
    assert calibrate_q(0) == 0
    assert calibrate_q(1) == 1
    assert calibrate_q(0.2) == pytest.approx(0.105573, abs=1e-6)
    root = brentq(lambda q: q - q * q / 2 - 0.1, 0, 1, xtol=1e-15)
    assert calibrate_q(0.2) == pytest.approx(root, abs=1e-13)


def test_calibration_identity_grid():
    for qt in np.linspace(0, 1, 21):
        assert abs(effective_noise_sln(calibrate_q(qt)) - qt / 2) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0))
def test_calibration_identity_property(qt):
    assert abs(effective_noise_sln(calibrate_q(qt)) - effective_noise_pln(qt)) < 1e-12
    assert 0.0 <= calibrate_q(qt) <= 1.0


def test_noise_spec():
    assert NoiseSpec("pln", 0.2).effective == pytest.approx(0.1)
    with pytest.raises(NoiseError):
        NoiseSpec("none", 0.1)
    with pytest.raises(NoiseError):
        NoiseSpec("gaussian", 0.1)
    with pytest.raises(NoiseError):
        NoiseSpec("sln", 1.5)
    m = NoiseSpec.matched("sln", 0.1)
    assert m.rate == pytest.approx(calibrate_q(0.2))
    assert m.effective == pytest.approx(0.1)
    assert NoiseSpec.matched("pln", 0.1).rate == pytest.approx(0.2)


def test_empirical_effective_noise_basics():
    y = np.array([0, 1, 1, 0])
    assert empirical_effective_noise(y, y) == 0
    assert empirical_effective_noise(y, 1 - y) == 1
    with pytest.raises(NoiseError):
        empirical_effective_noise(y, y[:3])
