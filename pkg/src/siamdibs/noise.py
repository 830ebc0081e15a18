"""Single-label and pair-label noise, and the effective-noise calibration.

SLN resamples item class labels before pairs are built; PLN resamples pair
labels after. In both cases the replacement draw may return the original
value, which is why a PLN rate ``q_pair`` only mislabels ``q_pair / 2`` of the
pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._seeding import derive_rng

NOISE_KINDS = ("none", "sln", "pln")


class NoiseError(ValueError):
    pass


def _check_rate(name: str, value: float):
    if not (0.0 <= value <= 1.0):
        raise NoiseError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class NoiseSpec:
    """Which transformation to apply, at what rate, with which seed.

    ``rate`` is the per-item resampling probability ``q`` for SLN and the
    per-pair probability ``q_pair`` for PLN.
    """

    kind: str = "none"
    rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise NoiseError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        _check_rate("rate", self.rate)
        if self.kind == "none" and self.rate != 0.0:
            raise NoiseError("noise kind 'none' requires rate 0")

    @property
    def effective(self) -> float:
        """Probability that a pair label ends up wrong."""
        if self.kind == "sln":
            return effective_noise_sln(self.rate)
        if self.kind == "pln":
            return effective_noise_pln(self.rate)
        return 0.0

    @classmethod
    def matched(cls, kind: str, effective: float, seed: int = 0) -> "NoiseSpec":
        """Spec of ``kind`` whose effective pair noise equals ``effective``."""
        if not 0.0 <= effective <= 0.5:
            raise NoiseError(f"effective noise must lie in [0, 0.5], got {effective}")
        if kind == "none":
            if effective != 0.0:
                raise NoiseError("noise kind 'none' cannot carry effective noise")
            return cls("none", 0.0, seed)
        if kind == "pln":
            return cls("pln", 2.0 * effective, seed)
        if kind == "sln":
            return cls("sln", calibrate_q(2.0 * effective), seed)
        raise NoiseError(f"unknown noise kind {kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate, "seed": self.seed}


def apply_sln(labels, q: float, n_c: int, seed: int, return_mask: bool = False):
    """Resample each class label with probability ``q`` uniformly from 1..n_c.

    With ``return_mask`` the boolean array of operated (resampled) positions
    is returned as well, whether or not the draw changed the label.
    """
    _check_rate("q", q)
    labels = np.asarray(labels, dtype=np.int64)
    rng = derive_rng(seed, "sln")
    operated = rng.random(labels.shape[0]) < q
    draws = rng.integers(1, n_c + 1, size=labels.shape[0])
    out = np.where(operated, draws, labels)
    return (out, operated) if return_mask else out


def apply_pln(pair_labels, q_pair: float, seed: int, return_mask: bool = False):
    """Replace each binary pair label with probability ``q_pair`` by a fair coin."""
    _check_rate("q_pair", q_pair)
    y = np.asarray(pair_labels, dtype=np.int64)
    if y.size and not np.isin(y, (0, 1)).all():
        raise NoiseError("pair labels must be 0 or 1")
    rng = derive_rng(seed, "pln")
    operated = rng.random(y.shape[0]) < q_pair
    draws = rng.integers(0, 2, size=y.shape[0])
    out = np.where(operated, draws, y)
    return (out, operated) if return_mask else out


def effective_noise_sln(q: float) -> float:
    _check_rate("q", q)
    return q - q * q / 2.0


def effective_noise_pln(q_pair: float) -> float:
    _check_rate("q_pair", q_pair)
    return q_pair / 2.0


def calibrate_q(q_pair: float) -> float:
    """SLN rate giving the same effective noise as PLN rate ``q_pair``.

    Solves ``q - q**2/2 = q_pair/2`` for the root in [0, 1], i.e.
    ``1 - sqrt(1 - q_pair)``, written in the cancellation-free form.
    """
    _check_rate("q_pair", q_pair)
    return q_pair / (1.0 + math.sqrt(1.0 - q_pair))


def empirical_effective_noise(clean, noisy) -> float:
    """Fraction of pairs whose label differs between ``clean`` and ``noisy``.

    Both arguments are PairDatasets over the same pair list (or plain label
    arrays of equal length).
    """
    if hasattr(clean, "pairs") and hasattr(noisy, "pairs"):
        if clean.pairs.shape != noisy.pairs.shape or not np.array_equal(clean.pairs, noisy.pairs):
            raise NoiseError("clean and noisy pair datasets cover different pair lists")
    a = np.asarray(getattr(clean, "pair_labels", clean))
    b = np.asarray(getattr(noisy, "pair_labels", noisy))
    if a.shape != b.shape:
        raise NoiseError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        return 0.0
    return float(np.mean(a != b))
