"""Synthetic CPS-like corpus generator.

Normal operation is a mixture of correlated sinusoids (a few shared
latent oscillators mixed into all channels) plus sensor noise.  Anomalous
spans are injected on top and labeled 1: short high-amplitude bursts
(spike), sustained offsets (level_shift), or channels whose correlation
with the rest is replaced by an independent oscillation
(correlation_break).  Output is bit-deterministic in the config.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet

import numpy as np

from .data import RawSeries

ANOMALY_KINDS = ("spike", "level_shift", "correlation_break")


@dataclass
class SynthConfig:
    n_features: int = 8
    length: int = 20000
    seed: int = 0
    anomaly_kinds: FrozenSet[str] = frozenset({"spike", "level_shift"})
    anomaly_rate: float = 0.05
    noise_std: float = 0.05

    def validate(self) -> None:
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.length < 10:
            raise ValueError("length must be >= 10")
        if not 0.0 < self.anomaly_rate < 0.5:
            raise ValueError(
                f"anomaly_rate must lie in (0, 0.5), got {self.anomaly_rate}")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")
        bad = set(self.anomaly_kinds) - set(ANOMALY_KINDS)
        if bad:
            raise ValueError(f"unknown anomaly kinds: {sorted(bad)}")
        if not self.anomaly_kinds:
            raise ValueError(
                "anomaly_kinds is empty while anomaly_rate > 0; nothing to inject")


def _place_spans(rng, length, target, lo=40, hi=90):
    """Non-overlapping spans covering ~target timesteps: draw lengths,
    then distribute the leftover as random gaps (always feasible)."""
    lens = []
    while sum(lens) < target:
        lens.append(int(rng.integers(lo, hi + 1)))
    total = sum(lens)
    if total > length // 2:
        raise ValueError("anomaly spans would cover more than half the series")
    slack = length - total
    cuts = np.sort(rng.random(len(lens))) * slack
    gaps = np.diff(np.concatenate([[0.0], cuts])).astype(np.int64)
    spans = []
    pos = 0
    for g, ln in zip(gaps, lens):
        pos += int(g)
        spans.append((pos, pos + ln))
        pos += ln
    return spans


def synth_generate(config: SynthConfig) -> RawSeries:
    """Deterministic labeled corpus per the config; see module docstring."""
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    T, N = config.length, config.n_features

    n_latent = 3
    periods = rng.uniform(40.0, 200.0, size=n_latent)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_latent)
    t = np.arange(T)[:, None]
    latents = np.sin(2.0 * np.pi * t / periods[None, :] + phases[None, :])

    mixing = rng.normal(0.0, 1.0, size=(N, n_latent))
    mixing /= np.linalg.norm(mixing, axis=1, keepdims=True)
    mixing *= rng.uniform(0.6, 1.4, size=(N, 1))
    # positive sensor baselines keep the corpus mostly nonnegative, so the
    # 2x/max - 1 normalization lands in [-1, 1] as it does on real telemetry
    offsets = rng.uniform(2.5, 3.5, size=N)

    values = latents @ mixing.T + offsets + rng.normal(0.0, config.noise_std, size=(T, N))
    clean_std = values.std(axis=0)

    labels = np.zeros(T, dtype=np.uint8)
    kinds = sorted(config.anomaly_kinds)
    target = int(round(config.anomaly_rate * T))
    for lo, hi in _place_spans(rng, T, target):
        kind = kinds[rng.integers(len(kinds))]
        n_aff = int(rng.integers(max(1, N // 2), N + 1))
        feats = rng.choice(N, size=n_aff, replace=False)
        span = slice(lo, hi)
        if kind == "spike":
            mag = rng.uniform(5.0, 8.0)
            signs = rng.choice((-1.0, 1.0), size=(hi - lo, n_aff))
            values[span, feats] += signs * mag * clean_std[feats]
        elif kind == "level_shift":
            mag = rng.uniform(3.0, 4.5)
            signs = rng.choice((-1.0, 1.0), size=n_aff)
            values[span, feats] += signs * mag * clean_std[feats]
        else:  # correlation_break
            per = rng.uniform(10.0, 30.0, size=n_aff)
            ph = rng.uniform(0.0, 2.0 * np.pi, size=n_aff)
            tt = np.arange(hi - lo)[:, None]
            indep = np.sin(2.0 * np.pi * tt / per[None, :] + ph[None, :])
            values[span, feats] = (
                offsets[feats] + 2.0 * clean_std[feats] * indep
                + rng.normal(0.0, config.noise_std, size=(hi - lo, n_aff)))
        labels[span] = 1

    names = [f"sensor_{i}" for i in range(N)]
    return RawSeries(values=values, labels=labels, feature_names=names)
