import numpy as np
import pytest

from mtsdvgan.synth import ANOMALY_KINDS, SynthConfig, synth_generate


def test_determinism_bitwise():
    cfg = SynthConfig(n_features=5, length=2000, seed=13)
    a = synth_generate(cfg)
    b = synth_generate(cfg)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_label_rate_within_twenty_percent():
    for seed in range(5):
        cfg = SynthConfig(length=10000, seed=seed, anomaly_rate=0.05)
        s = synth_generate(cfg)
        rate = s.labels.sum() / len(s.labels)
        assert 0.8 * 0.05 <= rate <= 1.2 * 0.05


def test_empty_kinds_rejected():
    with pytest.raises(ValueError, match="anomaly_kinds"):
        synth_generate(SynthConfig(anomaly_kinds=frozenset()))


@pytest.mark.parametrize("rate", (0.0, 0.5, 0.7, -0.1))
def test_rate_bounds(rate):
    with pytest.raises(ValueError, match="anomaly_rate"):
        synth_generate(SynthConfig(anomaly_rate=rate))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown anomaly kinds"):
        synth_generate(SynthConfig(anomaly_kinds=frozenset({"meteor"})))


@pytest.mark.parametrize("kind", ANOMALY_KINDS)
def test_each_kind_generates(kind):
    s = synth_generate(SynthConfig(length=4000, seed=3,
                                   anomaly_kinds=frozenset({kind})))
    assert np.isfinite(s.values).all()
    assert s.labels.sum() > 0
    assert set(np.unique(s.labels)) <= {0, 1}


def test_anomalous_rows_differ_from_normal_pattern():
    cfg = SynthConfig(length=8000, seed=2)
    s = synth_generate(cfg)
    normal_std = s.values[s.labels == 0].std(axis=0)
    anom = s.values[s.labels == 1]
    centered = np.abs(anom - s.values[s.labels == 0].mean(axis=0)) / normal_std
    # injected spans are several sigma out on at least some channels
    assert (centered.max(axis=1) > 2.0).mean() > 0.5
