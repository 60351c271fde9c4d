import json

import numpy as np
import pytest

from mtsdvgan.data import NormalizerState, PcaState, WindowSet
from mtsdvgan.networks import init_bundle, named_tensors
from mtsdvgan.serialize import (FormatError, load_checkpoint, load_preproc,
                                load_windows, save_checkpoint, save_preproc,
                                save_windows, write_history_csv)
from mtsdvgan.training import LossBundle, TrainConfig, TrainHistory


def test_preproc_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    norm = NormalizerState(per_feature_max=rng.uniform(1, 5, 6))
    comps = np.linalg.qr(rng.normal(size=(6, 6)))[0][:3]
    pca = PcaState(mean=rng.normal(size=6), components=comps,
                   explained_variance=np.array([3.0, 2.0, 1.0]))
    p = tmp_path / "state.npz"
    save_preproc(p, norm, pca)
    norm2, pca2 = load_preproc(p)
    # stored as float32 per the archive format
    np.testing.assert_allclose(norm2.per_feature_max, norm.per_feature_max, rtol=1e-6)
    np.testing.assert_allclose(pca2.components, comps, atol=1e-6)
    assert pca2.d == 3


def test_preproc_members_are_little_endian_float32(tmp_path):
    norm = NormalizerState(per_feature_max=np.ones(3))
    pca = PcaState(mean=np.zeros(3), components=np.eye(3),
                   explained_variance=np.ones(3))
    p = tmp_path / "state.npz"
    save_preproc(p, norm, pca)
    with np.load(p) as z:
        assert int(z["format_version"]) == 1
        for key in ("normalizer.per_feature_max", "pca.mean",
                    "pca.components", "pca.explained_variance"):
            assert z[key].dtype == np.dtype("<f4")


def test_windows_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    ws = WindowSet(windows=rng.normal(size=(7, 4, 3)).astype(np.float32),
                   window_labels=rng.integers(0, 2, 7).astype(np.uint8),
                   start_indices=np.arange(7, dtype=np.int64) * 5)
    p = tmp_path / "w.npz"
    save_windows(p, ws)
    back = load_windows(p)
    np.testing.assert_array_equal(back.windows, ws.windows)
    np.testing.assert_array_equal(back.window_labels, ws.window_labels)
    np.testing.assert_array_equal(back.start_indices, ws.start_indices)


def test_windows_without_labels(tmp_path):
    ws = WindowSet(windows=np.zeros((2, 3, 1), dtype=np.float32),
                   window_labels=None,
                   start_indices=np.array([0, 3], dtype=np.int64))
    p = tmp_path / "w.npz"
    save_windows(p, ws)
    assert load_windows(p).window_labels is None


def test_checkpoint_round_trip_exact(tmp_path):
    cfg = TrainConfig(window_size=5, latent_dimension=2, hidden_units=4,
                      lstm_depth=2, signal_number=2)
    bundle = init_bundle(cfg.net_spec(2), seed=3, init_std=0.3)
    p = tmp_path / "ck.npz"
    save_checkpoint(p, bundle, cfg, epoch=7)
    bundle2, cfg2, epoch = load_checkpoint(p)
    assert epoch == 7
    assert cfg2 == cfg
    names1 = dict(named_tensors(bundle))
    names2 = dict(named_tensors(bundle2))
    assert names1.keys() == names2.keys()
    for name in names1:
        np.testing.assert_array_equal(names1[name].data, names2[name].data)


def test_checkpoint_member_naming_scheme(tmp_path):
    cfg = TrainConfig(window_size=5, latent_dimension=2, hidden_units=4,
                      lstm_depth=1, signal_number=2)
    bundle = init_bundle(cfg.net_spec(2), seed=0)
    p = tmp_path / "ck.npz"
    save_checkpoint(p, bundle, cfg, epoch=1)
    with np.load(p) as z:
        keys = set(z.files)
        # network.layer.gate.tensor naming for recurrent arrays
        for net in ("encoder", "generator", "discriminator"):
            for gate in ("f", "i", "c", "o"):
                for tensor in ("W", "U", "b"):
                    assert f"{net}.lstm0.{gate}.{tensor}" in keys
        assert "encoder.mu_head.W" in keys
        assert "generator.latent_to_state.W" in keys
        assert "discriminator.final_head.b" in keys
        assert z["encoder.lstm0.f.W"].dtype == np.dtype("<f4")
        cfg_echo = json.loads(str(z["config_json"]))
        assert cfg_echo["window_size"] == 5
        assert cfg_echo["epochs"] == cfg.epochs


def test_checkpoint_without_encoder(tmp_path):
    cfg = TrainConfig(window_size=5, latent_dimension=2, hidden_units=4,
                      lstm_depth=1, signal_number=2, no_encoder=True)
    bundle = init_bundle(cfg.net_spec(2), seed=0, with_encoder=False)
    p = tmp_path / "ck.npz"
    save_checkpoint(p, bundle, cfg, epoch=1)
    bundle2, cfg2, _ = load_checkpoint(p)
    assert bundle2.encoder is None
    assert cfg2.no_encoder


def test_format_version_checked(tmp_path):
    p = tmp_path / "bad.npz"
    np.savez(p, format_version=np.int32(99), windows=np.zeros((1, 2, 1)))
    with pytest.raises(FormatError, match="format_version"):
        load_windows(p)


def test_history_csv_layout(tmp_path):
    hist = TrainHistory()
    hist.epochs.append(LossBundle(kl=0.1, adv_gen=0.2, l_gc=0.3, contras_z=0.0,
                                  contras_x=0.0, j_enc=0.4, j_gen=0.5, j_disc=0.6))
    hist.epochs.append(LossBundle(kl=0.1, adv_gen=0.2, l_gc=None, contras_z=0.0,
                                  contras_x=0.0, j_enc=0.4, j_gen=0.5, j_disc=0.6))
    p = tmp_path / "history.csv"
    write_history_csv(p, hist)
    lines = p.read_text().splitlines()
    assert lines[0] == "epoch,kl,adv_gen,l_gc,contras_z,contras_x,j_enc,j_gen,j_disc"
    assert lines[1].split(",")[3] == "0.3"
    assert lines[2].split(",")[3] == ""  # absent center loss
