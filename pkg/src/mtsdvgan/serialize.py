"""On-disk formats.

All binary artifacts are NPZ archives of named little-endian float32
arrays (each member carries its own shape header) plus an integer
format_version member.

Checkpoint members follow network.layer.gate.tensor naming, e.g.
``encoder.lstm0.f.W`` is the forget-gate input weights (hidden x in) of
the encoder's first layer; gates are f, i, c, o; head arrays use
``<network>.<head>.W`` / ``.b``.  The resolved TrainConfig is echoed
verbatim as a JSON string member.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import NormalizerState, PcaState, WindowSet
from .networks import (Affine, DiscriminatorParams, EncoderParams,
                       GeneratorParams, LstmLayer, ModelBundle, NetSpec,
                       GATE_ORDER)

FORMAT_VERSION = 1
F4 = "<f4"


class FormatError(ValueError):
    pass


def _check_version(archive, path):
    if "format_version" not in archive:
        raise FormatError(f"{path}: missing format_version")
    v = int(archive["format_version"])
    if v != FORMAT_VERSION:
        raise FormatError(f"{path}: format_version {v}, expected {FORMAT_VERSION}")


# ---------------------------------------------------------------------------
# preprocessing state
# ---------------------------------------------------------------------------

def save_preproc(path, normalizer: NormalizerState, pca: PcaState) -> None:
    np.savez(path,
             format_version=np.int32(FORMAT_VERSION),
             **{"normalizer.per_feature_max": normalizer.per_feature_max.astype(F4),
                "pca.mean": pca.mean.astype(F4),
                "pca.components": pca.components.astype(F4),
                "pca.explained_variance": pca.explained_variance.astype(F4)})


def load_preproc(path):
    with np.load(path) as z:
        _check_version(z, path)
        norm = NormalizerState(per_feature_max=z["normalizer.per_feature_max"].astype(np.float64))
        pca = PcaState(mean=z["pca.mean"].astype(np.float64),
                       components=z["pca.components"].astype(np.float64),
                       explained_variance=z["pca.explained_variance"].astype(np.float64))
    return norm, pca


# ---------------------------------------------------------------------------
# window archives
# ---------------------------------------------------------------------------

def save_windows(path, ws: WindowSet) -> None:
    members = {"format_version": np.int32(FORMAT_VERSION),
               "windows": ws.windows.astype(F4),
               "start_indices": ws.start_indices.astype("<i8")}
    if ws.window_labels is not None:
        members["window_labels"] = ws.window_labels.astype(np.uint8)
    np.savez(path, **members)


def load_windows(path) -> WindowSet:
    with np.load(path) as z:
        _check_version(z, path)
        labels = z["window_labels"] if "window_labels" in z else None
        return WindowSet(windows=z["windows"].astype(np.float32),
                         window_labels=labels,
                         start_indices=z["start_indices"])


# ---------------------------------------------------------------------------
# model checkpoints
# ---------------------------------------------------------------------------

def _split_gates(name: str, layer: LstmLayer, out: dict) -> None:
    h = layer.hidden
    for gi, gate in enumerate(GATE_ORDER):
        sl = slice(gi * h, (gi + 1) * h)
        out[f"{name}.{gate}.W"] = layer.W.data[sl].astype(F4)
        out[f"{name}.{gate}.U"] = layer.U.data[sl].astype(F4)
        out[f"{name}.{gate}.b"] = layer.b.data[sl].astype(F4)


def _join_gates(z, name: str, dtype) -> LstmLayer:
    W = np.concatenate([z[f"{name}.{g}.W"] for g in GATE_ORDER]).astype(dtype)
    U = np.concatenate([z[f"{name}.{g}.U"] for g in GATE_ORDER]).astype(dtype)
    b = np.concatenate([z[f"{name}.{g}.b"] for g in GATE_ORDER]).astype(dtype)
    return LstmLayer(W=ad.leaf(W), U=ad.leaf(U), b=ad.leaf(b))


def _save_affine(name: str, aff: Affine, out: dict) -> None:
    out[f"{name}.W"] = aff.W.data.astype(F4)
    out[f"{name}.b"] = aff.b.data.astype(F4)


def _load_affine(z, name: str, dtype) -> Affine:
    return Affine(W=ad.leaf(z[f"{name}.W"].astype(dtype)),
                  b=ad.leaf(z[f"{name}.b"].astype(dtype)))


def save_checkpoint(path, bundle: ModelBundle, cfg, epoch: int) -> None:
    members = {"format_version": np.int32(FORMAT_VERSION),
               "epoch": np.int32(epoch),
               "config_json": np.str_(json.dumps(asdict(cfg), sort_keys=True))}
    if bundle.encoder is not None:
        for l, layer in enumerate(bundle.encoder.layers):
            _split_gates(f"encoder.lstm{l}", layer, members)
        _save_affine("encoder.mu_head", bundle.encoder.mu_head, members)
        _save_affine("encoder.logvar_head", bundle.encoder.logvar_head, members)
    for l, layer in enumerate(bundle.generator.layers):
        _split_gates(f"generator.lstm{l}", layer, members)
    _save_affine("generator.latent_to_state", bundle.generator.latent_to_state, members)
    _save_affine("generator.output_head", bundle.generator.output_head, members)
    for l, layer in enumerate(bundle.discriminator.layers):
        _split_gates(f"discriminator.lstm{l}", layer, members)
    _save_affine("discriminator.feature_head", bundle.discriminator.feature_head, members)
    _save_affine("discriminator.final_head", bundle.discriminator.final_head, members)
    np.savez(path, **members)


def load_checkpoint(path):
    """Returns (ModelBundle, config dict, epoch)."""
    from .training import TrainConfig

    with np.load(path) as z:
        _check_version(z, path)
        cfg_dict = json.loads(str(z["config_json"]))
        epoch = int(z["epoch"])
        cfg = TrainConfig(**cfg_dict)
        dtype = np.dtype(cfg.dtype)

        has_encoder = any(k.startswith("encoder.") for k in z.files)
        encoder = None
        if has_encoder:
            encoder = EncoderParams(
                layers=[_join_gates(z, f"encoder.lstm{l}", dtype)
                        for l in range(cfg.lstm_depth)],
                mu_head=_load_affine(z, "encoder.mu_head", dtype),
                logvar_head=_load_affine(z, "encoder.logvar_head", dtype))
        generator = GeneratorParams(
            latent_to_state=_load_affine(z, "generator.latent_to_state", dtype),
            layers=[_join_gates(z, f"generator.lstm{l}", dtype)
                    for l in range(cfg.lstm_depth)],
            output_head=_load_affine(z, "generator.output_head", dtype))
        discriminator = DiscriminatorParams(
            layers=[_join_gates(z, f"discriminator.lstm{l}", dtype)
                    for l in range(cfg.lstm_depth)],
            feature_head=_load_affine(z, "discriminator.feature_head", dtype),
            final_head=_load_affine(z, "discriminator.final_head", dtype))

    features = generator.output_head.W.data.shape[0]
    spec = NetSpec(window=cfg.window_size, features=features,
                   hidden=cfg.hidden_units, depth=cfg.lstm_depth,
                   latent=cfg.latent_dimension,
                   disc_feature_dim=discriminator.feature_head.W.data.shape[0],
                   prob_clamp=cfg.prob_clamp,
                   decoder_feedback=cfg.decoder_feedback, dtype=cfg.dtype)
    bundle = ModelBundle(spec=spec, encoder=encoder, generator=generator,
                         discriminator=discriminator)
    return bundle, cfg, epoch


# ---------------------------------------------------------------------------
# history CSV
# ---------------------------------------------------------------------------

HISTORY_COLUMNS = ("epoch", "kl", "adv_gen", "l_gc", "contras_z", "contras_x",
                   "j_enc", "j_gen", "j_disc")


def write_history_csv(path, history) -> None:
    lines = [",".join(HISTORY_COLUMNS)]
    for i, rec in enumerate(history.epochs, start=1):
        cells = [str(i)]
        for name in HISTORY_COLUMNS[1:]:
            v = getattr(rec, name)
            cells.append("" if v is None else repr(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
