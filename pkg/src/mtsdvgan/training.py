"""Alternating three-network training.

One step: sample a batch of normal windows, encode, reconstruct, decode a
noise batch, run the discriminator on all three populations, assemble the
three objectives, then update discriminator -> generator -> encoder with
RMSProp.  All three gradients are evaluated at the step-start parameters
before any update is applied.  The contrastive branch re-encodes a
jitter-and-scale view of the batch with the same weights and the same
reparameterization noise, so the latent contrast measures posterior
drift, not sampling noise.

Ablations: no_contrastive zeroes both contrastive terms; no_encoder
trains a plain GAN from noise (the encoder is absent and detection later
recovers latents by gradient inversion); bce_generator replaces the
feature-center distance with the standard -E ln D(x~) generator loss.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import losses
from .autodiff import Tensor
from .data import WindowSet, jitter_scale
from .networks import (ModelBundle, NetSpec, discriminate, encode, generate,
                       grad, group_tensors, init_bundle, reparameterize)
from .optim import RmsPropState, rmsprop_init, rmsprop_step

ABLATION_FLAGS = ("no_contrastive", "no_encoder", "bce_generator")


class NonFiniteLoss(FloatingPointError):
    """A training loss left the reals; carries the offending term name."""


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int = 500
    batch_size: int = 100
    window_size: int = 30
    shift_length: int = 10
    latent_dimension: int = 15
    hidden_units: int = 100
    lstm_depth: int = 3
    alpha: float = 0.1
    beta: float = 0.05
    seed: int = 0
    prob_clamp: float = 1e-6
    init_std: float = 0.02
    sigma_jitter: float = 0.03
    sigma_scale: float = 0.1
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    signal_number: int = 5
    val_fraction: float = 0.2
    no_contrastive: bool = False
    no_encoder: bool = False
    bce_generator: bool = False
    gen_adversarial: bool = True
    decoder_feedback: str = "autoregressive"
    dtype: str = "float32"

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.prob_clamp < 0.5:
            raise ValueError("prob_clamp must lie in (0, 0.5)")
        if self.decoder_feedback not in ("autoregressive", "repeat_latent"):
            raise ValueError(f"unknown decoder_feedback {self.decoder_feedback!r}")

    def net_spec(self, features: int) -> NetSpec:
        return NetSpec(window=self.window_size, features=features,
                       hidden=self.hidden_units, depth=self.lstm_depth,
                       latent=self.latent_dimension,
                       disc_feature_dim=self.hidden_units,
                       prob_clamp=self.prob_clamp,
                       decoder_feedback=self.decoder_feedback,
                       dtype=self.dtype)


@dataclass
class LossBundle:
    kl: float
    adv_gen: float
    l_gc: Optional[float]  # None under bce_generator (reported as absent)
    contras_z: float
    contras_x: float
    j_enc: float
    j_gen: float
    j_disc: float

    FIELDS = ("kl", "adv_gen", "l_gc", "contras_z", "contras_x",
              "j_enc", "j_gen", "j_disc")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)        # per-epoch mean LossBundle
    checkpoints: list = field(default_factory=list)   # one path per epoch
    duration_s: float = 0.0


@dataclass
class StepNoise:
    """All randomness one step consumes, drawn up front so the objectives
    are deterministic functions of the parameters (gradient checks rely
    on this)."""

    eps: np.ndarray     # reparameterization draw, shared by both branches
    z_noise: np.ndarray
    aug: Optional[np.ndarray]  # augmented view of the batch, or None


def draw_step_noise(x_batch: np.ndarray, cfg: TrainConfig,
                    rng: np.random.Generator) -> StepNoise:
    B = x_batch.shape[0]
    dt = x_batch.dtype
    eps = rng.standard_normal((B, cfg.latent_dimension)).astype(dt)
    z_noise = rng.standard_normal((B, cfg.latent_dimension)).astype(dt)
    aug = None
    if not (cfg.no_contrastive or cfg.no_encoder):
        aug = jitter_scale(x_batch, cfg.sigma_jitter, cfg.sigma_scale, rng)
    return StepNoise(eps=eps, z_noise=z_noise, aug=aug)


def _check_finite(name: str, value: float) -> float:
    if not np.isfinite(value):
        raise NonFiniteLoss(f"loss term '{name}' is non-finite ({value})")
    return float(value)


def step_objectives(bundle: ModelBundle, x_batch: np.ndarray, noise: StepNoise,
                    cfg: TrainConfig):
    """Build the step's tape and return (j_disc, j_gen, j_enc, LossBundle).

    The returned objectives are Tensors over one shared set of forwards;
    gradients w.r.t. each network's parameter group reproduce the three
    update rules exactly.
    """
    spec = bundle.spec
    k = spec.window
    clamp = spec.prob_clamp
    xt = Tensor(x_batch)

    zeros = Tensor(np.zeros((), dtype=x_batch.dtype))

    if not cfg.no_encoder:
        mu, logvar = encode(bundle.encoder, xt)
        z = reparameterize(mu, logvar, noise.eps)
        x_g = generate(bundle.generator, z, k, spec.decoder_feedback)
        kl = losses.kl_gauss_std(mu, logvar)
    else:
        x_g = None
        kl = zeros

    x_f = generate(bundle.generator, Tensor(noise.z_noise), k, spec.decoder_feedback)

    y_k, fea_k = discriminate(bundle.discriminator, xt, clamp)
    y_f, fea_f = discriminate(bundle.discriminator, x_f, clamp)

    if not cfg.no_encoder:
        y_g, fea_g = discriminate(bundle.discriminator, x_g, clamp)
        j_disc = losses.disc_objective_from_probs(y_k, y_g, y_f)
        adv = losses.adversarial_from_probs(y_g)
        gc = losses.center_distance(fea_k, fea_g)
    else:
        # plain GAN: no reconstruction population
        j_disc = ad.neg(ad.add(ad.tmean(ad.log(y_k)),
                               ad.tmean(ad.log(ad.sub(Tensor(np.ones_like(y_f.data)), y_f)))))
        adv = losses.adversarial_from_probs(y_f)
        gc = losses.center_distance(fea_k, fea_f)

    contras_z = None
    contras_x = None
    if noise.aug is not None:
        mu_a, logvar_a = encode(bundle.encoder, Tensor(noise.aug))
        z_aug = reparameterize(mu_a, logvar_a, noise.eps)
        x_ga = generate(bundle.generator, z_aug, k, spec.decoder_feedback)
        contras_z = losses.contrastive(z, z_aug)
        contras_x = losses.contrastive(x_g, x_ga)

    gc_term = adv if cfg.bce_generator else gc
    j_gen = losses.gen_objective(adv, gc_term, contras_x, cfg.beta,
                                 include_adversarial=cfg.gen_adversarial)
    if not cfg.no_encoder:
        j_enc = losses.enc_objective(adv, kl, contras_z, cfg.alpha)
    else:
        j_enc = zeros

    report = LossBundle(
        kl=_check_finite("kl", kl.item()),
        adv_gen=_check_finite("adv_gen", adv.item()),
        l_gc=None if cfg.bce_generator else _check_finite("l_gc", gc.item()),
        contras_z=_check_finite("contras_z", contras_z.item()) if contras_z is not None else 0.0,
        contras_x=_check_finite("contras_x", contras_x.item()) if contras_x is not None else 0.0,
        j_enc=_check_finite("j_enc", j_enc.item()),
        j_gen=_check_finite("j_gen", j_gen.item()),
        j_disc=_check_finite("j_disc", j_disc.item()),
    )
    return j_disc, j_gen, j_enc, report


@dataclass
class OptimState:
    disc: RmsPropState
    gen: RmsPropState
    enc: Optional[RmsPropState]


def init_optim(bundle: ModelBundle, cfg: TrainConfig) -> OptimState:
    mk = lambda group: rmsprop_init([t for _, t in group_tensors(bundle, group)],
                                    rho=cfg.rms_decay, eps=cfg.rms_eps)
    return OptimState(disc=mk("discriminator"), gen=mk("generator"),
                      enc=mk("encoder") if bundle.encoder is not None else None)


def train_step(bundle: ModelBundle, x_batch: np.ndarray, noise: StepNoise,
               opt: OptimState, cfg: TrainConfig) -> LossBundle:
    """One Algorithm-style update: gradients at step-start parameters,
    then apply discriminator -> generator -> encoder in that order."""
    j_disc, j_gen, j_enc, report = step_objectives(bundle, x_batch, noise, cfg)

    disc_params = [t for _, t in group_tensors(bundle, "discriminator")]
    gen_params = [t for _, t in group_tensors(bundle, "generator")]
    g_disc = grad(j_disc, disc_params)
    g_gen = grad(j_gen, gen_params)
    if bundle.encoder is not None:
        enc_params = [t for _, t in group_tensors(bundle, "encoder")]
        g_enc = grad(j_enc, enc_params)

    rmsprop_step(disc_params, g_disc, opt.disc, cfg.learning_rate)
    rmsprop_step(gen_params, g_gen, opt.gen, cfg.learning_rate)
    if bundle.encoder is not None:
        rmsprop_step(enc_params, g_enc, opt.enc, cfg.learning_rate)
    return report


def _mean_bundle(reports, weights) -> LossBundle:
    total = float(sum(weights))
    acc = {}
    for name in LossBundle.FIELDS:
        vals = [getattr(r, name) for r in reports]
        if any(v is None for v in vals):
            acc[name] = None
        else:
            acc[name] = float(sum(v * w for v, w in zip(vals, weights)) / total)
    return LossBundle(**acc)


def train(windows: WindowSet, cfg: TrainConfig, out_dir,
          bundle: Optional[ModelBundle] = None) -> tuple:
    """Train on a labeled-normal WindowSet; one checkpoint per epoch.

    Returns (bundle, TrainHistory).  Deterministic in (windows, cfg).
    """
    from .serialize import save_checkpoint, write_history_csv

    cfg.validate()
    if len(windows) == 0:
        raise ValueError("empty window set")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    x_all = np.ascontiguousarray(windows.windows, dtype=np.dtype(cfg.dtype))
    if bundle is None:
        spec = cfg.net_spec(windows.d)
        bundle = init_bundle(spec, seed=cfg.seed, init_std=cfg.init_std,
                             with_encoder=not cfg.no_encoder)
    opt = init_optim(bundle, cfg)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    t0 = time.perf_counter()
    history = TrainHistory()
    n = x_all.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        reports, weights = [], []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            batch = x_all[idx]
            noise = draw_step_noise(batch, cfg, rng)
            reports.append(train_step(bundle, batch, noise, opt, cfg))
            weights.append(len(idx))
        history.epochs.append(_mean_bundle(reports, weights))
        ckpt = out_dir / f"epoch_{epoch:04d}.npz"
        save_checkpoint(ckpt, bundle, cfg, epoch)
        history.checkpoints.append(str(ckpt))
    history.duration_s = time.perf_counter() - t0
    write_history_csv(out_dir / "history.csv", history)
    return bundle, history
