"""Training losses: KL regularizer, adversarial terms, feature-center
distance, contrastive penalties, and the three composite objectives.

All primitives act on tape Tensors so that composite objectives remain
exactly differentiable; every one also accepts plain arrays (wrapped on
entry), which the unit tests use to pin arithmetic identities.

Sign convention: every objective here is MINIMIZED.  The discriminator
minimizes -[ln D(x) + ln(1-D(x_recon)) + ln(1-D(x_noise))]; generator and
encoder minimize -E ln D(x_recon) plus their respective regularizers
(feature-center distance + beta * reconstruction-contrast for the
generator; KL + alpha * latent-contrast for the encoder).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .networks import discriminate


def kl_gauss_std(mu, logvar) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, 1)) summed over latent dims, averaged
    over the batch: 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)."""
    mu = ad.as_tensor(mu)
    logvar = ad.as_tensor(logvar)
    if not (np.isfinite(mu.data).all() and np.isfinite(logvar.data).all()):
        raise ValueError("kl_gauss_std: non-finite input")
    per_elem = ad.sub(ad.sub(ad.add(ad.square(mu), ad.exp(logvar)),
                             Tensor(np.ones_like(mu.data))), logvar)
    total = ad.scale(ad.tsum(per_elem), 0.5)
    batch = mu.data.shape[0] if mu.data.ndim == 2 else 1
    return ad.scale(total, 1.0 / batch)


def adversarial_from_probs(y) -> Tensor:
    """-mean ln y over the batch; y must already be clamped into (0, 1)."""
    y = ad.as_tensor(y)
    return ad.neg(ad.tmean(ad.log(y)))


def adversarial_gen_term(disc, windows, prob_clamp: float = 1e-6) -> Tensor:
    """-E ln D(x~) on a batch of reconstructions; minimized by Gen/Enc."""
    y, _ = discriminate(disc, ad.as_tensor(windows), prob_clamp)
    return adversarial_from_probs(y)


def feature_center(fea) -> Tensor:
    """Arithmetic mean of discriminator features over the batch axis."""
    fea = ad.as_tensor(fea)
    if fea.data.shape[0] < 1:
        raise ValueError("feature_center: empty batch")
    return ad.tmean(fea, axis=0)


def center_distance(fea_real, fea_recon) -> Tensor:
    """Euclidean distance between the two batch feature centers."""
    diff = ad.sub(feature_center(fea_real), feature_center(fea_recon))
    return ad.sqrt(ad.tsum(ad.square(diff)))


def feature_center_loss(disc, real_windows, recon_windows,
                        prob_clamp: float = 1e-6) -> Tensor:
    """Distance between mini-batch feature centers of real vs reconstructed
    windows; gradients never reach the discriminator parameters because
    only generator parameters are ever requested for this term."""
    _, fea_r = discriminate(disc, ad.as_tensor(real_windows), prob_clamp)
    _, fea_g = discriminate(disc, ad.as_tensor(recon_windows), prob_clamp)
    return center_distance(fea_r, fea_g)


def contrastive(a, b) -> Tensor:
    """Squared Euclidean distance between paired items, batch-averaged."""
    a, b = ad.as_tensor(a), ad.as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"contrastive: shape mismatch {a.data.shape} vs {b.data.shape}")
    total = ad.tsum(ad.square(ad.sub(a, b)))
    batch = a.data.shape[0] if a.data.ndim > 1 else 1
    return ad.scale(total, 1.0 / batch)


contrastive_latent = contrastive
contrastive_recon = contrastive


def disc_objective_from_probs(y_real, y_recon, y_noise) -> Tensor:
    """-mean[ln D(x) + ln(1 - D(x_recon)) + ln(1 - D(x_noise))], >= 0."""

    def _ln(t):
        return ad.log(ad.as_tensor(t))

    def _ln1m(t):
        t = ad.as_tensor(t)
        return ad.log(ad.sub(Tensor(np.ones_like(t.data)), t))

    return ad.neg(ad.add(ad.tmean(_ln(y_real)),
                         ad.add(ad.tmean(_ln1m(y_recon)), ad.tmean(_ln1m(y_noise)))))


def disc_objective(disc, x_real, x_recon, x_noise, prob_clamp: float = 1e-6) -> Tensor:
    y_r, _ = discriminate(disc, ad.as_tensor(x_real), prob_clamp)
    y_g, _ = discriminate(disc, ad.as_tensor(x_recon), prob_clamp)
    y_f, _ = discriminate(disc, ad.as_tensor(x_noise), prob_clamp)
    return disc_objective_from_probs(y_r, y_g, y_f)


def gen_objective(adv, l_gc, contras_x, beta: float,
                  include_adversarial: bool = True) -> Tensor:
    """J_gen = adv + l_gc + beta * contras_x (each term a scalar Tensor).

    include_adversarial=False drops the log-D term, the literal reading in
    which the generator trains on the feature-center distance alone.
    """
    out = ad.as_tensor(l_gc)
    if include_adversarial:
        out = ad.add(ad.as_tensor(adv), out)
    if beta != 0.0 and contras_x is not None:
        out = ad.add(out, ad.scale(ad.as_tensor(contras_x), beta))
    return out


def enc_objective(adv, kl, contras_z, alpha: float) -> Tensor:
    """J_enc = adv + kl + alpha * contras_z."""
    out = ad.add(ad.as_tensor(adv), ad.as_tensor(kl))
    if alpha != 0.0 and contras_z is not None:
        out = ad.add(out, ad.scale(ad.as_tensor(contras_z), alpha))
    return out
