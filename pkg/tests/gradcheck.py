"""Finite-difference validation of the three training objectives on the
miniature configuration (depth 1, hidden 4, latent 2, k 5, d 2, batch 3).

All randomness (reparameterization draw, noise batch, augmented view) is
frozen up front, so each objective is a deterministic function of the
parameters and central differences are well defined.  init_std and input
scale are chosen so every parameter gradient sits far above the
~1e-11 finite-difference noise floor at step 1e-5.
"""

from __future__ import annotations

import numpy as np

from mtsdvgan.networks import init_bundle, group_tensors, grad
from mtsdvgan.training import TrainConfig, draw_step_noise, step_objectives

FD_STEP = 1e-5
REL_TOL = 1e-4

MINI_TRAIN_CFG = dict(learning_rate=1e-3, epochs=1, batch_size=3,
                      window_size=5, shift_length=2, latent_dimension=2,
                      hidden_units=4, lstm_depth=1, seed=3, signal_number=2,
                      init_std=0.6, dtype="float64")


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def build_case(seed=3, **overrides):
    cfg = TrainConfig(**{**MINI_TRAIN_CFG, **overrides})
    rng = np.random.default_rng(7)
    x = rng.normal(0.0, 1.0, size=(3, cfg.window_size, 2))
    bundle = init_bundle(cfg.net_spec(2), seed=seed, init_std=cfg.init_std,
                         with_encoder=not cfg.no_encoder)
    noise = draw_step_noise(x, cfg, np.random.default_rng(11))
    return bundle, x, noise, cfg


OBJECTIVE_GROUPS = (("j_disc", "discriminator"), ("j_gen", "generator"),
                    ("j_enc", "encoder"))


def check_objective_gradients(bundle, x, noise, cfg, objective: str,
                              group: str):
    """Max relative error of every parameter gradient vs central FD.

    Returns (worst_rel_err, n_checked).
    """
    idx = {"j_disc": 0, "j_gen": 1, "j_enc": 2}[objective]

    def value() -> float:
        return step_objectives(bundle, x, noise, cfg)[idx].item()

    objective_tensor = step_objectives(bundle, x, noise, cfg)[idx]
    params = [t for _, t in group_tensors(bundle, group)]
    grads = grad(objective_tensor, params)

    worst = 0.0
    checked = 0
    for t, g in zip(params, grads):
        flat = t.data.ravel()
        gflat = np.asarray(g).ravel()
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + FD_STEP
            fp = value()
            flat[j] = old - FD_STEP
            fm = value()
            flat[j] = old
            fd = (fp - fm) / (2.0 * FD_STEP)
            worst = max(worst, rel_err(fd, gflat[j]))
            checked += 1
    return worst, checked
