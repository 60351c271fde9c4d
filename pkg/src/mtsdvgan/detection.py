"""Window scoring and detection.

Each window gets a reconstruction error l_r (MSE against the decoded
posterior mean) and a discrimination score l_d = 1 - D(x), both rescaled
against a held-out normal reference split so the combined score
rd = lambda * l_d + (1 - lambda) * l_r mixes comparable scales.  The
detection threshold (and lambda, when "auto") maximizes F1 on the labeled
evaluation split; the grid is lambda in {0.00, 0.01, ..., 1.00}.

Models trained without an encoder recover each window's latent vector by
a short gradient descent on the decoder's MSE before scoring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import WindowSet
from .metrics import MetricsReport, confusion_metrics, roc_auc
from .networks import ModelBundle, discriminate, encode, generate, grad
from .optim import rmsprop_init, rmsprop_step

LAMBDA_GRID = tuple(round(0.01 * i, 2) for i in range(101))
QUANTILE_CAP = 512
QUANTILE_CUTOVER = 10_000


class ScoreNormalizationError(ValueError):
    pass


@dataclass
class ScoreSeries:
    l_r: np.ndarray
    l_d: np.ndarray
    rd: np.ndarray
    window_labels: Optional[np.ndarray]
    start_indices: np.ndarray


@dataclass
class LambdaChoice:
    lam: float
    f1: float


@dataclass
class DetectionReport:
    scores: ScoreSeries
    lam: Optional[float]
    threshold: Optional[float]
    metrics: Optional[MetricsReport]
    roc: Optional[tuple]  # (fpr, tpr, thresholds)
    mode: str = "rd"


# ---------------------------------------------------------------------------
# raw per-window scores
# ---------------------------------------------------------------------------

def _batched(n, size=256):
    for lo in range(0, n, size):
        yield lo, min(lo + size, n)


def invert_latent(bundle: ModelBundle, windows: np.ndarray, steps: int = 50,
                  lr: float = 0.1) -> np.ndarray:
    """Recover latents by minimizing decoder MSE from a zero start.

    Used when the checkpoint has no encoder; deterministic.
    """
    spec = bundle.spec
    z = ad.leaf(np.zeros((windows.shape[0], spec.latent), dtype=windows.dtype))
    state = rmsprop_init([z])
    target = Tensor(windows)
    for _ in range(steps):
        x_hat = generate(bundle.generator, z, spec.window, spec.decoder_feedback)
        loss = ad.tmean(ad.square(ad.sub(x_hat, target)))
        g = grad(loss, [z])
        rmsprop_step([z], g, state, lr)
    return z.data


def window_latents(bundle: ModelBundle, windows: np.ndarray) -> np.ndarray:
    """Posterior mean when an encoder exists, gradient inversion otherwise."""
    if bundle.encoder is not None:
        mu, _ = encode(bundle.encoder, Tensor(windows))
        return mu.data
    return invert_latent(bundle, windows)


def recon_errors(bundle: ModelBundle, windows: np.ndarray) -> np.ndarray:
    """Per-window mean squared reconstruction error over all k*d entries."""
    spec = bundle.spec
    windows = np.ascontiguousarray(windows, dtype=spec.np_dtype())
    out = np.empty(windows.shape[0], dtype=np.float64)
    for lo, hi in _batched(windows.shape[0]):
        chunk = windows[lo:hi]
        z = window_latents(bundle, chunk)
        x_hat = generate(bundle.generator, Tensor(z), spec.window,
                         spec.decoder_feedback).data
        out[lo:hi] = np.mean((chunk.astype(np.float64) - x_hat) ** 2, axis=(1, 2))
    return out


def disc_scores(bundle: ModelBundle, windows: np.ndarray) -> np.ndarray:
    """l_d = 1 - D(x): bounded in [0, 1], higher means more anomalous."""
    spec = bundle.spec
    windows = np.ascontiguousarray(windows, dtype=spec.np_dtype())
    out = np.empty(windows.shape[0], dtype=np.float64)
    for lo, hi in _batched(windows.shape[0]):
        y, _ = discriminate(bundle.discriminator, Tensor(windows[lo:hi]),
                            spec.prob_clamp)
        out[lo:hi] = 1.0 - y.data.astype(np.float64)
    return out


# ---------------------------------------------------------------------------
# score combination
# ---------------------------------------------------------------------------

def normalize_scores(reference: np.ndarray, target: np.ndarray,
                     channel: str = "score") -> np.ndarray:
    """Min-max rescale by the reference split's range, clipped to [0, 1]."""
    reference = np.asarray(reference, dtype=np.float64)
    if reference.size == 0:
        raise ScoreNormalizationError(f"{channel}: empty reference split")
    lo, hi = float(reference.min()), float(reference.max())
    if hi <= lo:
        raise ScoreNormalizationError(
            f"{channel}: constant reference scores (min == max == {lo})")
    return np.clip((np.asarray(target, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


def rd_score(l_d, l_r, lam: float):
    """rd = lambda * l_d + (1 - lambda) * l_r."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam * np.asarray(l_d, dtype=np.float64) + (1.0 - lam) * np.asarray(l_r, dtype=np.float64)


def _threshold_candidates(scores: np.ndarray) -> np.ndarray:
    distinct = np.unique(scores)
    if scores.size > QUANTILE_CUTOVER:
        inner = np.quantile(scores, np.linspace(0.0, 1.0, QUANTILE_CAP))
        inner = np.unique(inner)
    elif distinct.size > 1:
        inner = (distinct[:-1] + distinct[1:]) / 2.0
    else:
        inner = np.empty(0)
    # below-min candidate predicts everything anomalous; the max itself
    # predicts nothing (the rule is score > threshold)
    return np.concatenate([[distinct[0] - 1.0], inner, [distinct[-1]]])


def select_threshold(scores, labels):
    """Best-F1 threshold under the rule score > threshold => anomalous.

    Ties pick the smallest candidate.  Degenerate label vectors do not
    raise; the metrics carry degenerate flags instead.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.uint8)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")

    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    pos_prefix = np.concatenate([[0], np.cumsum(labels[order])])
    total_pos = int(labels.sum())
    n = scores.size

    best = None
    for cand in _threshold_candidates(scores):
        idx = int(np.searchsorted(sorted_scores, cand, side="right"))
        pred_pos = n - idx
        tp = total_pos - int(pos_prefix[idx])
        fp = pred_pos - tp
        fn = total_pos - tp
        tn = n - pred_pos - fn
        rep = confusion_metrics(tp, fp, fn, tn)
        if best is None or rep.f1 > best[1].f1:
            best = (float(cand), rep)
    threshold, report = best
    report.threshold = threshold
    return threshold, report


def sweep_lambda(l_d, l_r, labels):
    """Scan the 101-point lambda grid; returns (LambdaChoice, threshold,
    MetricsReport) for the best-F1 lambda (smallest on ties)."""
    l_d = np.asarray(l_d, dtype=np.float64)
    l_r = np.asarray(l_r, dtype=np.float64)
    best = None
    for lam in LAMBDA_GRID:
        thr, rep = select_threshold(rd_score(l_d, l_r, lam), labels)
        if best is None or rep.f1 > best[2].f1:
            best = (lam, thr, rep)
    lam, thr, rep = best
    return LambdaChoice(lam=lam, f1=rep.f1), thr, rep


# ---------------------------------------------------------------------------
# end-to-end detection
# ---------------------------------------------------------------------------

def detect(bundle: ModelBundle, eval_ws: WindowSet, reference_ws: WindowSet,
           lam="auto", threshold="auto", or_rule: bool = False) -> DetectionReport:
    """Score an evaluation split against a trained model.

    reference_ws must be a normal-only split unseen during threshold
    selection; it anchors the per-channel min-max normalization.  With
    lam or threshold set to "auto" the evaluation split must be labeled.
    """
    labels = eval_ws.window_labels
    auto = (lam == "auto") or (threshold == "auto") or or_rule
    if auto and labels is None:
        raise ValueError("auto lambda/threshold selection requires labeled data")

    ref_lr = recon_errors(bundle, reference_ws.windows)
    ref_ld = disc_scores(bundle, reference_ws.windows)
    ev_lr = recon_errors(bundle, eval_ws.windows)
    ev_ld = disc_scores(bundle, eval_ws.windows)

    lr_n = normalize_scores(ref_lr, ev_lr, channel="l_r")
    ld_n = normalize_scores(ref_ld, ev_ld, channel="l_d")

    if or_rule:
        # alarm if either channel alone crosses its best-F1 threshold
        thr_r, _ = select_threshold(lr_n, labels)
        thr_d, _ = select_threshold(ld_n, labels)
        pred = (lr_n > thr_r) | (ld_n > thr_d)
        from .metrics import confusion_counts
        rep = confusion_metrics(*confusion_counts(pred, labels))
        rd = np.maximum(lr_n - thr_r, ld_n - thr_d)
        scores = ScoreSeries(l_r=lr_n, l_d=ld_n, rd=rd, window_labels=labels,
                             start_indices=eval_ws.start_indices)
        roc = None
        if labels is not None and 0 < labels.sum() < labels.size:
            roc, auc = roc_auc(rd, labels)
            rep.auc = auc
        return DetectionReport(scores=scores, lam=None, threshold=None,
                               metrics=rep, roc=roc, mode="or_rule")

    if lam == "auto":
        choice, thr_auto, rep = sweep_lambda(ld_n, lr_n, labels)
        lam_value = choice.lam
    else:
        lam_value = float(lam)
        thr_auto = rep = None

    rd = rd_score(ld_n, lr_n, lam_value)

    if threshold == "auto":
        if rep is None or lam != "auto":
            thr_value, rep = select_threshold(rd, labels)
        else:
            thr_value = thr_auto
    else:
        thr_value = float(threshold)
        if labels is not None:
            from .metrics import confusion_counts
            rep = confusion_metrics(*confusion_counts(rd > thr_value, labels))
            rep.threshold = thr_value
        else:
            rep = None

    roc = None
    if labels is not None and 0 < int(labels.sum()) < labels.size:
        roc, auc = roc_auc(rd, labels)
        if rep is not None:
            rep.auc = auc

    scores = ScoreSeries(l_r=lr_n, l_d=ld_n, rd=rd, window_labels=labels,
                         start_indices=eval_ws.start_indices)
    return DetectionReport(scores=scores, lam=lam_value, threshold=thr_value,
                           metrics=rep, roc=roc)
