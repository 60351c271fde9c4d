"""Data pipeline: CSV ingestion, normalization, PCA, sliding windows,
jitter-and-scale augmentation.

Preprocessing is always fitted on training data only and then applied
unchanged to evaluation data; see fit_normalizer / fit_pca.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np


class IngestError(ValueError):
    """Raised when a CSV file violates the documented input schema."""


class DegenerateColumn(ValueError):
    """A training column whose maximum is zero or non-finite."""


class EmptyWindowSet(ValueError):
    """Series shorter than one window."""


@dataclass
class RawSeries:
    """T x N multivariate series with optional per-timestep 0/1 labels."""

    values: np.ndarray
    labels: Optional[np.ndarray] = None
    feature_names: Optional[list] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise IngestError(f"series must be T x N with T,N >= 1, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise IngestError("series contains non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.values.shape[0],):
                raise IngestError(
                    f"labels length {self.labels.shape} does not match T={self.values.shape[0]}")
            if not np.isin(self.labels, (0, 1)).all():
                raise IngestError("labels must contain only 0 or 1")
            self.labels = self.labels.astype(np.uint8)
        if self.feature_names is None:
            self.feature_names = [f"f{i}" for i in range(self.values.shape[1])]


@dataclass
class NormalizerState:
    """Column-wise training maxima for x' = 2 x / max - 1 scaling."""

    per_feature_max: np.ndarray


@dataclass
class PcaState:
    mean: np.ndarray                 # (N,)
    components: np.ndarray           # (d, N), rows orthonormal
    explained_variance: np.ndarray   # (d,), nonincreasing

    @property
    def d(self) -> int:
        return self.components.shape[0]


@dataclass
class WindowSet:
    """Fixed-length windows cut from one series with a constant stride."""

    windows: np.ndarray              # (W, k, d)
    window_labels: Optional[np.ndarray]  # (W,) uint8, or None for unlabeled data
    start_indices: np.ndarray        # (W,) int64

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def k(self) -> int:
        return self.windows.shape[1]

    @property
    def d(self) -> int:
        return self.windows.shape[2]


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

LABEL_COLUMN = "label"


def load_csv(path, has_labels: bool = False) -> RawSeries:
    """Read the documented CSV schema: header row, float cells, optional
    `label` column with values 0/1.

    Feature columns keep header order; the label column is excluded from
    values.  Any malformed cell fails loudly with its row number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        label_idx = None
        if has_labels:
            if LABEL_COLUMN not in header:
                raise IngestError(f"{path}: required column '{LABEL_COLUMN}' missing")
            label_idx = header.index(LABEL_COLUMN)
        elif LABEL_COLUMN in header:
            # tolerate a label column when labels were not requested
            label_idx = header.index(LABEL_COLUMN)

        feature_names = [h for i, h in enumerate(header) if i != label_idx]
        rows = []
        labels = [] if label_idx is not None else None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            vals = []
            for i, cell in enumerate(row):
                if i == label_idx:
                    if cell.strip() not in ("0", "1"):
                        raise IngestError(
                            f"{path}:{lineno}: label must be 0 or 1, got {cell!r}")
                    labels.append(int(cell))
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestError(
                        f"{path}:{lineno}: non-numeric cell {cell!r} in column "
                        f"'{header[i]}'") from None
                if not np.isfinite(v):
                    raise IngestError(
                        f"{path}:{lineno}: non-finite value {cell!r} in column '{header[i]}'")
                vals.append(v)
            rows.append(vals)
        if not rows:
            raise IngestError(f"{path}: no data rows")

    values = np.asarray(rows, dtype=np.float64)
    label_arr = np.asarray(labels, dtype=np.uint8) if labels is not None else None
    return RawSeries(values=values, labels=label_arr, feature_names=feature_names)


def write_csv(path, series: RawSeries) -> None:
    """Inverse of load_csv; emits the label column last when present."""
    header = list(series.feature_names)
    if series.labels is not None:
        header.append(LABEL_COLUMN)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(series.values.shape[0]):
            row = [repr(float(v)) for v in series.values[i]]
            if series.labels is not None:
                row.append(str(int(series.labels[i])))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def fit_normalizer(train: RawSeries) -> NormalizerState:
    """Record column maxima of the training data.

    The scaling formula x' = 2 x / max(x) - 1 maps nonnegative training
    data into [-1, 1]; columns whose maximum is zero or non-finite cannot
    be scaled and are rejected.
    """
    col_max = train.values.max(axis=0)
    bad = ~np.isfinite(col_max) | (col_max == 0.0)
    if bad.any():
        names = [train.feature_names[i] for i in np.flatnonzero(bad)]
        raise DegenerateColumn(
            f"columns with zero or non-finite training maximum: {names}")
    return NormalizerState(per_feature_max=col_max.copy())


def apply_normalizer(state: NormalizerState, series: RawSeries) -> RawSeries:
    """x' = 2 x / max - 1 using training-time maxima.

    Evaluation data may exceed the training maxima; outputs above 1 are
    intentionally not clipped so anomaly magnitude survives scaling.
    Negative inputs pass through the same formula unchanged.
    """
    if series.values.shape[1] != state.per_feature_max.shape[0]:
        raise ValueError(
            f"series has {series.values.shape[1]} features, normalizer has "
            f"{state.per_feature_max.shape[0]}")
    scaled = 2.0 * series.values / state.per_feature_max - 1.0
    return RawSeries(values=scaled, labels=series.labels,
                     feature_names=list(series.feature_names))


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def fit_pca(train: RawSeries, d: int) -> PcaState:
    """Top-d eigenvectors of the training covariance.

    If the data have fewer than d directions of nonzero variance the
    remaining components still form an orthonormal basis of the residual
    space (eigh returns one) with explained variance reported as 0, so
    downstream shapes stay fixed.
    """
    values = train.values
    T, N = values.shape
    if not 1 <= d <= N:
        raise ValueError(f"component count d={d} out of range [1, {N}]")
    if T < 2:
        raise ValueError("need at least 2 samples to fit a covariance")
    mean = values.mean(axis=0)
    centered = values - mean
    cov = centered.T @ centered / (T - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order][:d]
    components = eigvecs[:, order][:, :d].T
    eigvals = np.where(eigvals > 1e-12 * max(eigvals.max(), 1.0), eigvals, 0.0)
    return PcaState(mean=mean, components=np.ascontiguousarray(components),
                    explained_variance=eigvals)


def apply_pca(state: PcaState, series: RawSeries) -> np.ndarray:
    """(x - mean) @ components.T -> (T, d)."""
    if series.values.shape[1] != state.mean.shape[0]:
        raise ValueError(
            f"series has {series.values.shape[1]} features, PCA expects "
            f"{state.mean.shape[0]}")
    return (series.values - state.mean) @ state.components.T


def pca_reconstruct(state: PcaState, reduced: np.ndarray) -> np.ndarray:
    """Back-projection into the original feature space."""
    return reduced @ state.components + state.mean


# ---------------------------------------------------------------------------
# windowing
# ---------------------------------------------------------------------------

def make_windows(series: np.ndarray, labels: Optional[np.ndarray],
                 k: int, shift: int) -> WindowSet:
    """Cut a (T, d) matrix into floor((T - k) / shift) + 1 windows.

    A window is labeled anomalous iff any covered timestep is labeled 1.
    """
    if k < 1 or shift < 1:
        raise ValueError("window length and shift must be >= 1")
    series = np.asarray(series)
    if series.ndim != 2:
        raise ValueError(f"series must be 2-D, got shape {series.shape}")
    T = series.shape[0]
    if T < k:
        raise EmptyWindowSet(f"series length {T} is shorter than window {k}")
    W = (T - k) // shift + 1
    starts = np.arange(W, dtype=np.int64) * shift
    windows = np.stack([series[s:s + k] for s in starts])
    window_labels = None
    if labels is not None:
        labels = np.asarray(labels)
        window_labels = np.fromiter(
            (labels[s:s + k].any() for s in starts), dtype=np.uint8, count=W)
    return WindowSet(windows=windows, window_labels=window_labels,
                     start_indices=starts)


def jitter_scale(batch: np.ndarray, sigma_jitter: float, sigma_scale: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Jitter-and-scale augmentation: x_aug = s * x + eps.

    s is one multiplicative factor per (window, feature) drawn from
    Normal(1, sigma_scale); eps is elementwise Normal(0, sigma_jitter).
    With both sigmas zero the input is returned bit-identically.
    """
    if sigma_jitter < 0 or sigma_scale < 0:
        raise ValueError("sigma_jitter and sigma_scale must be >= 0")
    batch = np.asarray(batch)
    if sigma_jitter == 0.0 and sigma_scale == 0.0:
        return batch.copy()
    B, k, d = batch.shape
    s = rng.normal(1.0, sigma_scale, size=(B, 1, d)) if sigma_scale > 0 else 1.0
    eps = rng.normal(0.0, sigma_jitter, size=(B, k, d)) if sigma_jitter > 0 else 0.0
    return (s * batch + eps).astype(batch.dtype)
