"""Scoring helpers shared by the pipelines."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from ..models import AutoencoderModel, encode, reconstruct
from ..tensor import Rng, ShapeError

log = logging.getLogger(__name__)


def reconstruction_errors(model: AutoencoderModel, data) -> np.ndarray:
    """Per-instance mean squared reconstruction error."""
    x = np.asarray(getattr(data, "features", data), dtype=np.float64)
    recon = reconstruct(model, x)
    return ((recon - x) ** 2).reshape(len(x), -1).mean(axis=1)


@dataclass
class AnomalyReport:
    errors: np.ndarray
    threshold: float
    flags: np.ndarray
    region: tuple[int, int] | None = None


def detect_anomalies(errors, region: tuple[int, int] | None = None) -> AnomalyReport:
    """Flag errors strictly above mean + sample standard deviation."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size < 2:
        raise ValueError("anomaly detection needs at least two instances")
    threshold = float(errors.mean() + errors.std(ddof=1))
    return AnomalyReport(errors, threshold, errors > threshold, region)


def hash_codes(model: AutoencoderModel, data, threshold: float = 0.5) -> np.ndarray:
    """Binary codes: bit j is 1 iff code unit j exceeds ``threshold``."""
    codes = encode(model, data)
    return (codes.reshape(len(codes), -1) > threshold).astype(np.uint8)


def hamming(a, b) -> int:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"bit vectors differ in length: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def cosine_distance(a, b) -> float:
    """``1 - cos(a, b)``; defined as 1 when either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        log.warning("cosine distance with a zero vector; using 1.0")
        return 1.0
    return float(1.0 - np.dot(a, b) / (na * nb))


@dataclass
class HashCurve:
    mean_cosine: np.ndarray  # NaN where a bucket is empty
    pair_counts: np.ndarray

    @property
    def buckets(self) -> np.ndarray:
        return np.arange(len(self.pair_counts))


def pair_sample(n: int, cap: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """All unordered pairs when they fit in ``cap``, otherwise ``cap`` pairs
    drawn uniformly with replacement."""
    total = n * (n - 1) // 2
    if total <= cap:
        i, j = np.triu_indices(n, k=1)
        return i, j
    i = rng.integers(n, cap)
    j = rng.integers(n - 1, cap)
    j = j + (j >= i)
    return np.minimum(i, j), np.maximum(i, j)


def hash_curve(bits: np.ndarray, vectors: np.ndarray, pair_cap: int = 1_000_000, rng: Rng | None = None) -> HashCurve:
    """Mean cosine distance of the original vectors, bucketed by Hamming distance of their hashes."""
    bits = np.asarray(bits)
    n, width = bits.shape
    i, j = pair_sample(n, pair_cap, rng or Rng(0))
    ham = np.count_nonzero(bits[i] != bits[j], axis=1)
    norms = np.linalg.norm(vectors, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    unit = vectors / safe[:, None]
    cos = 1.0 - np.einsum("ij,ij->i", unit[i], unit[j])
    zero = (norms[i] == 0) | (norms[j] == 0)
    if zero.any():
        log.warning("%d pairs involve zero vectors; cosine distance set to 1.0", int(zero.sum()))
        cos[zero] = 1.0
    counts = np.bincount(ham, minlength=width + 1)
    sums = np.bincount(ham, weights=cos, minlength=width + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return HashCurve(means, counts)


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    rx, ry = rankdata(x), rankdata(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    return float((rx * ry).sum() / denom) if denom else 0.0


def silhouette(points: np.ndarray, labels) -> float:
    """Mean silhouette coefficient under Euclidean distance."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("silhouette needs at least two clusters")
    dist = cdist(points, points)
    n = len(points)
    per_class = np.stack([dist[:, labels == c].sum(axis=1) for c in classes], axis=1)
    sizes = np.array([(labels == c).sum() for c in classes])
    own = np.searchsorted(classes, labels)
    own_size = sizes[own]
    a = per_class[np.arange(n), own] / np.maximum(own_size - 1, 1)
    others = per_class / sizes
    others[np.arange(n), own] = np.inf
    b = others.min(axis=1)
    s = np.where(own_size > 1, (b - a) / np.maximum(a, b), 0.0)
    return float(s.mean())
