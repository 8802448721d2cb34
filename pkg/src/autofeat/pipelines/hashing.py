"""Semantic hashing of bag-of-words documents."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import models as ae
from ..dataio import Dataset, write_points_csv, write_svg_lines
from ..tensor import Rng
from .metrics import HashCurve, hash_codes, hash_curve, spearman

STREAM_PAIRS = 12


@dataclass
class HashConfig:
    vocab: int = 1000
    bits: int = 10
    hidden: int = 256
    noise_sd: float = 16.0
    threshold: float = 0.5
    epochs: int = 50
    batch: int = 32
    lr: float = 0.001
    holdout: float = 0.2
    pair_cap: int = 1_000_000
    seed: int = 0

    def __post_init__(self) -> None:
        self.training()
        if self.vocab < 1 or self.bits < 1:
            raise ValueError("vocabulary and code width must be positive")
        if not 0.0 < self.holdout < 1.0:
            raise ValueError("holdout fraction must lie in (0, 1)")
        if self.pair_cap < 1:
            raise ValueError("pair cap must be positive")

    def training(self) -> ae.TrainConfig:
        return ae.TrainConfig(epochs=self.epochs, batch_size=self.batch, lr=self.lr, seed=self.seed)


@dataclass
class HashResult:
    curve: HashCurve
    hashes: np.ndarray
    history: list[float]
    summary: dict = field(default_factory=dict)


def hashing_network(vocab: int, cfg: HashConfig) -> ae.NetworkSpec:
    return (
        ae.input(vocab)
        + ae.dense(cfg.hidden)
        + ae.noise(cfg.noise_sd)
        + ae.dense(cfg.bits, "sigmoid")
        + ae.dense(cfg.hidden)
        + ae.output("sigmoid")
    )


def prepare_corpus(corpus: Dataset, vocab: int) -> np.ndarray:
    """Binarize counts to presence and keep the ``vocab`` most frequent words
    (document frequency, ties by column order)."""
    x = np.asarray(corpus.features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError("corpus has an empty vocabulary")
    presence = (x > 0).astype(np.float64)
    if presence.shape[1] > vocab:
        freq = presence.sum(axis=0)
        keep = np.sort(np.argsort(-freq, kind="stable")[:vocab])
        presence = presence[:, keep]
    return presence


def run_hashing_pipeline(corpus: Dataset, cfg: HashConfig, out: str | Path | None = None) -> HashResult:
    x = prepare_corpus(corpus, cfg.vocab)
    n_test = max(2, int(round(len(x) * cfg.holdout)))
    if len(x) - n_test < 1:
        raise ValueError("corpus too small for a train/test split")
    train, test = x[:-n_test], x[-n_test:]

    model = ae.autoencoder(hashing_network(x.shape[1], cfg), loss="bce", seed=cfg.seed)
    history = ae.train(model, train, cfg.training())
    hashes = hash_codes(model, test, cfg.threshold)
    curve = hash_curve(hashes, test, cfg.pair_cap, Rng(cfg.seed, STREAM_PAIRS))

    filled = curve.pair_counts > 0
    summary = {
        "test_documents": len(test),
        "pairs": int(curve.pair_counts.sum()),
        "distinct_hashes": len({h.tobytes() for h in hashes}),
        "final_loss": history[-1] if history else float("nan"),
    }
    if filled.sum() >= 2:
        summary["spearman"] = spearman(curve.buckets[filled], curve.mean_cosine[filled])

    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [
            (int(b), int(c), float(m) if c else None)
            for b, c, m in zip(curve.buckets, curve.pair_counts, curve.mean_cosine)
        ]
        write_points_csv(rows, ["hamming", "pairs", "mean_cosine"], out / "curve.csv")
        write_svg_lines(
            {"mean cosine distance": curve.mean_cosine[filled]},
            None,
            out / "curve.svg",
            title="Cosine distance by Hamming distance of hashes",
            xlabel="Hamming distance",
            ylabel="mean cosine distance",
            x=curve.buckets[filled].astype(np.float64),
        )
    return HashResult(curve, hashes, history, summary)
