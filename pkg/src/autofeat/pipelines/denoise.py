"""Convolutional denoising autoencoder on small images."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import models as ae
from ..dataio import write_points_csv, write_svg_grid
from ..tensor import Rng

STREAM_TEST_NOISE = 11


@dataclass
class DenoiseConfig:
    sd: float = 0.05
    epochs: int = 30
    batch: int = 500
    lr: float = 0.001
    filters: int = 16
    holdout: float = 0.2
    show: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        self.training()
        if self.sd < 0:
            raise ValueError("noise sd must be non-negative")
        if not 0.0 < self.holdout < 1.0:
            raise ValueError("holdout fraction must lie in (0, 1)")

    def training(self) -> ae.TrainConfig:
        return ae.TrainConfig(epochs=self.epochs, batch_size=self.batch, lr=self.lr, seed=self.seed)


@dataclass
class DenoiseReport:
    clean: np.ndarray
    noisy: np.ndarray
    reconstructed: np.ndarray
    mse_noisy: np.ndarray
    mse_recon: np.ndarray
    history: list[float]
    summary: dict = field(default_factory=dict)


def denoising_network(shape: tuple[int, int, int], filters: int = 16) -> ae.NetworkSpec:
    channels = shape[0]
    return (
        ae.input(*shape)
        + ae.conv(filters, 3, "relu", upsampling=2)
        + ae.conv(filters, 3, "relu", max_pooling=2)
        + ae.conv(channels, 3, "sigmoid")
    )


def _per_image_mse(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a - b) ** 2).reshape(len(a), -1).mean(axis=1)


def run_denoising_pipeline(images: np.ndarray, cfg: DenoiseConfig, out: str | Path | None = None) -> DenoiseReport:
    """Train on the first ``1 - holdout`` share of ``images`` ([N, C, H, W] in [0, 1]);
    corrupt, denoise and score the rest."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ValueError(f"expected images shaped [N, C, H, W], got {images.shape}")
    if images.size and (images.min() < 0.0 or images.max() > 1.0):
        raise ValueError("images must be normalized to [0, 1]")
    n_test = max(1, int(round(len(images) * cfg.holdout)))
    if len(images) - n_test < 1:
        raise ValueError("need at least two images for a train/test split")
    train, test = images[:-n_test], images[-n_test:]

    model = ae.autoencoder_denoising(denoising_network(images.shape[1:], cfg.filters), sd=cfg.sd, loss="bce", seed=cfg.seed)
    history = ae.train(model, train, cfg.training())

    noisy = ae.corrupt_gaussian(test, cfg.sd, Rng(cfg.seed, STREAM_TEST_NOISE))
    recon = ae.reconstruct(model, noisy)
    mse_noisy = _per_image_mse(noisy, test)
    mse_recon = _per_image_mse(recon, test)
    summary = {
        "train_images": len(train),
        "test_images": len(test),
        "mse_noisy": float(mse_noisy.mean()),
        "mse_recon": float(mse_recon.mean()),
        "improved_fraction": float(np.mean(mse_recon < mse_noisy)),
        "final_loss": history[-1] if history else float("nan"),
    }

    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(i, float(a), float(b)) for i, (a, b) in enumerate(zip(mse_noisy, mse_recon))]
        write_points_csv(rows, ["image", "mse_noisy", "mse_recon"], out / "denoise-report.csv")
        k = min(cfg.show, len(test))
        tiles = list(test[:k]) + list(np.clip(noisy[:k], 0.0, 1.0)) + list(recon[:k])
        write_svg_grid(tiles, 3, out / "denoise-report.svg")
    return DenoiseReport(test, noisy, recon, mse_noisy, mse_recon, history, summary)
