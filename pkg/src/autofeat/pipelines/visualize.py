"""Two- or three-dimensional codes of tabular data for plotting."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import models as ae
from ..dataio import Dataset, minmax_normalize, write_points_csv, write_svg_scatter
from .metrics import silhouette


@dataclass
class VisualizeConfig:
    dims: int = 3
    hidden: int = 12
    epochs: int = 100
    batch: int = 32
    lr: float = 0.001
    rho: float = 0.1
    beta: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        self.training()
        if self.dims not in (2, 3):
            raise ValueError(f"code dimension must be 2 or 3, got {self.dims}")

    def training(self) -> ae.TrainConfig:
        return ae.TrainConfig(epochs=self.epochs, batch_size=self.batch, lr=self.lr, seed=self.seed)


@dataclass
class EmbeddingResult:
    codes: np.ndarray
    labels: np.ndarray | None
    history: list[float]
    summary: dict = field(default_factory=dict)


_AXES = "xyz"


def run_visualization_pipeline(data: Dataset, cfg: VisualizeConfig, out: str | Path | None = None) -> EmbeddingResult:
    if data.features.ndim != 2:
        raise ValueError("visualization expects tabular [N, d] data")
    norm = minmax_normalize(data)
    d = norm.features.shape[1]
    spec = (
        ae.input(d)
        + ae.dense(cfg.hidden, "relu")
        + ae.dense(cfg.dims, "sigmoid")
        + ae.dense(cfg.hidden, "relu")
        + ae.output("linear")
    )
    model = ae.autoencoder_sparse(spec, rho=cfg.rho, beta=cfg.beta, seed=cfg.seed)
    history = ae.train(model, norm, cfg.training())
    codes = ae.encode(model, norm)

    summary = {"instances": len(codes), "dims": cfg.dims, "final_loss": history[-1] if history else float("nan")}
    labels = data.labels
    if labels is not None and len(np.unique(labels)) > 1:
        summary["silhouette"] = silhouette(codes, labels)

    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        header = [f"c{j + 1}" for j in range(cfg.dims)] + ["label"]
        rows = [list(map(float, c)) + [None if labels is None else int(labels[i])] for i, c in enumerate(codes)]
        write_points_csv(rows, header, out / "codes.csv")
        pairs = [(0, 1)] if cfg.dims == 2 else [(0, 1), (0, 2), (1, 2)]
        for a, b in pairs:
            name = "codes.svg" if (a, b) == (0, 1) else f"codes-{_AXES[a]}{_AXES[b]}.svg"
            write_svg_scatter(
                codes[:, [a, b]],
                labels,
                out / name,
                title=f"Autoencoder codes ({_AXES[a]}, {_AXES[b]})",
                xlabel=f"code {a + 1}",
                ylabel=f"code {b + 1}",
            )
    return EmbeddingResult(codes, labels, history, summary)
