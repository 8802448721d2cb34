"""Reconstruction-error anomaly detection on a Lorenz time series."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import models as ae
from ..dataio import Dataset, Scaler, load_csv, write_points_csv, write_svg_lines
from ..tensor import Rng
from .metrics import AnomalyReport, detect_anomalies, reconstruction_errors
from .synthetic import TimeSeries, inject_anomaly, lorenz_generate

STREAM_INJECT = 10


@dataclass
class AnomalyConfig:
    train_steps: int = 5000
    test_steps: int = 1000
    inject: tuple[int, int] | None = (400, 500)
    window: int = 1
    epochs: int = 50
    batch: int = 32
    sd: float = 0.05
    code: int = 16
    lr: float = 0.001
    dt: float = 0.01
    seed: int = 0
    series: str | None = None

    def __post_init__(self) -> None:
        self.training()
        if self.train_steps < 2 or self.test_steps < 2:
            raise ValueError("train and test splits need at least two steps")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.inject is not None:
            start, end = self.inject
            if not 0 <= start <= end <= self.test_steps:
                raise ValueError(f"anomaly interval {self.inject} outside the test split")

    def training(self) -> ae.TrainConfig:
        return ae.TrainConfig(epochs=self.epochs, batch_size=self.batch, lr=self.lr, seed=self.seed)


@dataclass
class AnomalyResult:
    report: AnomalyReport
    history: list[float]
    in_region: np.ndarray
    summary: dict = field(default_factory=dict)


def windows(values: np.ndarray, w: int) -> np.ndarray:
    """Instances made of ``w`` consecutive rows, concatenated."""
    n = len(values) - w + 1
    if n < 1:
        raise ValueError(f"series of length {len(values)} is shorter than window {w}")
    return np.concatenate([values[k : k + n] for k in range(w)], axis=1)


def _series(cfg: AnomalyConfig) -> np.ndarray:
    total = cfg.train_steps + cfg.test_steps
    if cfg.series is None:
        return lorenz_generate(total, cfg.dt).values
    values = load_csv(cfg.series).features
    if len(values) < total:
        raise ValueError(f"{cfg.series}: {len(values)} rows, need {total} for the train/test split")
    return values[:total]


def run_anomaly_pipeline(cfg: AnomalyConfig, out: str | Path | None = None) -> AnomalyResult:
    values = _series(cfg)
    train_vals = values[: cfg.train_steps]
    test = TimeSeries(values[cfg.train_steps : cfg.train_steps + cfg.test_steps], cfg.dt)
    if cfg.inject is not None:
        test = inject_anomaly(test, cfg.inject[0], cfg.inject[1], Rng(cfg.seed, STREAM_INJECT))

    scaler = Scaler(train_vals.min(axis=0), train_vals.max(axis=0))
    x_train = windows(scaler.transform(train_vals), cfg.window)
    x_test = windows(scaler.transform(test.values), cfg.window)

    d = x_train.shape[1]
    spec = ae.input(d) + ae.dense(cfg.code, "sigmoid") + ae.output("linear")
    model = ae.autoencoder_denoising(spec, sd=cfg.sd, seed=cfg.seed)
    history = ae.train(model, Dataset(x_train), cfg.training())

    errors = reconstruction_errors(model, x_test)
    report = detect_anomalies(errors, test.region)
    idx = np.arange(len(errors))
    if test.region is not None:
        start, end = test.region
        in_region = (idx < end) & (idx + cfg.window - 1 >= start)
    else:
        in_region = np.zeros(len(errors), dtype=bool)

    summary = {
        "instances": len(errors),
        "threshold": report.threshold,
        "flagged": int(report.flags.sum()),
        "mean_error": float(errors.mean()),
        "final_loss": history[-1] if history else float("nan"),
    }
    if in_region.any():
        summary["rate_in"] = float(report.flags[in_region].mean())
        summary["rate_out"] = float(report.flags[~in_region].mean()) if (~in_region).any() else 0.0
        summary["region_mean_error"] = float(errors[in_region].mean())

    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(int(i), float(e), bool(f), bool(r)) for i, e, f, r in zip(idx, errors, report.flags, in_region)]
        write_points_csv(rows, ["index", "error", "flagged", "in_region"], out / "errors.csv")
        markers = {
            "hlines": [report.threshold],
            "vlines": list(test.region) if test.region else [],
            "points": [(float(i), float(errors[i])) for i in np.flatnonzero(report.flags)],
        }
        write_svg_lines(
            {"reconstruction error": errors},
            markers,
            out / "errors.svg",
            title="Reconstruction error on the test split",
            xlabel="test instance",
            ylabel="mean squared error",
        )
    return AnomalyResult(report, history, in_region, summary)
