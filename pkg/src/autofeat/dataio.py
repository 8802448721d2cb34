"""Dataset loading, min-max scaling and deterministic CSV/SVG artifact writers."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tensor import ShapeError


class DataFormatError(ValueError):
    """Input file does not follow the expected format."""


@dataclass
class Scaler:
    """Per-feature ``(min, max)``; ``degenerate`` marks constant features."""

    mins: np.ndarray
    maxs: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.maxs == self.mins

    def transform(self, x: np.ndarray) -> np.ndarray:
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.mins.size:
            raise ShapeError(f"scaler has {self.mins.size} features, data has {flat.shape[1]}")
        span = np.where(self.degenerate, 1.0, self.maxs - self.mins)
        out = (flat - self.mins) / span
        out[:, self.degenerate] = 0.0
        return out.reshape(x.shape)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        flat = x.reshape(x.shape[0], -1)
        return (flat * (self.maxs - self.mins) + self.mins).reshape(x.shape)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list[str] | None = None
    scaler: Scaler | None = None
    label_names: list[str] | None = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ShapeError(f"{self.labels.size} labels for {self.features.shape[0]} instances")
        if self.feature_names is not None and len(self.feature_names) != int(np.prod(self.features.shape[1:])):
            raise ShapeError("feature name count does not match feature count")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, index) -> "Dataset":
        labels = None if self.labels is None else self.labels[index]
        return replace(self, features=self.features[index], labels=labels)


def load_csv(path, has_header: bool = True, label_column: str | int | None = None) -> Dataset:
    """Read a numeric table; the optional label column is mapped to integer ids
    in order of first appearance."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DataFormatError(f"{path}: empty input")
    header = rows.pop(0) if has_header else None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(header) if header is not None else len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise DataFormatError(f"{path}: no label column named {label_column!r}")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
            if not -width <= label_idx < width:
                raise DataFormatError(f"{path}: label column index {label_idx} out of range")
            label_idx %= width

    keep = [j for j in range(width) if j != label_idx]
    values = np.empty((len(rows), len(keep)))
    for i, row in enumerate(rows):
        for k, j in enumerate(keep):
            try:
                values[i, k] = float(row[j])
            except ValueError:
                raise DataFormatError(f"{path}: row {i + 1}, column {j + 1}: {row[j]!r} is not numeric") from None

    labels = label_names = None
    if label_idx is not None:
        ids: dict[str, int] = {}
        labels = np.array([ids.setdefault(row[label_idx], len(ids)) for row in rows])
        label_names = list(ids)
    names = [header[j] for j in keep] if header is not None else None
    return Dataset(values, labels, names, label_names=label_names)


def minmax_normalize(data: Dataset) -> Dataset:
    """Rescale each feature to [0, 1]; constant features become 0."""
    flat = data.features.reshape(len(data), -1)
    scaler = Scaler(flat.min(axis=0), flat.max(axis=0))
    return replace(data, features=scaler.transform(data.features), scaler=scaler)


def apply_scaler(data: Dataset, scaler: Scaler) -> Dataset:
    """Scale with a fitted scaler; results outside [0, 1] are kept."""
    return replace(data, features=scaler.transform(data.features), scaler=scaler)


# -- netpbm images -------------------------------------------------------------


@dataclass
class ImageSet:
    images: np.ndarray  # [N, C, H, W] in [0, 1]
    ids: list[str] = field(default_factory=list)


_PNM_CHANNELS = {b"P5": 1, b"P6": 3}


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) with maxval 255 as ``[C, H, W]`` in [0, 1]."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in _PNM_CHANNELS:
        raise DataFormatError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        m = re.match(rb"\d+", data[pos:])
        if m is None:
            raise DataFormatError(f"{path}: malformed header")
        fields.append(int(m.group()))
        pos += m.end()
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise DataFormatError(f"{path}: malformed header")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise DataFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    channels = _PNM_CHANNELS[magic]
    count = width * height * channels
    raster = data[pos : pos + count]
    if len(raster) != count or width <= 0 or height <= 0:
        raise DataFormatError(f"{path}: expected {count} pixel bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def load_images(source) -> ImageSet:
    """Load every ``.pgm``/``.ppm`` in a directory (sorted by name) or an explicit list."""
    if isinstance(source, (str, Path)) and Path(source).is_dir():
        paths = sorted(p for p in Path(source).iterdir() if p.suffix.lower() in (".pgm", ".ppm"))
    else:
        paths = [Path(p) for p in source]
    if not paths:
        raise DataFormatError(f"no PGM/PPM images found in {source}")
    images = [read_pnm(p) for p in paths]
    first = images[0].shape
    for p, img in zip(paths, images):
        if img.shape != first:
            raise ShapeError(f"{p}: image shape {img.shape} differs from {first}")
    return ImageSet(np.stack(images), [p.name for p in paths])


def to_bytes(image: np.ndarray) -> np.ndarray:
    """[0, 1] reals to 8-bit, rounding half up and clamping."""
    return np.clip(np.floor(image * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_image(image: np.ndarray, path) -> None:
    """Write ``[C, H, W]`` (C = 1 -> P5, C = 3 -> P6)."""
    if image.ndim == 2:
        image = image[None]
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise ShapeError(f"expected [1|3, H, W], got {image.shape}")
    c, h, w = image.shape
    magic = "P5" if c == 1 else "P6"
    raster = to_bytes(image).transpose(1, 2, 0).tobytes()
    Path(path).write_bytes(f"{magic}\n{w} {h}\n255\n".encode("ascii") + raster)


# -- CSV and SVG writers ---------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v} in CSV output")
        return repr(float(v))
    return str(v)


def write_points_csv(rows: Iterable[Sequence], header: Sequence[str], path) -> None:
    """Comma-separated, header first, ``\\n`` line endings, shortest round-trip floats."""
    lines = [",".join(header)]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ShapeError(f"row {i} has {len(row)} values, header has {len(header)}")
        lines.append(",".join(_cell(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


WIDTH, HEIGHT = 800, 600
MARGIN = 60
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _f(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _check_finite(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {what}")
    return arr


def _range(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return 0.0, 1.0
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


class _Frame:
    """Maps data coordinates to the fixed 800x600 viewport."""

    def __init__(self, xr: tuple[float, float], yr: tuple[float, float]) -> None:
        self.xr, self.yr = xr, yr

    def x(self, v: float) -> float:
        lo, hi = self.xr
        return MARGIN + (v - lo) / (hi - lo) * (WIDTH - 2 * MARGIN)

    def y(self, v: float) -> float:
        lo, hi = self.yr
        return HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2 * MARGIN)

    def axes(self, title: str, xlabel: str, ylabel: str) -> list[str]:
        x0, x1 = MARGIN, WIDTH - MARGIN
        y0, y1 = HEIGHT - MARGIN, MARGIN
        out = [
            f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
            f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
            f'<text x="{x0}" y="{y0 + 20}" font-size="12">{_num(self.xr[0])}</text>',
            f'<text x="{x1}" y="{y0 + 20}" font-size="12" text-anchor="end">{_num(self.xr[1])}</text>',
            f'<text x="{x0 - 8}" y="{y0}" font-size="12" text-anchor="end">{_num(self.yr[0])}</text>',
            f'<text x="{x0 - 8}" y="{y1 + 4}" font-size="12" text-anchor="end">{_num(self.yr[1])}</text>',
            f'<text x="{WIDTH // 2}" y="{HEIGHT - 15}" font-size="14" text-anchor="middle">{_esc(xlabel)}</text>',
            f'<text x="15" y="{HEIGHT // 2}" font-size="14" text-anchor="middle" transform="rotate(-90 15 {HEIGHT // 2})">{_esc(ylabel)}</text>',
        ]
        if title:
            out.append(f'<text x="{WIDTH // 2}" y="30" font-size="16" text-anchor="middle">{_esc(title)}</text>')
        return out


def _num(v: float) -> str:
    return f"{v:.4g}"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _svg(body: list[str], width: int = WIDTH, height: int = HEIGHT) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_svg_scatter(
    points,
    labels: Sequence[int] | None,
    path,
    title: str = "",
    xlabel: str = "x",
    ylabel: str = "y",
) -> None:
    """Radius-3 circles coloured by label id (palette cycles every 8 labels)."""
    pts = _check_finite(points, "scatter points").reshape(-1, 2)
    frame = _Frame(_range(pts[:, 0]), _range(pts[:, 1]))
    body = frame.axes(title, xlabel, ylabel)
    for i, (px, py) in enumerate(pts):
        color = PALETTE[int(labels[i]) % len(PALETTE)] if labels is not None else PALETTE[0]
        body.append(f'<circle cx="{_f(frame.x(px))}" cy="{_f(frame.y(py))}" r="3" fill="{color}"/>')
    _write(path, _svg(body))


def write_svg_lines(
    series: Mapping[str, Sequence[float]],
    markers: Mapping | None,
    path,
    title: str = "",
    xlabel: str = "index",
    ylabel: str = "value",
    x: Sequence[float] | None = None,
) -> None:
    """Polylines over a shared x axis (default: 0..n-1).

    ``markers`` may hold ``hlines`` (y values, drawn solid red), ``vlines``
    (x values, dashed) and ``points`` (list of ``(x, y)`` drawn as black dots).
    """
    markers = markers or {}
    arrays = {name: _check_finite(vals, f"series {name}") for name, vals in series.items()}
    n = max((a.size for a in arrays.values()), default=0)
    xs = np.arange(n, dtype=np.float64) if x is None else _check_finite(x, "x values")
    hlines = _check_finite(markers.get("hlines", []), "hlines")
    vlines = _check_finite(markers.get("vlines", []), "vlines")
    points = _check_finite(markers.get("points", []), "points").reshape(-1, 2)
    all_y = np.concatenate([*arrays.values(), hlines, points[:, 1]]) if arrays or hlines.size or points.size else np.zeros(0)
    all_x = np.concatenate([xs, vlines, points[:, 0]])
    frame = _Frame(_range(all_x), _range(all_y))
    body = frame.axes(title, xlabel, ylabel)
    for k, (name, ys) in enumerate(arrays.items()):
        coords = " ".join(f"{_f(frame.x(xv))},{_f(frame.y(yv))}" for xv, yv in zip(xs, ys))
        color = PALETTE[k % len(PALETTE)]
        body.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1"/>')
        body.append(f'<text x="{WIDTH - MARGIN}" y="{MARGIN - 10 - 14 * k}" font-size="12" text-anchor="end" stroke="{color}">{_esc(name)}</text>')
    for hv in hlines:
        yy = _f(frame.y(hv))
        body.append(f'<line x1="{MARGIN}" y1="{yy}" x2="{WIDTH - MARGIN}" y2="{yy}" stroke="#d62728"/>')
    for vv in vlines:
        xx = _f(frame.x(vv))
        body.append(f'<line x1="{xx}" y1="{MARGIN}" x2="{xx}" y2="{HEIGHT - MARGIN}" stroke="black" stroke-dasharray="6,4"/>')
    for px, py in points:
        body.append(f'<circle cx="{_f(frame.x(px))}" cy="{_f(frame.y(py))}" r="2" fill="black"/>')
    _write(path, _svg(body))


def write_svg_grid(images: Sequence[np.ndarray], rows: int, path, cell: int | None = None) -> None:
    """Tile ``[C, H, W]`` images row-major into ``rows`` rows, one rect per pixel.

    Each tile is wrapped in ``<g class="tile">``.
    """
    imgs = [np.asarray(im, dtype=np.float64) for im in images]
    for im in imgs:
        _check_finite(im, "image")
    if rows <= 0:
        raise ValueError("rows must be positive")
    cols = -(-len(imgs) // rows) if imgs else 0
    if imgs:
        c, h, w = imgs[0].shape
    else:
        c, h, w = 1, 1, 1
    gap = 4
    if cell is None:
        cell = max(1, min((WIDTH - gap) // max(cols, 1) // w, (HEIGHT - gap) // rows // h) - 1)
    body = ['<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>']
    for k, im in enumerate(imgs):
        if im.shape != (c, h, w):
            raise ShapeError(f"image {k} has shape {im.shape}, expected {(c, h, w)}")
        r, q = divmod(k, cols)
        ox, oy = gap + q * (w * cell + gap), gap + r * (h * cell + gap)
        vals = to_bytes(im)
        body.append(f'<g class="tile" transform="translate({ox},{oy})">')
        for i in range(h):
            for j in range(w):
                if c == 1:
                    color = "#{0:02x}{0:02x}{0:02x}".format(int(vals[0, i, j]))
                else:
                    color = "#{:02x}{:02x}{:02x}".format(*(int(vals[ch, i, j]) for ch in range(3)))
                body.append(f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" height="{cell}" fill="{color}"/>')
        body.append("</g>")
    _write(path, _svg(body))
