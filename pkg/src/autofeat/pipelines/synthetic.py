"""Seeded synthetic data: Lorenz series, shape images, topic corpora, Gaussian clusters."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..dataio import Dataset, minmax_normalize
from ..tensor import Rng

LORENZ_SIGMA = 10.0
LORENZ_RHO = 28.0
LORENZ_BETA = 8.0 / 3.0
DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    pass


@dataclass
class TimeSeries:
    values: np.ndarray  # [T, 3]
    dt: float
    region: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.region is not None:
            start, end = self.region
            if not 0 <= start < end <= len(self.values):
                raise ValueError(f"anomaly region {self.region} outside series of length {len(self.values)}")

    def __len__(self) -> int:
        return len(self.values)


def lorenz_rhs(state: np.ndarray, sigma: float, rho: float, beta: float) -> np.ndarray:
    x, y, z = state
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def rk4_step(state: np.ndarray, dt: float, sigma: float, rho: float, beta: float) -> np.ndarray:
    k1 = lorenz_rhs(state, sigma, rho, beta)
    k2 = lorenz_rhs(state + 0.5 * dt * k1, sigma, rho, beta)
    k3 = lorenz_rhs(state + 0.5 * dt * k2, sigma, rho, beta)
    k4 = lorenz_rhs(state + dt * k3, sigma, rho, beta)
    return state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lorenz_generate(
    n: int,
    dt: float = 0.01,
    init=(1.0, 1.0, 1.0),
    sigma: float = LORENZ_SIGMA,
    rho: float = LORENZ_RHO,
    beta: float = LORENZ_BETA,
    discard: int = 1000,
) -> TimeSeries:
    """Classic RK4 integration of the Lorenz system.

    Row ``k`` of the result is the state after ``discard + k`` steps from
    ``init``; with ``discard=0`` the first row is ``init`` itself.
    """
    if n < 1:
        raise ValueError("need at least one step")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if discard < 0:
        raise ValueError("discard must be non-negative")
    state = np.array(init, dtype=np.float64)
    if state.shape != (3,):
        raise ValueError("initial state must have three components")
    out = np.empty((n, 3))
    for step in range(discard + n):
        if step >= discard:
            out[step - discard] = state
        state = rk4_step(state, dt, sigma, rho, beta)
        if not np.all(np.abs(state) <= DIVERGENCE_LIMIT):
            raise DivergenceError(f"Lorenz integration diverged at step {step + 1} (|state| > {DIVERGENCE_LIMIT:g})")
    return TimeSeries(out, dt)


def inject_anomaly(series: TimeSeries, start: int, end: int, rng: Rng) -> TimeSeries:
    """Replace rows ``[start, end)`` with uniform draws inside each column's observed range."""
    if not 0 <= start <= end <= len(series):
        raise ValueError(f"invalid anomaly interval [{start}, {end}) for series of length {len(series)}")
    if start == end:
        return replace(series, values=series.values.copy())
    values = series.values.copy()
    lo, hi = values.min(axis=0), values.max(axis=0)
    values[start:end] = lo + (hi - lo) * rng.uniform((end - start, values.shape[1]))
    return TimeSeries(values, series.dt, (start, end))


SHAPE_KINDS = ("rectangle", "circle", "cross")


def make_shapes(n: int, size: int, rng: Rng, channels: int = 1) -> Dataset:
    """Images ``[n, channels, size, size]`` each holding one filled shape of value 1
    on a 0 background; labels index ``SHAPE_KINDS``."""
    if n <= 0 or size < 4:
        raise ValueError("need n > 0 and size >= 4")
    images = np.zeros((n, channels, size, size))
    labels = np.empty(n, dtype=np.int64)
    rows, cols = np.mgrid[0:size, 0:size]
    for i in range(n):
        u = rng.uniform(6)
        kind = min(int(u[0] * 3), 2)
        labels[i] = kind
        if kind == 0:
            h = 3 + int(u[1] * (size // 2 - 2))
            w = 3 + int(u[2] * (size // 2 - 2))
            top = int(u[3] * (size - h + 1))
            left = int(u[4] * (size - w + 1))
            mask = (rows >= top) & (rows < top + h) & (cols >= left) & (cols < left + w)
        elif kind == 1:
            r = 2.0 + u[1] * (size / 4 - 2)
            cy = r + u[2] * (size - 1 - 2 * r)
            cx = r + u[3] * (size - 1 - 2 * r)
            mask = (rows - cy) ** 2 + (cols - cx) ** 2 <= r * r
        else:
            arm = 2 + int(u[1] * (size // 4 - 1))
            cy = arm + int(u[2] * (size - 2 * arm))
            cx = arm + int(u[3] * (size - 2 * arm))
            thick = 1 + int(u[4] * 2)
            half = thick // 2
            vert = (np.abs(cols - cx) <= half) & (np.abs(rows - cy) <= arm)
            horiz = (np.abs(rows - cy) <= half) & (np.abs(cols - cx) <= arm)
            mask = vert | horiz
        images[i, :, mask] = 1.0
    return Dataset(images, labels)


def make_topics(
    n: int,
    vocab: int,
    k_topics: int,
    rng: Rng,
    words_per_topic: int | None = None,
    doc_length: float = 100.0,
    concentration: float = 0.1,
    background: float = 0.01,
) -> Dataset:
    """Binary bag-of-words documents drawn from a mixture of topics.

    Topic ``t`` owns a block of ``words_per_topic`` high-probability words.
    Each document mixes topics with Dirichlet(``concentration``) weights and
    includes word ``w`` with probability
    ``1 - exp(-doc_length * sum_t weight_t * P(w | t))`` plus a small
    background rate.  The label is the dominant topic.
    """
    if n <= 0 or vocab <= 0 or k_topics <= 0:
        raise ValueError("sizes must be positive")
    per = words_per_topic or max(1, vocab // k_topics)
    if per * k_topics > vocab:
        raise ValueError("topic word blocks do not fit in the vocabulary")
    topic_word = np.zeros((k_topics, vocab))
    for t in range(k_topics):
        topic_word[t, t * per : (t + 1) * per] = 1.0 / per
    # Dirichlet weights via normalized Gamma(a) draws; Gamma(a) for a < 1 as
    # Gamma(a + 1) * U^(1/a), Gamma(a + 1) by Marsaglia-Tsang.
    weights = np.empty((n, k_topics))
    for i in range(n):
        weights[i] = _gamma_draws(concentration, k_topics, rng)
    weights /= weights.sum(axis=1, keepdims=True)
    rate = doc_length * weights @ topic_word
    prob = 1.0 - (1.0 - background) * np.exp(-rate)
    presence = (rng.uniform((n, vocab)) < prob).astype(np.float64)
    labels = weights.argmax(axis=1)
    names = [f"w{j}" for j in range(vocab)]
    return Dataset(presence, labels, names)


def _gamma_draws(shape: float, size: int, rng: Rng) -> np.ndarray:
    boost = shape < 1.0
    a = shape + 1.0 if boost else shape
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    for i in range(size):
        while True:
            z = rng.normal(())
            v = (1.0 + c * z) ** 3
            if v <= 0:
                continue
            u = float(rng.uniform(()))
            if np.log(u) < 0.5 * z * z + d - d * v + d * np.log(v):
                out[i] = d * v
                break
    if boost:
        out *= rng.uniform(size) ** (1.0 / shape)
    return np.maximum(out, 1e-300)


def make_clusters(n: int, dim: int, k: int, rng: Rng, spread: float = 4.0) -> Dataset:
    """``k`` isotropic unit-variance Gaussian clusters, min-max normalized.

    Centres are drawn N(0, spread^2) per coordinate; instances are assigned
    round-robin so cluster sizes differ by at most one.
    """
    if n <= 0 or dim <= 0 or k <= 0:
        raise ValueError("sizes must be positive")
    centres = rng.normal((k, dim), 0.0, spread)
    labels = np.arange(n) % k
    points = centres[labels] + rng.normal((n, dim))
    return minmax_normalize(Dataset(points, labels, [f"x{j}" for j in range(dim)]))
