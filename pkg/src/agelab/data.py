"""Toy datasets, CSV / PPM I/O, and mode-coverage evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ValueError(f"dataset needs N >= 1 rows of shape N x D, got {self.samples.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[0],):
                raise ValueError("labels must have one entry per sample")
            n_modes = self.meta.get("n_modes")
            if n_modes is not None and (self.labels.min() < 0 or self.labels.max() >= n_modes):
                raise ValueError(f"labels must lie in [0, {n_modes})")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            return 0
        return int(self.meta.get("n_modes", self.labels.max() + 1))


def ring_centers(n_modes: int, radius: float) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(n_modes) / n_modes
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def make_gaussian_ring(n_modes: int = 8, radius: float = 2.0, std: float = 0.02,
                       n: int = 8000, seed=None) -> Dataset:
    if n_modes < 1 or std <= 0:
        raise ValueError("need n_modes >= 1 and std > 0")
    rng = np.random.default_rng(seed)
    centers = ring_centers(n_modes, radius)
    labels = np.arange(n) % n_modes
    samples = centers[labels] + std * rng.standard_normal((n, 2))
    return Dataset(samples, labels, {"name": "ring", "n_modes": n_modes, "radius": radius,
                                     "mode_centers": centers.tolist(), "mode_std": std})


def make_checkerboard(n: int = 8000, seed=None) -> Dataset:
    """Uniform over the black squares of a 4 x 4 board on [-2, 2]^2."""
    rng = np.random.default_rng(seed)
    black = [(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0]
    cells = np.asarray(black)[rng.integers(0, len(black), size=n)]
    samples = cells - 2.0 + rng.random((n, 2))
    return Dataset(samples, None, {"name": "checkerboard"})


def in_black_square(samples: np.ndarray) -> np.ndarray:
    ij = np.floor(np.asarray(samples) + 2.0).astype(int)
    inside = np.all((ij >= 0) & (ij < 4), axis=1)
    return inside & ((ij[:, 0] + ij[:, 1]) % 2 == 0)


def make_point_mass(x0, n: int = 1000) -> Dataset:
    x0 = np.asarray(x0, dtype=np.float64).reshape(1, -1)
    return Dataset(np.repeat(x0, n, axis=0), None, {"name": "point-mass"})


def one_hot(labels, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return out


def mode_coverage(samples, centers, std: float, threshold: int = 20) -> tuple[int, float]:
    """(number of covered modes, fraction of high-quality samples).

    A sample is high quality within 3 std of its nearest center; a mode is
    covered once ``threshold`` high-quality samples sit nearest to it.
    """
    samples = np.asarray(samples, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if centers.size == 0:
        raise ValueError("mode_coverage needs at least one center")
    if samples.shape[0] == 0:
        return 0, 0.0
    d = np.linalg.norm(samples[:, None, :] - centers[None, :, :], axis=2)
    nearest = d.argmin(axis=1)
    hq = d[np.arange(len(samples)), nearest] <= 3.0 * std
    counts = np.bincount(nearest[hq], minlength=len(centers))
    return int(np.sum(counts >= threshold)), float(hq.mean())


# ---------------------------------------------------------------- CSV

def save_csv(ds: Dataset, path) -> None:
    D = ds.dim
    cols = [f"x{j}" for j in range(D)] + (["label"] if ds.labels is not None else [])
    lines = [",".join(cols)]
    for i, row in enumerate(ds.samples):
        cells = [repr(float(v)) for v in row]
        if ds.labels is not None:
            cells.append(str(int(ds.labels[i])))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_rows_csv(rows: np.ndarray, path, dim: int | None = None) -> None:
    """Header plus rows; works for zero rows (header only)."""
    rows = np.asarray(rows, dtype=np.float64)
    D = dim if dim is not None else rows.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(f"x{j}" for j in range(D)) + "\n")
        for row in rows.reshape(-1, D):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_csv(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln.strip() != ""]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    has_label = header[-1] == "label"
    D = len(header) - int(has_label)
    if D < 1 or header[:D] != [f"x{j}" for j in range(D)]:
        raise ValueError(f"{path}:1: header must be x0,...,x{{D-1}}[,label], got {lines[0]!r}")
    if len(lines) == 1:
        raise ValueError(f"{path}: header only, dataset is empty")
    samples = np.empty((len(lines) - 1, D))
    labels = np.empty(len(lines) - 1, dtype=np.int64) if has_label else None
    for i, ln in enumerate(lines[1:]):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}:{i + 2}: expected {len(header)} cells, got {len(cells)}")
        try:
            samples[i] = [float(c) for c in cells[:D]]
            if has_label:
                labels[i] = int(cells[D])
        except ValueError as exc:
            raise ValueError(f"{path}:{i + 2}: non-numeric cell ({exc})") from None
    meta = {"name": Path(path).stem}
    if has_label:
        meta["n_modes"] = int(labels.max()) + 1
    return Dataset(samples, labels, meta)


# ---------------------------------------------------------------- PPM

def render_raster_grid(samples, H: int, W: int, grid_cols: int, path, grid_rows: int | None = None) -> None:
    """Tile n samples of H*W values in [-1, 1] into a binary P6 image."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, H * W)
    n = samples.shape[0]
    rows = grid_rows if grid_rows is not None else max(1, math.ceil(n / grid_cols))
    if n > rows * grid_cols:
        raise ValueError(f"{n} samples do not fit a {rows} x {grid_cols} grid")
    if np.any(samples < -1.0) or np.any(samples > 1.0):
        raise ValueError("raster values must lie in [-1, 1]")
    canvas = np.zeros((rows * H, grid_cols * W), dtype=np.uint8)
    # round half up, exact for the midpoint
    vals = np.floor(255.0 * (samples + 1.0) / 2.0 + 0.5).astype(np.uint8)
    for i in range(n):
        r, c = divmod(i, grid_cols)
        canvas[r * H:(r + 1) * H, c * W:(c + 1) * W] = vals[i].reshape(H, W)
    rgb = np.repeat(canvas[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{grid_cols * W} {rows * H}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
