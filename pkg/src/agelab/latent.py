"""Latent prior geometry: uniform sphere sampling, projection, slerp."""
from __future__ import annotations

import numpy as np

from .ndcore import Tensor, custom_op, DomainError, ShapeError

NORM_FLOOR = 1e-12


def sample_uniform_sphere(n: int, M: int, seed=None) -> np.ndarray:
    """n i.i.d. points uniform on the unit sphere in R^M (normalized Gaussians).

    ``seed`` may be an int or an existing ``np.random.Generator``.
    """
    if M < 2:
        raise ValueError(f"sphere needs M >= 2, got M={M}")
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = rng.standard_normal((n, M))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_prior(n: int, M: int, prior: str, rng) -> np.ndarray:
    if prior == "sphere":
        return sample_uniform_sphere(n, M, rng)
    if prior == "gaussian":
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return rng.standard_normal((n, M))
    raise ValueError(f"unknown prior {prior!r}")


def project_to_sphere(x: Tensor) -> Tensor:
    """Divide each row by its Euclidean norm (differentiable)."""
    if x.data.ndim != 2:
        raise ShapeError(f"project_to_sphere: expected n x M, got {x.shape}")
    r = np.linalg.norm(x.data, axis=1, keepdims=True)
    bad = np.flatnonzero(r[:, 0] < NORM_FLOOR)
    if bad.size:
        raise DomainError(f"project_to_sphere: row {bad[0]} has norm {r[bad[0], 0]:.3g}")
    u = x.data / r

    def bw(g):
        # Jacobian of x/|x| is (I - u u^T)/|x|
        return ((g - u * np.sum(g * u, axis=1, keepdims=True)) / r,)

    return custom_op("sphere-projection", (x,), u, bw)


def slerp(z1, z2, t: float) -> np.ndarray:
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    for name, z in (("z1", z1), ("z2", z2)):
        if abs(np.linalg.norm(z) - 1.0) > 1e-6:
            raise ValueError(f"slerp: {name} is not unit norm")
    cos = float(np.clip(z1 @ z2, -1.0, 1.0))
    if cos <= -1.0 + 1e-12:
        raise DomainError("slerp: antipodal endpoints, great-circle arc is ambiguous")
    theta = np.arccos(cos)
    if theta < 1e-9:
        out = (1.0 - t) * z1 + t * z2
    else:
        s = np.sin(theta)
        out = (np.sin((1.0 - t) * theta) / s) * z1 + (np.sin(t * theta) / s) * z2
    return out / np.linalg.norm(out)
