"""Divergence of an empirical latent batch from the prior.

Two routes: a diagonal Gaussian is fitted to the batch and its KL from the
unit Gaussian taken in closed form (differentiable, used for training), or
the Kozachenko-Leonenko k-NN entropy estimate is combined with the analytic
cross-entropy term (numpy only, used for monitoring).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from . import ndcore as nd
from .kernels import knn_kth_distance
from .ndcore import Tensor

STD_FLOOR = 1e-6
TIE_JITTER = 1e-9

METHODS = ("parametric-kl", "paper-normalization")


@dataclass
class DivergenceEstimate:
    value: float
    method: str
    per_dim_mean: np.ndarray | None = None
    per_dim_std: np.ndarray | None = None
    k: int | None = None
    tensor: Tensor | None = None  # differentiable scalar, parametric routes only


def _column_mean(x: Tensor) -> Tensor:
    # summing sorted columns makes the result independent of row order, bit for bit
    n, M = x.shape
    value = np.sort(x.data, axis=0).sum(axis=0, keepdims=True) / n
    return nd.custom_op("mean", (x,), value, lambda g: (np.broadcast_to(g / n, (n, M)).copy(),))


def fit_diag_gaussian(batch: Tensor) -> tuple[Tensor, Tensor]:
    """Column means and population standard deviations (floored), each 1 x M."""
    n = batch.shape[0]
    if batch.data.ndim != 2 or n < 2:
        raise ValueError(f"fit_diag_gaussian needs an n x M batch with n >= 2, got {batch.shape}")
    m = _column_mean(batch)
    centered = batch - nd.broadcast_row(m, n)
    var = _column_mean(nd.square(centered))
    s = nd.sqrt(nd.clamp_min(var, STD_FLOOR ** 2))
    return m, s


def kl_diag_gaussian(m: Tensor, s: Tensor, paper_normalization: bool = False) -> Tensor:
    """KL( prod_j N(m_j, s_j^2) || N(0, I) ) as a differentiable scalar.

    With ``paper_normalization`` the alternative form
    -M/2 + (1/M) sum_j [(s_j^2 + m_j^2)/2 - log s_j] is returned instead.
    """
    if np.any(s.data <= 0.0):
        raise ValueError("kl_diag_gaussian: standard deviations must be positive")
    M = m.data.size
    per_dim = (nd.square(s) + nd.square(m)) * 0.5 - nd.log(s)
    if paper_normalization:
        return nd.sum(per_dim) * (1.0 / M) - 0.5 * M
    return nd.sum(per_dim) - 0.5 * M


def kl_vs_unit_gaussian(m: Tensor, s: Tensor, paper_normalization: bool = False) -> DivergenceEstimate:
    t = kl_diag_gaussian(m, s, paper_normalization)
    return DivergenceEstimate(
        value=float(t.data),
        method="paper-normalization" if paper_normalization else "parametric-kl",
        per_dim_mean=m.data.ravel().copy(),
        per_dim_std=s.data.ravel().copy(),
        tensor=t,
    )


def kl_between_diag_gaussians(m1: Tensor, s1: Tensor, m2: Tensor, s2: Tensor) -> Tensor:
    """KL( N(m1, s1^2) || N(m2, s2^2) ), diagonal, summed over dimensions."""
    ratio = nd.square(s1 / s2)
    dm = nd.square((m1 - m2) / s2)
    per_dim = (ratio + dm) * 0.5 - 0.5 - nd.log(s1 / s2)
    return nd.sum(per_dim)


def standardize_for_prior(codes: Tensor, prior: str) -> Tensor:
    """Rescale codes so the prior itself has unit per-dimension variance.

    Uniform points on the unit sphere in R^M have coordinate variance 1/M;
    multiplying by sqrt(M) makes the matched unit Gaussian the reference.
    """
    if prior == "sphere":
        return codes * float(np.sqrt(codes.shape[1]))
    if prior == "gaussian":
        return codes
    raise ValueError(f"unknown prior {prior!r}")


def prior_divergence(codes: Tensor, prior: str = "sphere", method: str = "parametric-kl") -> DivergenceEstimate:
    """Parametric divergence of encoded codes from the latent prior."""
    if method not in METHODS:
        raise ValueError(f"unknown divergence method {method!r}; expected one of {METHODS}")
    m, s = fit_diag_gaussian(standardize_for_prior(codes, prior))
    return kl_vs_unit_gaussian(m, s, paper_normalization=(method == "paper-normalization"))


# ---------------------------------------------------------------- k-NN route

def log_unit_ball_volume(M: int) -> float:
    return 0.5 * M * np.log(np.pi) - gammaln(0.5 * M + 1.0)


def _break_ties(x: np.ndarray) -> np.ndarray:
    _, inverse, counts = np.unique(x, axis=0, return_inverse=True, return_counts=True)
    dup = counts[np.ravel(inverse)] > 1
    if not dup.any():
        return x
    x = x.copy()
    rng = np.random.default_rng(0)
    x[dup] += TIE_JITTER * rng.standard_normal((int(dup.sum()), x.shape[1]))
    return x


def knn_entropy(batch, k: int = 5) -> float:
    """Kozachenko-Leonenko differential entropy estimate in nats."""
    x = np.asarray(batch.data if isinstance(batch, Tensor) else batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"knn_entropy expects an n x M array, got shape {x.shape}")
    n, M = x.shape
    if k < 1 or n <= k:
        raise ValueError(f"knn_entropy needs n > k >= 1, got n={n}, k={k}")
    rho = knn_kth_distance(_break_ties(x), k)
    return float(digamma(n) - digamma(k) + log_unit_ball_volume(M) + M * np.mean(np.log(rho)))


def knn_kl_vs_unit_gaussian(batch, k: int = 5) -> DivergenceEstimate:
    x = np.asarray(batch.data if isinstance(batch, Tensor) else batch, dtype=np.float64)
    h = knn_entropy(x, k)
    M = x.shape[1]
    mean_log_density = -0.5 * M * np.log(2.0 * np.pi) - 0.5 * np.mean(np.sum(x * x, axis=1))
    return DivergenceEstimate(value=float(-h - mean_log_density), method="knn-kl",
                              per_dim_mean=x.mean(axis=0), k=k)
