"""Encoder-vs-generator game: objectives, reconstruction losses, training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import ndcore as nd
from .data import Dataset, one_hot
from .divergence import METHODS, fit_diag_gaussian, kl_between_diag_gaussians, prior_divergence
from .latent import sample_prior
from .ndcore import AdamState, Tensor, adam_step, frozen
from .nets import MlpSpec, Network, init_network

log = logging.getLogger("agelab.game")

METRIC_FIELDS = ("iter", "div_real", "div_fake", "loss_latent", "loss_data", "v2")


@dataclass
class GameConfig:
    M: int = 8
    lam: float = 1000.0
    mu: float = 10.0
    gen_updates_per_enc: int = 2
    batch_size: int = 64
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    divergence_method: str = "parametric-kl"
    prior: str = "sphere"
    encoder_widths: list[int] = field(default_factory=lambda: [64, 64])
    generator_widths: list[int] = field(default_factory=lambda: [64, 64])
    activation: str = "leaky-relu"
    slope: float = 0.2

    def validate(self) -> None:
        if self.lam < 0 or self.mu < 0:
            raise ValueError("lambda and mu must be >= 0")
        if self.gen_updates_per_enc < 1:
            raise ValueError("gen_updates_per_enc must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (a Gaussian fit needs two rows)")
        if self.M < 2 and self.prior == "sphere":
            raise ValueError("sphere prior needs M >= 2")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.divergence_method not in METHODS:
            raise ValueError(f"divergence_method must be one of {METHODS}")
        if self.prior not in ("sphere", "gaussian"):
            raise ValueError("prior must be 'sphere' or 'gaussian'")


@dataclass
class TrainMetrics:
    iter: int
    div_real: float
    div_fake: float
    loss_latent: float
    loss_data: float
    v2: float

    def row(self) -> str:
        vals = [f"{getattr(self, f):.9g}" for f in METRIC_FIELDS[1:]]
        return ",".join([str(self.iter), *vals])


class NumericAbort(RuntimeError):
    def __init__(self, message, generator=None, encoder=None, log_rows=None):
        super().__init__(message)
        self.generator = generator
        self.encoder = encoder
        self.log = log_rows or []


def make_networks(data_dim: int, cfg: GameConfig, condition_dim: int = 0, seed=None) -> tuple[Network, Network]:
    rng = np.random.default_rng(seed)
    enc_out = "sphere-projection" if cfg.prior == "sphere" else "identity"
    e = init_network(MlpSpec(data_dim, cfg.M, list(cfg.encoder_widths), cfg.activation, enc_out,
                             condition_dim, cfg.slope), rng)
    g = init_network(MlpSpec(cfg.M, data_dim, list(cfg.generator_widths), cfg.activation, "identity",
                             condition_dim, cfg.slope), rng)
    return g, e


# ---------------------------------------------------------------- losses

def loss_data_reconstruction(g, e, x, condition=None) -> Tensor:
    """Mean L1 norm of x - g(e(x))."""
    x = nd.as_tensor(x)
    rec = g(e(x, condition), condition)
    return nd.sum(nd.abs(x - rec)) * (1.0 / x.shape[0])


def loss_latent_reconstruction(g, e, z, condition=None) -> Tensor:
    """Mean squared Euclidean norm of z - e(g(z))."""
    z = nd.as_tensor(z)
    rec = e(g(z, condition), condition)
    return nd.sum(nd.square(z - rec)) * (1.0 / z.shape[0])


def _divergence(codes: Tensor, cfg: GameConfig) -> Tensor:
    return prior_divergence(codes, cfg.prior, cfg.divergence_method).tensor


def generator_objective(g, e, z, cfg: GameConfig, condition=None, parts: dict | None = None) -> Tensor:
    """Divergence of e(g(z)) from the prior plus lambda * latent reconstruction.

    The encoder is frozen; the real-data divergence term is constant in the
    generator parameters and is left out.
    """
    z = nd.as_tensor(z)
    if z.shape[0] < 2:
        raise ValueError("generator_objective needs a batch of at least 2")
    with frozen(e.params):
        codes = e(g(z, condition), condition)
        div_fake = _divergence(codes, cfg)
        l_z = nd.sum(nd.square(z - codes)) * (1.0 / z.shape[0])
        obj = div_fake + l_z * cfg.lam
    if parts is not None:
        parts.update(div_fake=float(div_fake.data), loss_latent=float(l_z.data))
    return obj


def encoder_objective(g, e, x, z, cfg: GameConfig, condition_x=None, condition_z=None,
                      parts: dict | None = None) -> Tensor:
    """Quantity the encoder MAXIMIZES: div(e(g(z))) - div(e(x)) - mu * L1 reconstruction."""
    x = nd.as_tensor(x)
    z = nd.as_tensor(z)
    if x.shape[0] < 2 or z.shape[0] < 2:
        raise ValueError("encoder_objective needs batches of at least 2")
    with frozen(g.params):
        fake = g(z, condition_z)
        div_fake = _divergence(e(fake, condition_z), cfg)
        real_codes = e(x, condition_x)
        div_real = _divergence(real_codes, cfg)
        rec = g(real_codes, condition_x)
        l_x = nd.sum(nd.abs(x - rec)) * (1.0 / x.shape[0])
        obj = div_fake - div_real - l_x * cfg.mu
    if parts is not None:
        parts.update(div_fake=float(div_fake.data), div_real=float(div_real.data), loss_data=float(l_x.data))
    return obj


def v1_objective(g, e, z, x, condition_z=None, condition_x=None) -> Tensor:
    """KL between the diagonal Gaussians fitted to e(g(z)) and e(x)."""
    m1, s1 = fit_diag_gaussian(e(g(z, condition_z), condition_z))
    m2, s2 = fit_diag_gaussian(e(nd.as_tensor(x), condition_x))
    return kl_between_diag_gaussians(m1, s1, m2, s2)


def v2_value(g, e, z, x, cfg: GameConfig, condition_z=None, condition_x=None) -> float:
    fake = _divergence(e(g(z, condition_z), condition_z), cfg)
    real = _divergence(e(nd.as_tensor(x), condition_x), cfg)
    return float(fake.data - real.data)


# ---------------------------------------------------------------- training

class EpochSampler:
    """Minibatches without replacement, reshuffled every epoch."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if n < batch_size:
            raise ValueError(f"dataset size {n} is smaller than batch_size {batch_size}")
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self._perm = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._perm[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


@dataclass
class Trainer:
    """Owns both networks and their optimizer states for one run."""
    data: Dataset
    cfg: GameConfig
    seed: int = 0
    conditional: bool = False
    g: Network = None
    e: Network = None

    def __post_init__(self):
        self.cfg.validate()
        self.rng = np.random.default_rng(self.seed)
        self.n_classes = self.data.n_classes if self.conditional else 0
        if self.conditional and self.data.labels is None:
            raise ValueError("conditional training needs a labelled dataset")
        if self.g is None or self.e is None:
            self.g, self.e = make_networks(self.data.dim, self.cfg, self.n_classes, self.rng)
        self.opt_g = AdamState(lr=self.cfg.lr, beta1=self.cfg.beta1, beta2=self.cfg.beta2)
        self.opt_e = AdamState(lr=self.cfg.lr, beta1=self.cfg.beta1, beta2=self.cfg.beta2)
        self.sampler = EpochSampler(len(self.data), self.cfg.batch_size, self.rng)
        self.iteration = 0

    def _z(self):
        z = sample_prior(self.cfg.batch_size, self.cfg.M, self.cfg.prior, self.rng)
        if not self.conditional:
            return z, None
        lab = self.rng.integers(0, self.n_classes, size=self.cfg.batch_size)
        return z, one_hot(lab, self.n_classes)

    def _x(self):
        idx = self.sampler.next()
        x = self.data.samples[idx]
        c = one_hot(self.data.labels[idx], self.n_classes) if self.conditional else None
        return x, c

    def encoder_step(self) -> dict:
        x, cx = self._x()
        z, cz = self._z()
        parts: dict = {}
        nd.zero_grad(self.e.params)
        obj = encoder_objective(self.g, self.e, x, z, self.cfg, cx, cz, parts)
        nd.backward(-obj)
        _check_finite(obj, "encoder objective")
        adam_step(self.e.params, self.opt_e)
        return parts

    def generator_step(self) -> dict:
        z, cz = self._z()
        parts: dict = {}
        nd.zero_grad(self.g.params)
        obj = generator_objective(self.g, self.e, z, self.cfg, cz, parts)
        nd.backward(obj)
        _check_finite(obj, "generator objective")
        adam_step(self.g.params, self.opt_g)
        return parts

    def step(self) -> TrainMetrics:
        enc = self.encoder_step()
        gen = {}
        for _ in range(self.cfg.gen_updates_per_enc):
            gen = self.generator_step()
        self.iteration += 1
        return TrainMetrics(self.iteration, enc["div_real"], enc["div_fake"], gen["loss_latent"],
                            enc["loss_data"], enc["div_fake"] - enc["div_real"])


def _check_finite(obj: Tensor, what: str) -> None:
    if not math.isfinite(float(obj.data)):
        raise FloatingPointError(f"{what} is not finite ({float(obj.data)})")


def train(data: Dataset, cfg: GameConfig, iters: int, seed: int = 0, conditional: bool = False,
          on_metrics=None, trainer: Trainer | None = None):
    """Alternate one encoder ascent step with ``gen_updates_per_enc`` generator steps.

    Returns ``(g, e, log)``. ``on_metrics`` is called with each TrainMetrics
    as soon as it is produced. On a non-finite objective raises
    :class:`NumericAbort` carrying the last parameters that were finite.
    """
    tr = trainer or Trainer(data, cfg, seed, conditional)
    rows: list[TrainMetrics] = []
    good_g, good_e = tr.g.state(), tr.e.state()
    for it in range(iters):
        try:
            m = tr.step()
            vals = [m.div_real, m.div_fake, m.loss_latent, m.loss_data]
            if not all(math.isfinite(v) for v in vals):
                raise FloatingPointError(f"non-finite metrics {vals}")
            if not all(np.all(np.isfinite(p.data)) for p in tr.g.params + tr.e.params):
                raise FloatingPointError("non-finite parameters after update")
        except (FloatingPointError, ValueError) as exc:
            tr.g.load_state(good_g)
            tr.e.load_state(good_e)
            raise NumericAbort(f"iteration {it + 1}: {exc}", tr.g, tr.e, rows) from exc
        good_g, good_e = tr.g.state(), tr.e.state()
        rows.append(m)
        if on_metrics is not None:
            on_metrics(m)
        if log.isEnabledFor(logging.DEBUG) and (it + 1) % 500 == 0:
            log.debug("iter %d div_real %.4f div_fake %.4f L_Z %.4f L_X %.4f",
                      m.iter, m.div_real, m.div_fake, m.loss_latent, m.loss_data)
    return tr.g, tr.e, rows


def frozen_encoder_run(g: Network, e: Network, cfg: GameConfig, steps: int, seed=None,
                       eval_every: int = 50, n_eval: int = 4096):
    """Generator-only descent on its objective against a fixed encoder.

    Returns the prior divergence of e(g(z)) on one fixed evaluation batch,
    measured before the first step and after every ``eval_every`` steps,
    plus the final DivergenceEstimate.
    """
    rng = np.random.default_rng(seed)
    z_eval = sample_prior(n_eval, cfg.M, cfg.prior, rng)
    opt = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    e_before = e.state()
    trace = [prior_divergence(e(g(z_eval)), cfg.prior, cfg.divergence_method).value]
    for i in range(steps):
        z = sample_prior(cfg.batch_size, cfg.M, cfg.prior, rng)
        nd.zero_grad(g.params)
        nd.backward(generator_objective(g, e, z, cfg))
        adam_step(g.params, opt)
        if (i + 1) % eval_every == 0:
            trace.append(prior_divergence(e(g(z_eval)), cfg.prior, cfg.divergence_method).value)
    assert all(np.array_equal(a, b) for a, b in zip(e_before, e.state()))
    return trace, prior_divergence(e(g(z_eval)), cfg.prior, cfg.divergence_method)


def generate(g: Network, n: int, M: int, prior: str = "sphere", seed=None, condition=None) -> np.ndarray:
    if n == 0:
        return np.zeros((0, g.spec.output_dim))
    z = sample_prior(n, M, prior, np.random.default_rng(seed))
    return g(z, condition).data


def metrics_header() -> str:
    return ",".join(METRIC_FIELDS)
