"""MLP encoder / generator with optional input conditioning, plus checkpoints."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ndcore as nd
from .latent import project_to_sphere
from .ndcore import Tensor

MAGIC = b"AGE1"
ACTIVATIONS = ("tanh", "leaky-relu")
OUTPUTS = ("sphere-projection", "identity", "tanh")


@dataclass
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    activation: str = "leaky-relu"
    output_transform: str = "identity"
    condition_dim: int = 0
    slope: float = 0.2

    @property
    def layer_widths(self) -> list[int]:
        return [self.input_dim + self.condition_dim, *self.hidden, self.output_dim]

    def validate(self) -> None:
        if any(int(w) <= 0 for w in self.layer_widths):
            raise ValueError(f"layer widths must be positive, got {self.layer_widths}")
        if self.condition_dim < 0:
            raise ValueError("condition_dim must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.output_transform not in OUTPUTS:
            raise ValueError(f"output_transform must be one of {OUTPUTS}")


class Network:
    def __init__(self, spec: MlpSpec, params: list[Tensor]):
        self.spec = spec
        self.params = params

    @property
    def weights(self) -> list[Tensor]:
        return self.params[0::2]

    @property
    def biases(self) -> list[Tensor]:
        return self.params[1::2]

    def __call__(self, x, condition=None) -> Tensor:
        return forward(self, x, condition)

    def copy(self) -> Network:
        return Network(self.spec, [Tensor(p.data.copy(), requires_grad=p.requires_grad) for p in self.params])

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params]

    def load_state(self, arrays) -> None:
        for p, a in zip(self.params, arrays):
            p.data[...] = a


class IdentityNet:
    """Analytic stand-in whose forward returns its input (test mode only)."""

    def __init__(self, dim: int, output_transform: str = "identity"):
        self.spec = MlpSpec(dim, dim, hidden=[], output_transform=output_transform)
        self.params: list[Tensor] = []

    def __call__(self, x, condition=None) -> Tensor:
        x = nd.as_tensor(x)
        if self.spec.output_transform == "sphere-projection":
            return project_to_sphere(x)
        return x


def init_network(spec: MlpSpec, seed=None) -> Network:
    """He-normal weights (variance 2/fan_in), zero biases."""
    spec.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    widths = spec.layer_widths
    params = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params.append(Tensor(w, requires_grad=True))
        params.append(Tensor(np.zeros((1, fan_out)), requires_grad=True))
    return Network(spec, params)


def forward(net: Network, x, condition=None) -> Tensor:
    spec = net.spec
    x = nd.as_tensor(x)
    if (condition is not None) != (spec.condition_dim > 0):
        raise ValueError(f"condition must be given iff condition_dim > 0 (condition_dim={spec.condition_dim})")
    if x.data.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input shape {x.shape} does not match input_dim={spec.input_dim}")
    h = x
    if condition is not None:
        c = nd.as_tensor(condition)
        if c.shape != (x.shape[0], spec.condition_dim):
            raise ValueError(f"condition shape {c.shape} != ({x.shape[0]}, {spec.condition_dim})")
        h = nd.concat_cols([x, c])
    n = x.shape[0]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + nd.broadcast_row(b, n)
        if i < last:
            h = nd.tanh(h) if spec.activation == "tanh" else nd.leaky_relu(h, spec.slope)
    if spec.output_transform == "sphere-projection":
        h = project_to_sphere(h)
    elif spec.output_transform == "tanh":
        h = nd.tanh(h)
    return h


# ---------------------------------------------------------------- checkpoints

def save_network(net: Network, path, meta: dict | None = None) -> None:
    header = {"spec": asdict(net.spec), "shapes": [list(p.shape) for p in net.params]}
    if meta:
        header["meta"] = meta
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for p in net.params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[Network, dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC + b"\n"):
        raise ValueError(f"{path}: not an AGE1 checkpoint")
    rest = raw[len(MAGIC) + 1:]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl].decode("utf-8"))
    body = rest[nl + 1:]
    spec = MlpSpec(**header["spec"])
    params, off = [], 0
    for shape in header["shapes"]:
        count = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
        params.append(Tensor(arr, requires_grad=True))
        off += 8 * count
    if off != len(body):
        raise ValueError(f"{path}: {len(body) - off} trailing bytes after parameters")
    return Network(spec, params), header.get("meta", {})


def load_network(path) -> Network:
    return read_checkpoint(path)[0]
