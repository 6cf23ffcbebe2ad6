"""Sinusoidal representation network mapping positional encodings to embeddings.

Hidden layers use sin(omega0 * (x W + b)); the output layer is plain linear
so embeddings span all of R^d.  Initialization follows the standard Siren
scheme: first layer Uniform(-1/fan_in, 1/fan_in), later sine layers
Uniform(-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0), final linear layer
Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, parameter


@dataclass(frozen=True)
class SirenConfig:
    input_dim: int
    hidden_dim: int = 512
    hidden_layers: int = 2
    output_dim: int = 256
    omega0: float = 30.0

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "hidden_layers", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_dim] * self.hidden_layers + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


class LocationEncoder:
    """Siren network over spherical-harmonics features: coords -> d-dim embedding."""

    def __init__(self, config: SirenConfig, layers: list[tuple[Tensor, Tensor]]):
        expected = config.layer_dims()
        if len(layers) != len(expected):
            raise ValueError(f"expected {len(expected)} layers, got {len(layers)}")
        for (w, b), (fan_in, fan_out) in zip(layers, expected):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValueError(
                    f"layer shape mismatch: W{w.shape}/b{b.shape} vs ({fan_in},{fan_out})")
        self.config = config
        self.layers = layers

    @classmethod
    def init(cls, config: SirenConfig, seed: int) -> "LocationEncoder":
        rng = np.random.default_rng(seed)
        layers = []
        dims = config.layer_dims()
        last = len(dims) - 1
        for i, (fan_in, fan_out) in enumerate(dims):
            if i == 0:
                bound = 1.0 / fan_in
            elif i == last:
                bound = np.sqrt(6.0 / fan_in)
            else:
                bound = np.sqrt(6.0 / fan_in) / config.omega0
            w = parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            b = parameter(np.zeros(fan_out))
            layers.append((w, b))
        return cls(config, layers)

    def forward(self, x) -> Tensor:
        """Batch forward pass; x is (N, input_dim) array or Tensor."""
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.shape[1] != self.config.input_dim:
            raise ValueError(
                f"input width {h.shape[1]} != input_dim {self.config.input_dim}")
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if i != last:
                h = (h * self.config.omega0).sin()
        return h

    def __call__(self, x) -> Tensor:
        return self.forward(x)

    def parameters(self) -> list[Tensor]:
        return [t for pair in self.layers for t in pair]

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def copy(self) -> "LocationEncoder":
        layers = [(parameter(w.data.copy()), parameter(b.data.copy()))
                  for w, b in self.layers]
        return LocationEncoder(self.config, layers)
