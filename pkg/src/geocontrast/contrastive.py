"""Symmetric contrastive matching of location and image embeddings.

The loss is the mean of two softmax cross-entropies over the cosine
similarity matrix of a batch: each location against all images (rows) and
each image against all locations (columns), scaled by a temperature tau.
"""

from __future__ import annotations

import math

import numpy as np

from .autograd import Tensor, parameter

TAU_MIN = 5e-3
TAU_MAX = 100.0


class Temperature:
    """Trainable softmax temperature, stored as log(tau) and clamped after steps."""

    def __init__(self, tau_init: float = 0.07, trainable: bool = True):
        if not TAU_MIN <= tau_init <= TAU_MAX:
            raise ValueError(f"tau_init {tau_init} outside [{TAU_MIN}, {TAU_MAX}]")
        self.log_tau = parameter(math.log(tau_init))
        self.log_tau.requires_grad = trainable
        self.trainable = trainable

    @property
    def tau(self) -> float:
        return math.exp(float(self.log_tau.data))

    def clamp(self):
        self.log_tau.data = np.clip(
            self.log_tau.data, math.log(TAU_MIN), math.log(TAU_MAX))

    def parameters(self) -> list[Tensor]:
        return [self.log_tau] if self.trainable else []


class ImageProjection:
    """The single trainable linear layer mapping precomputed image features to R^d."""

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.data.ndim != 2 or bias.shape != (weight.shape[1],):
            raise ValueError(f"inconsistent projection shapes {weight.shape}/{bias.shape}")
        self.weight = weight
        self.bias = bias

    @property
    def k_img(self) -> int:
        return self.weight.shape[0]

    @property
    def d(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def init(cls, k_img: int, d: int, seed: int) -> "ImageProjection":
        rng = np.random.default_rng(seed)
        bound = math.sqrt(6.0 / k_img)
        return cls(parameter(rng.uniform(-bound, bound, size=(k_img, d))),
                   parameter(np.zeros(d)))

    def __call__(self, feats) -> Tensor:
        feats = feats if isinstance(feats, Tensor) else Tensor(feats)
        if feats.shape[1] != self.k_img:
            raise ValueError(f"feature width {feats.shape[1]} != k_img {self.k_img}")
        return feats @ self.weight + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def copy(self) -> "ImageProjection":
        return ImageProjection(parameter(self.weight.data.copy()),
                               parameter(self.bias.data.copy()))


def l2_normalize_rows(x):
    """Scale each row to unit Euclidean norm. Accepts a Tensor or array."""
    is_tensor = isinstance(x, Tensor)
    data = x.data if is_tensor else np.asarray(x, dtype=np.float64)
    norms = np.sqrt((data * data).sum(axis=1))
    if np.any(norms < 1e-12):
        raise ValueError("degenerate embedding: row with near-zero norm")
    if is_tensor:
        return x * ((x * x).sum(axis=1, keepdims=True) ** -0.5)
    return data / norms[:, None]


def clip_loss(loc, img, temperature: Temperature) -> Tensor:
    """Symmetric contrastive loss over an aligned batch of embeddings.

    loc and img are (N, d) with row i of each referring to the same location.
    Returns a differentiable scalar.
    """
    loc = loc if isinstance(loc, Tensor) else Tensor(loc)
    img = img if isinstance(img, Tensor) else Tensor(img)
    if loc.shape != img.shape:
        raise ValueError(f"batch shape mismatch: loc {loc.shape} vs img {img.shape}")
    if not (np.all(np.isfinite(loc.data)) and np.all(np.isfinite(img.data))):
        raise FloatingPointError("NaN/Inf in embeddings")
    tau = math.exp(float(temperature.log_tau.data))
    if not TAU_MIN <= tau <= TAU_MAX * (1 + 1e-12):
        raise ValueError(f"temperature {tau} out of bounds")
    n = loc.shape[0]
    sims = l2_normalize_rows(loc) @ l2_normalize_rows(img).T
    logits = sims * (-temperature.log_tau).exp()
    matched = logits.diagonal()
    loss_loc = (logits.logsumexp(axis=1) - matched).sum()
    loss_img = (logits.logsumexp(axis=0) - matched).sum()
    return (loss_loc + loss_img) * (1.0 / (2.0 * n))


def top1_retrieval_accuracy(loc: np.ndarray, img: np.ndarray) -> float:
    """Fraction of rows whose best-matching image is their own (in-batch top-1)."""
    sims = l2_normalize_rows(np.asarray(loc)) @ l2_normalize_rows(np.asarray(img)).T
    return float(np.mean(sims.argmax(axis=1) == np.arange(sims.shape[0])))
