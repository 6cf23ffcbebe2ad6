"""Contrastive pretraining loop: batching, jitter, validation monitoring,
and min-validation-loss model selection."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .contrastive import ImageProjection, Temperature, clip_loss
from .dataio import PairDataset, SplitSpec, derived_rng, jitter, split
from .optim import Adam
from .siren import LocationEncoder, SirenConfig
from .sphere import sh_basis_batch


@dataclass(frozen=True)
class PretrainConfig:
    l_max: int = 10
    d: int = 256
    hidden_dim: int = 512
    hidden_layers: int = 2
    omega0: float = 30.0
    batch_size: int = 512          # paper-scale runs use 8192
    epochs: int = 200              # paper-scale runs use 500
    lr: float = 1e-4
    weight_decay: float = 1e-2
    val_fraction: float = 0.1
    seed: int = 0
    jitter: bool = True
    tau_init: float = 0.07
    tau_trainable: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.epochs < 0 or self.l_max < 1 or self.d < 1:
            raise ValueError("invalid config")


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def append(self, epoch, train, val, tau, seconds):
        self.epochs.append(epoch)
        self.train_loss.append(train)
        self.val_loss.append(val)
        self.tau.append(tau)
        self.seconds.append(seconds)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss,tau,seconds\n")
            for row in zip(self.epochs, self.train_loss, self.val_loss,
                           self.tau, self.seconds):
                fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r},{row[4]!r}\n")


@dataclass
class PretrainResult:
    encoder: LocationEncoder
    projection: ImageProjection
    temperature: Temperature
    log: TrainingLog
    best_epoch: int
    best_val_loss: float
    config: PretrainConfig

    def metadata(self) -> dict:
        meta = asdict(self.config)
        meta.update(best_epoch=self.best_epoch, best_val_loss=self.best_val_loss)
        return meta


class NaNLossError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"NaN/Inf loss at epoch {epoch}; aborting")
        self.epoch = epoch


def _batch_loss(encoder, projection, temperature, sh, feats):
    loc = encoder(sh)
    img = projection(feats)
    return clip_loss(loc, img, temperature)


def _val_loss(encoder, projection, temperature, coords, feats, l_max, batch_size):
    """Validation loss without jitter, over full batches of min(batch, n_val)."""
    n = len(coords)
    bs = min(batch_size, n)
    total, batches = 0.0, 0
    for start in range(0, n - bs + 1, bs):
        idx = slice(start, start + bs)
        sh = sh_basis_batch(coords[idx], l_max)
        total += _batch_loss(encoder, projection, temperature, sh, feats[idx]).item()
        batches += 1
    return total / batches


def pretrain(pairs: PairDataset, cfg: PretrainConfig) -> PretrainResult:
    """Train the location encoder + image projection + temperature contrastively.

    Splits off a validation fraction, trains on shuffled full batches (last
    partial batch dropped) with fresh coordinate jitter each epoch, and
    returns the parameter snapshot with minimum validation loss.
    """
    n = len(pairs)
    spec = SplitSpec(kind="random",
                     fractions=(1.0 - cfg.val_fraction, cfg.val_fraction, 0.0))
    train_idx, val_idx, _ = split(n, spec, cfg.seed)
    if len(train_idx) < cfg.batch_size:
        raise ValueError(
            f"training split ({len(train_idx)}) smaller than one batch ({cfg.batch_size})")

    encoder = LocationEncoder.init(
        SirenConfig(cfg.l_max**2, cfg.hidden_dim, cfg.hidden_layers, cfg.d, cfg.omega0),
        seed=int(derived_rng(cfg.seed, "init-encoder").integers(2**31)))
    projection = ImageProjection.init(
        pairs.k_img, cfg.d, seed=int(derived_rng(cfg.seed, "init-projection").integers(2**31)))
    temperature = Temperature(cfg.tau_init, cfg.tau_trainable)
    params = encoder.parameters() + projection.parameters() + temperature.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    shuffle_rng = derived_rng(cfg.seed, "shuffle")
    jitter_rng = derived_rng(cfg.seed, "jitter")
    train_coords = pairs.coords[train_idx]
    train_feats = pairs.feats[train_idx]
    val_coords = pairs.coords[val_idx]
    val_feats = pairs.feats[val_idx]

    log = TrainingLog()
    # model selection is over completed epochs; epochs=0 returns the initialization
    best = {
        "epoch": 0,
        "val": np.inf if cfg.epochs > 0 else
        _val_loss(encoder, projection, temperature, val_coords, val_feats,
                  cfg.l_max, cfg.batch_size),
        "encoder": encoder.copy(),
        "projection": projection.copy(),
        "log_tau": float(temperature.log_tau.data),
    }

    n_train = len(train_coords)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n_train)
        coords_epoch = jitter(train_coords, jitter_rng) if cfg.jitter else train_coords
        epoch_losses = []
        for start in range(0, n_train - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            sh = sh_basis_batch(coords_epoch[idx], cfg.l_max)
            loss = _batch_loss(encoder, projection, temperature, sh, train_feats[idx])
            if not np.isfinite(loss.data):
                raise NaNLossError(epoch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            temperature.clamp()
            epoch_losses.append(loss.item())
        val = _val_loss(encoder, projection, temperature, val_coords, val_feats,
                        cfg.l_max, cfg.batch_size)
        if not np.isfinite(val):
            raise NaNLossError(epoch)
        log.append(epoch, float(np.mean(epoch_losses)), val, temperature.tau,
                   time.perf_counter() - t0)
        if val < best["val"]:
            best.update(epoch=epoch, val=val, encoder=encoder.copy(),
                        projection=projection.copy(),
                        log_tau=float(temperature.log_tau.data))

    best_temperature = Temperature(cfg.tau_init, cfg.tau_trainable)
    best_temperature.log_tau.data = np.array(best["log_tau"], dtype=np.float64)
    return PretrainResult(best["encoder"], best["projection"], best_temperature,
                          log, best["epoch"], best["val"], cfg)


def embed(encoder: LocationEncoder, coords: np.ndarray, l_max: int) -> np.ndarray:
    """Raw (unnormalized) encoder embeddings for an (n, 2) lon/lat array."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if len(coords) == 0:
        return np.empty((0, encoder.config.output_dim))
    return encoder(sh_basis_batch(coords, l_max)).data
