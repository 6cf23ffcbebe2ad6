"""Downstream evaluation: MLP heads over frozen embeddings or raw coordinates,
metrics, random hyperparameter search, and repeated-run reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .autograd import Tensor, parameter
from .dataio import LabeledDataset, SplitSpec, derived_rng, split
from .optim import Adam
from .pretrain import embed
from .siren import LocationEncoder


@dataclass(frozen=True)
class HeadConfig:
    hidden_layers: int = 1
    hidden_dim: int = 128
    lr: float = 1e-3
    weight_decay: float = 1e-4
    max_epochs: int = 500
    patience: int = 20          # in validation evaluations, not epochs
    eval_every: int = 5         # epochs between validation evaluations

    def __post_init__(self):
        if self.hidden_layers < 0 or self.hidden_dim < 1:
            raise ValueError("invalid head dimensions")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience exceeds max_epochs")


@dataclass(frozen=True)
class SearchSpace:
    hidden_layers: tuple = (1, 2, 3)
    hidden_dim: tuple = (64, 128, 256, 512)
    lr_range: tuple = (1e-4, 1e-2)       # log-uniform
    wd_range: tuple = (1e-6, 1e-2)       # log-uniform
    trial_count: int = 16
    seed: int = 0
    max_epochs: int = 500
    patience: int = 20
    eval_every: int = 5

    def __post_init__(self):
        if self.trial_count < 1 or not self.hidden_layers or not self.hidden_dim:
            raise ValueError("empty search space")

    def sample(self, rng: np.random.Generator) -> HeadConfig:
        return HeadConfig(
            hidden_layers=int(rng.choice(self.hidden_layers)),
            hidden_dim=int(rng.choice(self.hidden_dim)),
            lr=float(np.exp(rng.uniform(*np.log(self.lr_range)))),
            weight_decay=float(np.exp(rng.uniform(*np.log(self.wd_range)))),
            max_epochs=self.max_epochs,
            patience=self.patience,
            eval_every=self.eval_every,
        )


@dataclass
class EvalReport:
    task: str
    metric: str                       # "r2" | "accuracy"
    values: list = field(default_factory=list)
    mean: float = 0.0
    std: float = 0.0
    config: HeadConfig | None = None
    split: dict | None = None
    seeds: list = field(default_factory=list)

    def to_json(self) -> str:
        raw = {
            "task": self.task,
            "metric": self.metric,
            "values": self.values,
            "mean": self.mean,
            "std": self.std,
            "config": asdict(self.config) if self.config else None,
            "split": self.split,
            "seeds": self.seeds,
        }
        return json.dumps(raw, indent=2)


def featurize(coords: np.ndarray, encoder: LocationEncoder | None = None,
              l_max: int | None = None, scale_identity: bool = True) -> np.ndarray:
    """Inputs for a downstream head: learned embeddings, or raw coordinates.

    With an encoder, returns embed() output; without one, the identity
    baseline [lon/180, lat/90] (scaling disabled via scale_identity=False).
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if encoder is not None:
        if l_max is None:
            raise ValueError("embeddings mode needs l_max")
        return embed(encoder, coords, l_max)
    if scale_identity:
        return coords / np.array([180.0, 90.0])
    return coords.copy()


class MLPHead:
    """ReLU MLP with a linear output; trained with Adam on MSE or cross-entropy."""

    def __init__(self, in_dim: int, out_dim: int, cfg: HeadConfig, seed: int):
        rng = np.random.default_rng(seed)
        dims = [in_dim] + [cfg.hidden_dim] * cfg.hidden_layers + [out_dim]
        self.layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / fan_in)
            self.layers.append((parameter(rng.uniform(-bound, bound, (fan_in, fan_out))),
                                parameter(np.zeros(fan_out))))
        self.cfg = cfg

    def forward(self, x) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(x)
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if i != last:
                h = h.relu()
        return h

    __call__ = forward

    def parameters(self):
        return [t for pair in self.layers for t in pair]

    def snapshot(self):
        return [t.data.copy() for t in self.parameters()]

    def restore(self, snap):
        for t, d in zip(self.parameters(), snap):
            t.data = d.copy()

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = self.forward(x).data
        return out[:, 0] if out.shape[1] == 1 else out


def metric_r2(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    if pred.shape != truth.shape:
        raise ValueError("length mismatch")
    sst = float(((truth - truth.mean()) ** 2).sum())
    if sst == 0.0:
        raise ValueError("zero-variance truth: R^2 undefined")
    sse = float(((truth - pred) ** 2).sum())
    return 1.0 - sse / sst


def metric_accuracy(pred_classes: np.ndarray, truth: np.ndarray) -> float:
    pred_classes, truth = np.asarray(pred_classes), np.asarray(truth)
    if pred_classes.shape != truth.shape:
        raise ValueError("length mismatch")
    return float(np.mean(pred_classes == truth))


def _loss(head: MLPHead, x: np.ndarray, y: np.ndarray, kind: str) -> Tensor:
    out = head.forward(x)
    if kind == "regression":
        diff = out - y.reshape(-1, 1)
        return (diff * diff).mean(axis=0).sum()
    logits = out
    nll = logits.logsumexp(axis=1) - logits.gather_rows(y)
    return nll.mean()


def train_head(features: np.ndarray, labels: LabeledDataset, cfg: HeadConfig,
               train_idx: np.ndarray, val_idx: np.ndarray,
               seed: int) -> tuple[MLPHead, float]:
    """Full-batch Adam with early stopping on validation loss.

    Validation is evaluated every cfg.eval_every epochs; patience counts
    evaluations without a new best, so high-lr configs ride out their early
    oscillation instead of freezing at a transient snapshot.  Returns the
    head (restored to its best-validation snapshot) and the best validation
    loss.
    """
    if len(features) != len(labels):
        raise ValueError("features/labels length mismatch")
    y = labels.targets
    if labels.task_kind == "classification":
        present = np.unique(y[train_idx])
        if len(present) < 2:
            raise ValueError("degenerate classification split: single class in train")
        out_dim = labels.class_count
    else:
        out_dim = 1
    head = MLPHead(features.shape[1], out_dim, cfg, seed)
    opt = Adam(head.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    x_train, y_train = features[train_idx], y[train_idx]
    x_val, y_val = features[val_idx], y[val_idx]
    best_val, best_snap, since_best = np.inf, head.snapshot(), 0
    for epoch in range(1, cfg.max_epochs + 1):
        loss = _loss(head, x_train, y_train, labels.task_kind)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if epoch % cfg.eval_every != 0 and epoch != cfg.max_epochs:
            continue
        val = _loss(head, x_val, y_val, labels.task_kind).item()
        if not np.isfinite(val):
            raise FloatingPointError("NaN validation loss in head training")
        if val < best_val:
            best_val, best_snap, since_best = val, head.snapshot(), 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    head.restore(best_snap)
    return head, best_val


def random_search(features: np.ndarray, labels: LabeledDataset, space: SearchSpace,
                  train_idx: np.ndarray, val_idx: np.ndarray) -> HeadConfig:
    """Uniformly sample configs, train each once, return the best by val loss.

    Ties break toward the earliest trial; trials that diverge are skipped
    unless all diverge, which is an error.
    """
    rng = derived_rng(space.seed, "hyperparameter-search")
    best_cfg, best_val = None, np.inf
    failures = []
    for trial in range(space.trial_count):
        cfg = space.sample(rng)
        trial_seed = int(derived_rng(space.seed, f"search-trial-{trial}").integers(2**31))
        try:
            _, val = train_head(features, labels, cfg, train_idx, val_idx, trial_seed)
        except FloatingPointError as exc:
            failures.append(f"trial {trial}: {exc}")
            continue
        if val < best_val:
            best_cfg, best_val = cfg, val
    if best_cfg is None:
        raise RuntimeError("all search trials diverged: " + "; ".join(failures))
    return best_cfg


def evaluate_task(labels: LabeledDataset, features: np.ndarray, split_spec: SplitSpec,
                  space: SearchSpace, repeat_count: int = 10, seed: int = 0,
                  task_name: str = "task") -> EvalReport:
    """Random search once, then repeat_count final trainings with distinct seeds.

    Reports mean and sample (n-1) standard deviation of the test metric; the
    test indices are never consulted by the search or by early stopping.
    """
    train_idx, val_idx, test_idx = split(len(labels), split_spec, seed,
                                         coords=labels.coords)
    best_cfg = random_search(features, labels, space, train_idx, val_idx)
    metric = "r2" if labels.task_kind == "regression" else "accuracy"
    values, seeds = [], []
    for run in range(repeat_count):
        run_seed = int(derived_rng(seed, f"final-run-{run}").integers(2**31))
        seeds.append(run_seed)
        head, _ = train_head(features, labels, best_cfg, train_idx, val_idx, run_seed)
        pred = head.predict(features[test_idx])
        if labels.task_kind == "regression":
            values.append(metric_r2(pred, labels.targets[test_idx]))
        else:
            values.append(metric_accuracy(pred.argmax(axis=1),
                                          labels.targets[test_idx]))
    arr = np.array(values)
    std = float(arr.std(ddof=1)) if repeat_count > 1 else 0.0
    return EvalReport(task=task_name, metric=metric, values=[float(v) for v in values],
                      mean=float(arr.mean()), std=std, config=best_cfg,
                      split=asdict(split_spec), seeds=seeds)


def task_features(labels: LabeledDataset, base: np.ndarray) -> np.ndarray:
    """Concatenate the optional extra-feature block onto the base features."""
    if labels.extra_feats is None:
        return base
    return np.hstack([base, labels.extra_feats])
