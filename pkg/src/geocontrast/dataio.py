"""Dataset formats, the synthetic world generator, splits, and coordinate jitter.

The synthetic world replaces satellite imagery: image features are a smooth,
known function of location (Gaussian bumps on the sphere mixed into feature
space plus noise), and the regression target is a fixed linear readout of the
noiseless bump activations, so the full pipeline is verifiable end to end.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .sphere import GeoCoordinate, normalize_lon

JITTER_DEG = 0.009  # ~1 km shift at the equator
COS_LAT_FLOOR = 0.1


def derived_rng(seed: int, stream: str) -> np.random.Generator:
    """A generator for a named random stream, so stages don't perturb each other."""
    digest = hashlib.sha256(stream.encode()).digest()
    sub = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), sub]))


@dataclass
class PairDataset:
    """Aligned coordinate/image-feature records for contrastive pretraining."""

    coords: np.ndarray  # (n, 2) lon, lat in degrees
    feats: np.ndarray   # (n, k_img)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.feats = np.asarray(self.feats, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError(f"coords must be (n, 2), got {self.coords.shape}")
        if len(self.coords) != len(self.feats):
            raise ValueError("coords and feats length mismatch")
        if len(self.coords) < 2:
            raise ValueError("dataset needs at least 2 records")
        _validate_coords(self.coords)
        if not np.all(np.isfinite(self.feats)):
            raise ValueError("non-finite image feature")

    @property
    def k_img(self) -> int:
        return self.feats.shape[1]

    def __len__(self) -> int:
        return len(self.coords)


@dataclass
class LabeledDataset:
    """Coordinates with a regression target or class id, for downstream tasks."""

    coords: np.ndarray           # (n, 2) lon, lat
    targets: np.ndarray          # (n,) float targets or int class ids
    task_kind: str               # "regression" | "classification"
    class_count: int = 0
    extra_feats: np.ndarray | None = None  # optional (n, p) block appended to inputs

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        _validate_coords(self.coords)
        if self.task_kind == "regression":
            self.targets = np.asarray(self.targets, dtype=np.float64)
            if not np.all(np.isfinite(self.targets)):
                raise ValueError("non-finite regression target")
        elif self.task_kind == "classification":
            self.targets = np.asarray(self.targets, dtype=np.int64)
            if self.class_count < 1:
                raise ValueError("classification needs class_count >= 1")
            if self.targets.min(initial=0) < 0 or \
                    self.targets.max(initial=0) >= self.class_count:
                raise ValueError("class id outside [0, class_count)")
        else:
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        if len(self.coords) != len(self.targets):
            raise ValueError("coords and targets length mismatch")
        if self.extra_feats is not None:
            self.extra_feats = np.asarray(self.extra_feats, dtype=np.float64)
            if len(self.extra_feats) != len(self.coords):
                raise ValueError("extra feature block length mismatch")

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test splitting policy: uniform random or longitude-band holdout."""

    kind: str = "random"                     # "random" | "region-holdout"
    fractions: tuple = (0.3, 0.1, 0.6)       # train, val, test (random kind)
    holdout_lon: tuple = (0.0, 60.0)         # [lo, hi) band held out as test
    fewshot_fraction: float = 0.0            # share of holdout points leaked to train

    def __post_init__(self):
        if self.kind not in ("random", "region-holdout"):
            raise ValueError(f"unknown split kind {self.kind!r}")
        if self.kind == "random":
            if abs(sum(self.fractions) - 1.0) > 1e-9 or min(self.fractions) < 0:
                raise ValueError(f"fractions must be nonnegative and sum to 1: {self.fractions}")
        else:
            lo, hi = self.holdout_lon
            if not lo < hi:
                raise ValueError(f"degenerate holdout interval [{lo}, {hi})")
        if not 0.0 <= self.fewshot_fraction <= 1.0:
            raise ValueError("fewshot_fraction must be in [0, 1]")


@dataclass
class SyntheticWorldSpec:
    """Recipe for a reproducible synthetic world of Gaussian bumps on the sphere."""

    bump_count: int = 16
    bump_width: float = 0.3        # radians; ~17 deg, finer than a coordinate
                                   # MLP can interpolate across a 60 deg gap
    feature_dim: int = 32
    noise_sigma: float = 0.05
    seed: int = 0
    bump_centers: np.ndarray | None = None   # (bump_count, 2) lon/lat; generated if None
    mixing: np.ndarray | None = None          # (bump_count, feature_dim); generated if None
    readout: np.ndarray | None = None         # (bump_count,) unit-norm; generated if None

    def __post_init__(self):
        if self.bump_count < 1 or self.feature_dim < 1:
            raise ValueError("bump_count and feature_dim must be >= 1")
        if self.bump_width <= 0:
            raise ValueError("bump_width must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        rng = derived_rng(self.seed, "world-structure")
        if self.bump_centers is None:
            self.bump_centers = sample_sphere(rng, self.bump_count)
        self.bump_centers = np.asarray(self.bump_centers, dtype=np.float64)
        if self.mixing is None:
            # full row rank required so features determine activations
            for _ in range(100):
                m = rng.standard_normal((self.bump_count, self.feature_dim))
                if np.linalg.matrix_rank(m) == self.bump_count:
                    break
            else:
                raise ValueError("could not draw a full-rank mixing matrix")
            self.mixing = m
        self.mixing = np.asarray(self.mixing, dtype=np.float64)
        if np.linalg.matrix_rank(self.mixing) < self.bump_count:
            raise ValueError("mixing matrix is rank-deficient")
        if self.readout is None:
            r = rng.standard_normal(self.bump_count)
            self.readout = r / np.linalg.norm(r)
        self.readout = np.asarray(self.readout, dtype=np.float64)

    def to_json(self) -> str:
        return json.dumps({
            "bump_count": self.bump_count,
            "bump_width": self.bump_width,
            "feature_dim": self.feature_dim,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "bump_centers": self.bump_centers.tolist(),
            "mixing": self.mixing.tolist(),
            "readout": self.readout.tolist(),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticWorldSpec":
        raw = json.loads(text)
        arrays = {k: np.array(raw[k]) for k in ("bump_centers", "mixing", "readout")
                  if k in raw and raw[k] is not None}
        scalars = {k: raw[k] for k in
                   ("bump_count", "bump_width", "feature_dim", "noise_sigma", "seed")
                   if k in raw}
        return cls(**scalars, **arrays)


def _validate_coords(coords: np.ndarray):
    if not np.all(np.isfinite(coords)):
        raise ValueError("non-finite coordinate")
    lat = coords[:, 1]
    if np.any(lat < -90.0) or np.any(lat > 90.0):
        raise ValueError("latitude outside [-90, 90]")
    coords[:, 0] = np.mod(coords[:, 0] + 180.0, 360.0) - 180.0


def sample_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    """Area-uniform (not lat/lon-uniform) sample of n points; (n, 2) lon/lat degrees."""
    lon = rng.uniform(-180.0, 180.0, size=n)
    lat = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, size=n)))
    return np.column_stack([lon, lat])


def _unit_vectors(coords: np.ndarray) -> np.ndarray:
    lon = np.radians(coords[:, 0])
    lat = np.radians(coords[:, 1])
    return np.column_stack([np.cos(lat) * np.cos(lon),
                            np.cos(lat) * np.sin(lon),
                            np.sin(lat)])


def angular_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle angle in radians between (n,2) and (m,2) lon/lat arrays; (n,m)."""
    dots = _unit_vectors(np.atleast_2d(a)) @ _unit_vectors(np.atleast_2d(b)).T
    return np.arccos(np.clip(dots, -1.0, 1.0))


def bump_activations(coords: np.ndarray, spec: SyntheticWorldSpec) -> np.ndarray:
    """Latent bump activations a_ij = exp(-angdist(c_i, center_j)^2 / (2 width^2))."""
    d = angular_distance(coords, spec.bump_centers)
    return np.exp(-d * d / (2.0 * spec.bump_width**2))


def generate_world(spec: SyntheticWorldSpec, n_points: int) -> tuple[PairDataset, LabeledDataset]:
    """Sample a world: paired coordinate/feature records plus a regression task."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    rng = derived_rng(spec.seed, "world-sample")
    coords = sample_sphere(rng, n_points)
    act = bump_activations(coords, spec)
    feats = act @ spec.mixing
    if spec.noise_sigma > 0:
        feats = feats + spec.noise_sigma * rng.standard_normal(feats.shape)
    targets = act @ spec.readout
    return (PairDataset(coords, feats),
            LabeledDataset(coords.copy(), targets, "regression"))


def jitter(coords: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shift coordinates by up to ~1 km in each axis; (n,2) lon/lat degrees in/out.

    Longitude shifts are scaled by 1/cos(lat) (floored at 0.1) so the ground
    displacement stays roughly isotropic away from the poles.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    dlat = rng.uniform(-JITTER_DEG, JITTER_DEG, size=len(coords))
    dlon = rng.uniform(-JITTER_DEG, JITTER_DEG, size=len(coords))
    cos_lat = np.maximum(np.cos(np.radians(coords[:, 1])), COS_LAT_FLOOR)
    out = np.empty_like(coords)
    out[:, 1] = np.clip(coords[:, 1] + dlat, -90.0, 90.0)
    out[:, 0] = np.mod(coords[:, 0] + dlon / cos_lat + 180.0, 360.0) - 180.0
    return out


def jitter_coordinate(c: GeoCoordinate, rng: np.random.Generator) -> GeoCoordinate:
    lon, lat = jitter(np.array([[c.lon, c.lat]]), rng)[0]
    return GeoCoordinate(normalize_lon(lon), lat)


def split(n: int, spec: SplitSpec, seed: int,
          coords: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic (train, val, test) index arrays forming a partition of range(n).

    Region-holdout puts every point with longitude in the holdout band into
    test, then leaks fewshot_fraction of them (uniformly) back into train; the
    remaining points are divided between train and val using the spec's
    train:val ratio.
    """
    rng = derived_rng(seed, "split")
    if spec.kind == "random":
        perm = rng.permutation(n)
        n_train = round(spec.fractions[0] * n)
        n_val = round(spec.fractions[1] * n)
        if n_train == 0 or (spec.fractions[1] > 0 and n_val == 0) or \
                (spec.fractions[2] > 0 and n - n_train - n_val == 0):
            raise ValueError(f"split of {n} points leaves an empty subset")
        return (np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                np.sort(perm[n_train + n_val:]))
    if coords is None:
        raise ValueError("region-holdout split needs coordinates")
    lo, hi = spec.holdout_lon
    lon = np.mod(coords[:, 0] + 180.0, 360.0) - 180.0
    in_band = (lon >= lo) & (lon < hi)
    holdout = np.flatnonzero(in_band)
    rest = np.flatnonzero(~in_band)
    n_few = round(spec.fewshot_fraction * len(holdout))
    leaked = rng.choice(holdout, size=n_few, replace=False) if n_few else \
        np.empty(0, dtype=np.int64)
    test = np.setdiff1d(holdout, leaked)
    train_frac, val_frac = spec.fractions[0], spec.fractions[1]
    ratio = train_frac / (train_frac + val_frac) if train_frac + val_frac > 0 else 1.0
    perm = rng.permutation(rest)
    n_train = round(ratio * len(rest))
    train = np.sort(np.concatenate([perm[:n_train], leaked]).astype(np.int64))
    val = np.sort(perm[n_train:])
    if len(train) == 0 or len(val) == 0 or len(test) == 0:
        raise ValueError("region-holdout split leaves an empty subset")
    return train, val, test


# -- delimited file formats --------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_pairs(path, dataset: PairDataset):
    with open(path, "w", encoding="utf-8") as fh:
        header = ["lon", "lat"] + [f"f{i}" for i in range(dataset.k_img)]
        fh.write(",".join(header) + "\n")
        for (lon, lat), row in zip(dataset.coords, dataset.feats):
            fh.write(",".join([_fmt(lon), _fmt(lat)] + [_fmt(v) for v in row]) + "\n")


def read_pairs(path) -> PairDataset:
    rows = _read_numeric_csv(path, min_cols=3)
    header, data = rows
    expected = ["lon", "lat"] + [f"f{i}" for i in range(len(header) - 2)]
    if header != expected:
        raise ValueError(f"{path}: malformed pair-file header {header!r}")
    return PairDataset(data[:, :2], data[:, 2:])


def write_labels(path, dataset: LabeledDataset):
    target_col = "target" if dataset.task_kind == "regression" else "class"
    extra = dataset.extra_feats
    with open(path, "w", encoding="utf-8") as fh:
        names = ["lon", "lat"]
        if extra is not None:
            names += [f"x{i}" for i in range(extra.shape[1])]
        fh.write(",".join(names + [target_col]) + "\n")
        for i, (lon, lat) in enumerate(dataset.coords):
            cells = [_fmt(lon), _fmt(lat)]
            if extra is not None:
                cells += [_fmt(v) for v in extra[i]]
            t = dataset.targets[i]
            cells.append(str(int(t)) if dataset.task_kind == "classification" else _fmt(t))
            fh.write(",".join(cells) + "\n")


def read_labels(path) -> LabeledDataset:
    header, data = _read_numeric_csv(path, min_cols=3)
    if header[:2] != ["lon", "lat"] or header[-1] not in ("target", "class"):
        raise ValueError(f"{path}: malformed label-file header {header!r}")
    extra_names = header[2:-1]
    if extra_names != [f"x{i}" for i in range(len(extra_names))]:
        raise ValueError(f"{path}: malformed extra-feature columns {extra_names!r}")
    coords = data[:, :2]
    extra = data[:, 2:-1] if extra_names else None
    raw_t = data[:, -1]
    if header[-1] == "target":
        return LabeledDataset(coords, raw_t, "regression", extra_feats=extra)
    classes = raw_t.astype(np.int64)
    if np.any(classes != raw_t):
        raise ValueError(f"{path}: non-integer class id")
    count = int(classes.max()) + 1 if len(classes) else 0
    return LabeledDataset(coords, classes, "classification",
                          class_count=count, extra_feats=extra)


def _read_numeric_csv(path, min_cols: int):
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line:
            raise ValueError(f"{path}: empty file")
        header = header_line.strip().split(",")
        if len(header) < min_cols:
            raise ValueError(f"{path}: header has too few columns: {header!r}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: ragged row ({len(cells)} cells, "
                    f"expected {len(header)})")
            try:
                values = [float(c) for c in cells]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from exc
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    data = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(header)))
    return header, data
