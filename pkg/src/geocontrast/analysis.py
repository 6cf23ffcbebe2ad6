"""Embedding-space diagnostics: cosine-similarity maps against a reference
location, principal component analysis, and CSV export of both."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pretrain import embed
from .siren import LocationEncoder
from .sphere import GeoCoordinate


@dataclass
class SimilarityGrid:
    reference: GeoCoordinate
    resolution: float
    lons: np.ndarray     # cell-center longitudes, ascending
    lats: np.ndarray     # cell-center latitudes, ascending
    values: np.ndarray   # (n_lat, n_lon) cosine similarities


@dataclass
class PCAResult:
    components: np.ndarray               # (d, k) orthonormal columns
    explained_variance_ratio: np.ndarray  # (d,) nonincreasing, sums to 1
    projected: np.ndarray                 # (n, k) scores
    mean: np.ndarray                      # (d,) feature means


def grid_cell_centers(resolution: float) -> tuple[np.ndarray, np.ndarray]:
    if resolution <= 0 or abs(360.0 / resolution - round(360.0 / resolution)) > 1e-9:
        raise ValueError(f"resolution {resolution} must divide 360 evenly")
    lons = np.arange(-180.0, 180.0, resolution) + resolution / 2.0
    lats = np.arange(-90.0, 90.0, resolution) + resolution / 2.0
    return lons, lats


def similarity_map(encoder: LocationEncoder, ref: GeoCoordinate, l_max: int,
                   resolution: float = 1.0) -> SimilarityGrid:
    """Cosine similarity of every grid-cell-center embedding to the reference."""
    lons, lats = grid_cell_centers(resolution)
    grid_lon, grid_lat = np.meshgrid(lons, lats)
    coords = np.column_stack([grid_lon.ravel(), grid_lat.ravel()])
    emb = embed(encoder, coords, l_max)
    ref_emb = embed(encoder, np.array([[ref.lon, ref.lat]]), l_max)[0]
    norms = np.linalg.norm(emb, axis=1)
    ref_norm = np.linalg.norm(ref_emb)
    if ref_norm < 1e-12 or np.any(norms < 1e-12):
        raise ValueError("zero-norm embedding on the grid")
    values = (emb @ ref_emb) / (norms * ref_norm)
    return SimilarityGrid(ref, resolution, lons, lats,
                          values.reshape(len(lats), len(lons)))


def pca(embeddings: np.ndarray, k: int) -> PCAResult:
    """PCA of mean-centered embeddings via a symmetric eigensolve.

    Each component's largest-magnitude entry is made positive so the output
    is deterministic; ratios are eigenvalue shares of the total variance.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 rows")
    if not 1 <= k <= d:
        raise ValueError(f"k={k} outside 1..{d}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    total = eigvals.sum()
    if total <= 0.0:
        raise ValueError("zero total variance")
    flip = np.sign(eigvecs[np.abs(eigvecs).argmax(axis=0), np.arange(d)])
    flip[flip == 0] = 1.0
    eigvecs = eigvecs * flip
    return PCAResult(components=eigvecs[:, :k],
                     explained_variance_ratio=eigvals / total,
                     projected=centered @ eigvecs[:, :k],
                     mean=mean)


# -- CSV export ----------------------------------------------------------------

def export_similarity_grid(grid: SimilarityGrid, path):
    """Rows in row-major lat-then-lon order, after a commented reference header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# ref_lon={grid.reference.lon!r},ref_lat={grid.reference.lat!r},"
                 f"resolution={grid.resolution!r}\n")
        fh.write("lon,lat,similarity\n")
        for i, lat in enumerate(grid.lats):
            for j, lon in enumerate(grid.lons):
                fh.write(f"{float(lon)!r},{float(lat)!r},{float(grid.values[i, j])!r}\n")


def read_similarity_grid(path) -> SimilarityGrid:
    with open(path, "r", encoding="utf-8") as fh:
        meta_line = fh.readline().strip()
        if not meta_line.startswith("# "):
            raise ValueError(f"{path}: missing grid metadata header")
        meta = dict(kv.split("=") for kv in meta_line[2:].split(","))
        ref = GeoCoordinate(float(meta["ref_lon"]), float(meta["ref_lat"]))
        resolution = float(meta["resolution"])
        if fh.readline().strip() != "lon,lat,similarity":
            raise ValueError(f"{path}: malformed grid column header")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    lons, lats = grid_cell_centers(resolution)
    values = np.array([float(r[2]) for r in rows]).reshape(len(lats), len(lons))
    return SimilarityGrid(ref, resolution, lons, lats, values)


def export_pca(result: PCAResult, path, coords: np.ndarray | None = None,
               scores_path=None):
    """Ratio CSV, plus an optional lon,lat,pc1..pck scores file."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("component_index,explained_variance_ratio\n")
        for i, r in enumerate(result.explained_variance_ratio):
            fh.write(f"{i},{float(r)!r}\n")
    if scores_path is not None:
        if coords is None:
            raise ValueError("scores export needs coordinates")
        k = result.projected.shape[1]
        with open(scores_path, "w", encoding="utf-8") as fh:
            fh.write("lon,lat," + ",".join(f"pc{i + 1}" for i in range(k)) + "\n")
            for (lon, lat), row in zip(coords, result.projected):
                fh.write(",".join([repr(float(lon)), repr(float(lat))]
                                  + [repr(float(v)) for v in row]) + "\n")
