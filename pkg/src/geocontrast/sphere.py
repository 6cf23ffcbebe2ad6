"""Coordinates on the sphere and the real spherical-harmonics positional encoding.

The basis uses degrees l = 0..l_max-1 with all 2l+1 orders per degree
(dimension l_max**2), fully normalized so the real harmonics are orthonormal
over the unit sphere.  The Condon-Shortley phase is folded into the
normalized Legendre recurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GeoCoordinate:
    """A (longitude, latitude) pair in degrees, lon in [-180, 180), lat in [-90, 90]."""

    lon: float
    lat: float

    def __post_init__(self):
        lon, lat = float(self.lon), float(self.lat)
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise ValueError(f"non-finite coordinate ({lon}, {lat})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        lon = normalize_lon(lon)
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "lat", lat)


def normalize_lon(lon: float) -> float:
    """Wrap a longitude in degrees into [-180, 180)."""
    lon = math.fmod(lon + 180.0, 360.0)
    if lon < 0.0:
        lon += 360.0
    return lon - 180.0


def to_spherical(c: GeoCoordinate) -> tuple[float, float]:
    """Geographic degrees -> (colatitude theta in [0, pi], azimuth phi in [0, 2*pi))."""
    theta = math.pi / 2.0 - math.radians(c.lat)
    phi = math.radians(c.lon % 360.0)
    if phi >= TWO_PI:
        phi -= TWO_PI
    return theta, phi


def coords_to_spherical(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized to_spherical for an (n, 2) array of [lon, lat] degrees."""
    coords = np.asarray(coords, dtype=np.float64)
    theta = np.pi / 2.0 - np.radians(coords[:, 1])
    phi = np.radians(np.mod(coords[:, 0], 360.0))
    phi[phi >= TWO_PI] -= TWO_PI
    return theta, phi


def _legendre_table(l_max: int, x: np.ndarray) -> np.ndarray:
    """Fully normalized associated Legendre values N_l^m(x) for 0 <= m <= l < l_max.

    Returns an array of shape (l_max, l_max, n) indexed [l, m].  The
    normalization makes sqrt(2)*N_l^m(cos th)*cos/sin(m ph) (and N_l^0 alone)
    an orthonormal basis on the sphere; Condon-Shortley phase included.
    The recurrence keeps every intermediate normalized, so there is no
    double-factorial overflow even at large l.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))  # sin(theta)
    P = np.zeros((l_max, l_max, n))
    P[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    # diagonal: N_m^m = -sqrt((2m+1)/(2m)) * s * N_{m-1}^{m-1}
    for m in range(1, l_max):
        P[m, m] = -math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * P[m - 1, m - 1]
    # first off-diagonal: N_{m+1}^m = sqrt(2m+3) * x * N_m^m
    for m in range(0, l_max - 1):
        P[m + 1, m] = math.sqrt(2.0 * m + 3.0) * x * P[m, m]
    # three-term recurrence upward in degree
    for m in range(0, l_max):
        for l in range(m + 2, l_max):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    return P


def normalized_assoc_legendre(l: int, m: int, x: float) -> float:
    """Fully normalized associated Legendre value N_l^m(x), Condon-Shortley included."""
    if m < 0 or m > l:
        raise ValueError(f"order m={m} outside 0..l={l}")
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"argument x={x} outside [-1, 1]")
    table = _legendre_table(l + 1, np.array([float(x)]))
    return float(table[l, m, 0])


def sh_basis_batch(coords: np.ndarray, l_max: int) -> np.ndarray:
    """Real spherical-harmonics features for an (n, 2) array of [lon, lat] degrees.

    Output shape (n, l_max**2), degree-major, orders -l..+l within each degree.
    Streams over orders m, so memory stays O(n) even for large l_max.
    """
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    theta, phi = coords_to_spherical(coords)
    x = np.cos(theta)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    n = x.shape[0]
    out = np.empty((n, l_max * l_max))
    sqrt2 = math.sqrt(2.0)
    diag = np.full(n, 1.0 / math.sqrt(4.0 * math.pi))  # N_m^m, starting at m=0
    for m in range(l_max):
        if m > 0:
            diag = -math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * diag
        if m == 0:
            cos_m = None
            sin_m = None
        else:
            cos_m = np.cos(m * phi)
            sin_m = np.sin(m * phi)

        def emit(l, p):
            base = l * l + l
            if m == 0:
                out[:, base] = p
            else:
                out[:, base + m] = sqrt2 * p * cos_m
                out[:, base - m] = sqrt2 * p * sin_m

        p_prev2 = diag
        emit(m, p_prev2)
        if m + 1 < l_max:
            p_prev1 = math.sqrt(2.0 * m + 3.0) * x * diag
            emit(m + 1, p_prev1)
            for l in range(m + 2, l_max):
                a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
                p_cur = a * (x * p_prev1 - b * p_prev2)
                emit(l, p_cur)
                p_prev2, p_prev1 = p_prev1, p_cur
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite spherical-harmonics value")
    return out


def sh_basis(c: GeoCoordinate, l_max: int) -> np.ndarray:
    """Real spherical-harmonics feature vector of length l_max**2 for one coordinate."""
    return sh_basis_batch(np.array([[c.lon, c.lat]]), l_max)[0]
