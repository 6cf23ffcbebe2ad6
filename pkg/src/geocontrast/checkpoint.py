"""Binary checkpoint format for the location encoder, projection and temperature.

Layout (little-endian): magic "LENC1"; u32 header ints (l_max, input_dim,
hidden_dim, hidden_layers, output_dim, k_img, tau_trainable flag); f64 omega0
and log_tau; u32 tensor count; then each tensor as (rows u32, cols u32,
rows*cols f64).  A JSON sidecar at <path>.json carries seed, L, d and
training metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autograd import parameter
from .contrastive import ImageProjection, Temperature
from .siren import LocationEncoder, SirenConfig

MAGIC = b"LENC1"


class CheckpointError(Exception):
    pass


def save_checkpoint(path, encoder: LocationEncoder, projection: ImageProjection,
                    temperature: Temperature, l_max: int, metadata: dict | None = None):
    cfg = encoder.config
    tensors = []
    for w, b in encoder.layers:
        tensors.append(w.data)
        tensors.append(b.data.reshape(1, -1))
    tensors.append(projection.weight.data)
    tensors.append(projection.bias.data.reshape(1, -1))
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<7I", l_max, cfg.input_dim, cfg.hidden_dim,
                        cfg.hidden_layers, cfg.output_dim, projection.k_img,
                        int(temperature.trainable))
    blob += struct.pack("<2d", cfg.omega0, float(temperature.log_tau.data))
    blob += struct.pack("<I", len(tensors))
    for t in tensors:
        rows, cols = t.shape
        blob += struct.pack("<2I", rows, cols)
        blob += np.ascontiguousarray(t, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))
    sidecar = {"format": MAGIC.decode(), "l_max": l_max, "d": cfg.output_dim}
    sidecar.update(metadata or {})
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))


def load_checkpoint(path) -> tuple[LocationEncoder, ImageProjection, Temperature, int, dict]:
    """Returns (encoder, projection, temperature, l_max, sidecar_metadata)."""
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    if blob[:5] != MAGIC:
        raise CheckpointError(
            f"{path}: bad magic {blob[:5]!r}, expected {MAGIC!r} (version mismatch?)")
    off = 5

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, view, off)
        off += size
        return vals

    l_max, input_dim, hidden_dim, hidden_layers, output_dim, k_img, tau_trainable = \
        take("<7I")
    omega0, log_tau = take("<2d")
    (count,) = take("<I")
    cfg = SirenConfig(input_dim, hidden_dim, hidden_layers, output_dim, omega0)
    expected = 2 * (hidden_layers + 1) + 2
    if count != expected:
        raise CheckpointError(f"{path}: tensor count {count}, expected {expected}")
    tensors = []
    for _ in range(count):
        rows, cols = take("<2I")
        nbytes = rows * cols * 8
        if off + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        t = np.frombuffer(view, dtype="<f8", count=rows * cols, offset=off)
        off += nbytes
        tensors.append(np.array(t, dtype=np.float64).reshape(rows, cols))
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    for t in tensors:
        if not np.all(np.isfinite(t)):
            raise CheckpointError(f"{path}: non-finite parameter value")
    layers = []
    for i in range(hidden_layers + 1):
        layers.append((parameter(tensors[2 * i]), parameter(tensors[2 * i + 1][0])))
    encoder = LocationEncoder(cfg, layers)  # validates shape chaining
    proj_w, proj_b = tensors[-2], tensors[-1][0]
    if proj_w.shape != (k_img, output_dim) or proj_b.shape != (output_dim,):
        raise CheckpointError(f"{path}: projection shape mismatch")
    projection = ImageProjection(parameter(proj_w), parameter(proj_b))
    temperature = Temperature(trainable=bool(tau_trainable))
    temperature.log_tau.data = np.array(log_tau, dtype=np.float64)  # bit-exact round trip
    sidecar_path = Path(str(path) + ".json")
    metadata = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
    return encoder, projection, temperature, l_max, metadata
