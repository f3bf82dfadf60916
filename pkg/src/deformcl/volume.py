"""Dense volume and mask containers with bit-exact two-file I/O.

A volume on disk is a pair ``<name>.json`` + ``<name>.raw``: a small JSON
header (dims, spacing, dtype, layout) and the raw little-endian voxel
payload with x varying fastest (linear index ``i + nx*(j + ny*k)``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER_SUFFIX = ".json"
RAW_SUFFIX = ".raw"
LAYOUT = "xyz-row-major"

_DTYPE_TAGS = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


@dataclass(frozen=True)
class Volume:
    """Dense 3D scalar grid.

    Attributes:
        data: array of shape (nx, ny, nz), indexed data[i, j, k]; float32
            for intensity/distance volumes, uint8 for masks.
        spacing: (sx, sy, sz) mm per voxel. All distances elsewhere in the
            package are in voxel units; spacing matters only for physical
            resampling (SCPR).
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"degenerate dims {arr.shape}")
        if arr.dtype not in (np.float32, np.uint8):
            arr = arr.astype(np.float32)
        sp = tuple(float(s) for s in self.spacing)
        if len(sp) != 3 or any(s <= 0 for s in sp):
            raise ValueError(f"spacing components must be > 0, got {self.spacing}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False  # volumes are immutable after construction
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", sp)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def dtype_tag(self) -> str:
        return "u8" if self.data.dtype == np.uint8 else "f32"


@dataclass(frozen=True)
class Mask(Volume):
    """Binary volume; every voxel is 0 or 1 (stored uint8)."""

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "data", arr)
        super().__post_init__()
        if self.data.dtype != np.uint8:
            raise ValueError("mask payload must be uint8")
        bad = (self.data > 1).sum()
        if bad:
            raise ValueError(f"mask contains {bad} voxels outside {{0,1}}")

    def as_bool(self) -> np.ndarray:
        return self.data.astype(bool)


def _container_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (HEADER_SUFFIX, RAW_SUFFIX):
        p = p.with_suffix("")
    return p.with_suffix(HEADER_SUFFIX), p.with_suffix(RAW_SUFFIX)


def save_volume(v: Volume, path) -> None:
    """Write the JSON header + raw payload pair for ``v``.

    The payload is little-endian with x fastest; load_volume inverts this
    bit-exactly.
    """
    header_path, raw_path = _container_paths(path)
    header = {
        "dims": list(v.dims),
        "spacing": list(v.spacing),
        "dtype": v.dtype_tag,
        "order": LAYOUT,
    }
    header_path.write_text(json.dumps(header, sort_keys=True) + "\n")
    payload = np.asarray(v.data, dtype=_DTYPE_TAGS[v.dtype_tag])
    raw_path.write_bytes(payload.ravel(order="F").tobytes())


def load_volume(path) -> Volume:
    """Read a volume container; u8 payloads come back as Mask.

    Raises FileNotFoundError for a missing pair member and ValueError for a
    corrupt header, unknown dtype, or a payload whose length disagrees with
    the header dims.
    """
    header_path, raw_path = _container_paths(path)
    if not header_path.exists():
        raise FileNotFoundError(str(header_path))
    if not raw_path.exists():
        raise FileNotFoundError(str(raw_path))
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"corrupt header {header_path}: {e}") from e
    for key in ("dims", "spacing", "dtype", "order"):
        if key not in header:
            raise ValueError(f"header {header_path} missing key {key!r}")
    if header["order"] != LAYOUT:
        raise ValueError(f"unsupported layout {header['order']!r}")
    tag = header["dtype"]
    if tag not in _DTYPE_TAGS:
        raise ValueError(f"unknown dtype tag {tag!r}")
    dims = tuple(int(d) for d in header["dims"])
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"bad dims {header['dims']}")
    dtype = _DTYPE_TAGS[tag]
    payload = raw_path.read_bytes()
    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(payload) != expected:
        raise ValueError(
            f"payload length mismatch for {raw_path}: "
            f"got {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")
    spacing = tuple(float(s) for s in header["spacing"])
    if tag == "u8":
        return Mask(data=data, spacing=spacing)
    return Volume(data=data, spacing=spacing)


def binarize(v: Volume, threshold: float) -> Mask:
    """Threshold a float volume: output 1 where value >= threshold."""
    if v.data.dtype != np.float32:
        raise ValueError("binarize expects a float32 volume")
    return Mask(data=(v.data >= threshold).astype(np.uint8), spacing=v.spacing)
