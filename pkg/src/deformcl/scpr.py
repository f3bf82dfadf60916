"""Straightened curved planar reformation.

Cross-sections perpendicular to a centerline are resampled into a
straightened volume whose central ray is the centerline itself. Frames
are transported along the curve by the double-reflection
rotation-minimizing method, which stays defined on straight segments and
does not twist at inflections the way Frenet frames do.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphline import Polyline, resample_arclength, smooth_polyline
from .volume import Volume, Mask
from .fields import sample_trilinear


@dataclass(frozen=True)
class FrameSequence:
    """Orthonormal (tangent, normal, binormal) triads along a curve."""

    positions: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    binormals: np.ndarray

    def __post_init__(self):
        for name in ("positions", "tangents", "normals", "binormals"):
            arr = np.ascontiguousarray(
                np.asarray(getattr(self, name), dtype=np.float64)
            )
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        t, n, b = self.tangents, self.normals, self.binormals
        if not (
            np.allclose(np.sum(t * n, axis=1), 0, atol=1e-9)
            and np.allclose(np.sum(t * b, axis=1), 0, atol=1e-9)
            and np.allclose(np.sum(n * b, axis=1), 0, atol=1e-9)
            and np.allclose(np.linalg.norm(t, axis=1), 1, atol=1e-9)
            and np.allclose(np.linalg.norm(n, axis=1), 1, atol=1e-9)
            and np.allclose(np.linalg.norm(b, axis=1), 1, atol=1e-9)
        ):
            raise ValueError("frames are not orthonormal")
        if len(n) > 1 and np.any(np.sum(n[1:] * n[:-1], axis=1) <= 0):
            raise ValueError("consecutive normals flip sign")

    def __len__(self) -> int:
        return len(self.positions)

    def rotated(self, angle_deg: float) -> "FrameSequence":
        """Rotate the (normal, binormal) pair about the tangent."""
        a = np.deg2rad(angle_deg)
        n = np.cos(a) * self.normals + np.sin(a) * self.binormals
        b = -np.sin(a) * self.normals + np.cos(a) * self.binormals
        return FrameSequence(self.positions, self.tangents, n, b)


def _initial_normal(t0: np.ndarray) -> np.ndarray:
    # world axis least aligned with the first tangent, then orthogonalized
    axis = int(np.argmin(np.abs(t0)))
    e = np.zeros(3)
    e[axis] = 1.0
    n = e - np.dot(e, t0) * t0
    return n / np.linalg.norm(n)


def rm_frames(p: Polyline, spacing: float = 1.0) -> FrameSequence:
    """Arc-length resampled rotation-minimizing frames along a polyline.

    Tangents come from central differences; normals are propagated with
    the double-reflection method from a deterministic initial normal.
    """
    if p.length() < 2 * spacing:
        raise ValueError("polyline shorter than two frame spacings")
    rs = resample_arclength(p, spacing)
    pos = rs.points
    tangents = np.empty_like(pos)
    tangents[1:-1] = pos[2:] - pos[:-2]
    tangents[0] = pos[1] - pos[0]
    tangents[-1] = pos[-1] - pos[-2]
    norms = np.linalg.norm(tangents, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("degenerate tangent")
    tangents /= norms

    normals = np.empty_like(pos)
    normals[0] = _initial_normal(tangents[0])
    for i in range(len(pos) - 1):
        # double reflection: reflect frame i across the chord bisector,
        # then across the bisector of the reflected and next tangents
        r1 = pos[i + 1] - pos[i]
        c1 = np.dot(r1, r1)
        nl = normals[i] - (2.0 / c1) * np.dot(r1, normals[i]) * r1
        tl = tangents[i] - (2.0 / c1) * np.dot(r1, tangents[i]) * r1
        r2 = tangents[i + 1] - tl
        c2 = np.dot(r2, r2)
        if c2 > 1e-30:
            nl = nl - (2.0 / c2) * np.dot(r2, nl) * r2
        # re-orthogonalize against accumulated rounding
        nl = nl - np.dot(nl, tangents[i + 1]) * tangents[i + 1]
        normals[i + 1] = nl / np.linalg.norm(nl)
    binormals = np.cross(tangents, normals)
    binormals /= np.linalg.norm(binormals, axis=1, keepdims=True)
    return FrameSequence(positions=pos, tangents=tangents, normals=normals,
                         binormals=binormals)


@dataclass(frozen=True)
class ScprResult:
    straightened: Volume
    longitudinal: np.ndarray     # (width, n_frames) slab at the binormal center
    clamped_fraction: float      # samples that fell outside the volume


def scpr_resample(v: Volume, frames: FrameSequence, width: int,
                  pixel_spacing: float = 1.0) -> ScprResult:
    """Resample perpendicular cross-sections into a straightened volume.

    Output voxel [u, w, s] samples the input at
    position(s) + (u-c)*normal(s)*pixel_spacing + (w-c)*binormal(s)*pixel_spacing,
    c = (width-1)/2, so the centerline maps to the central ray. Frame
    positions are in physical units (voxel coords times spacing); samples
    outside the volume clamp to the border and are counted.
    """
    if width < 1 or width % 2 == 0:
        raise ValueError("width must be odd so the center ray is the centerline")
    c = (width - 1) / 2.0
    offsets = (np.arange(width) - c) * pixel_spacing
    n_frames = len(frames)
    spacing = np.asarray(v.spacing, dtype=np.float64)
    dims = np.asarray(v.dims, dtype=np.float64)

    # physical sample positions, shape (width, width, n_frames, 3)
    pos = frames.positions[None, None, :, :]
    nrm = frames.normals[None, None, :, :]
    bin_ = frames.binormals[None, None, :, :]
    u = offsets[:, None, None, None]
    w = offsets[None, :, None, None]
    phys = pos + u * nrm + w * bin_
    vox = phys / spacing
    flat = vox.reshape(-1, 3)
    clamped = np.mean(np.any((flat < 0) | (flat > dims - 1), axis=1))
    values, _ = sample_trilinear(v, flat)
    out = values.reshape(width, width, n_frames).astype(np.float32)
    straightened = Volume(
        data=out,
        spacing=(pixel_spacing, pixel_spacing, float(
            np.linalg.norm(frames.positions[1] - frames.positions[0])
        ) if n_frames > 1 else pixel_spacing),
    )
    longitudinal = out[:, int(c), :]
    return ScprResult(straightened=straightened, longitudinal=longitudinal,
                      clamped_fraction=float(clamped))


def scpr_from_centerline(v: Volume, centerline: Polyline, width: int = 15,
                         sample_spacing: float = 1.0,
                         pixel_spacing: float = 1.0,
                         angle_deg: float = 0.0,
                         smooth_arc: float = 0.0) -> ScprResult:
    """Frames + resampling in one call; centerline given in voxel coords.

    smooth_arc > 0 applies moving-average smoothing over roughly that many
    voxels of arc first; deformed centerlines carry sub-voxel jitter that
    would otherwise fold the frame transport.
    """
    if smooth_arc > 0:
        mean_seg = float(centerline.segment_lengths().mean())
        window = int(round(smooth_arc / max(mean_seg, 1e-9)))
        centerline = smooth_polyline(centerline, window | 1)
    phys = Polyline(
        points=centerline.points * np.asarray(v.spacing, dtype=np.float64),
        space=centerline.space, label=centerline.label,
    )
    frames = rm_frames(phys, spacing=sample_spacing)
    if angle_deg:
        frames = frames.rotated(angle_deg)
    return scpr_resample(v, frames, width=width, pixel_spacing=pixel_spacing)


def write_pgm(image: np.ndarray, path, lo: float = None, hi: float = None) -> None:
    """8-bit binary PGM export with min/max (or explicit) windowing."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM export needs a 2D image")
    lo = float(img.min()) if lo is None else float(lo)
    hi = float(img.max()) if hi is None else float(hi)
    if hi <= lo:
        hi = lo + 1.0
    scaled = np.clip((img - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + scaled.tobytes())
