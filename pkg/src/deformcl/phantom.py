"""Synthetic tubular phantoms with analytically known geometry.

Every acceptance-style check in the package grounds out here: curves with
closed-form centerlines are swept into masks and noisy intensity volumes,
so errors can be measured against exact ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .fields import voxel_centers
from .graphline import Polyline, resample_arclength
from .volume import Mask, Volume

KINDS = ("straight", "helix", "coswave", "ring", "bifurcation")

DENSE_SPACING = 0.1        # curve sampling step used for rasterization
GT_SPACING = 0.5           # arc spacing of the emitted ground-truth centerline
BORDER_MARGIN = 2.0        # required clearance beyond the tube radius


@dataclass(frozen=True)
class CurveSpec:
    """Parameters of one synthetic tube.

    radius is either a constant or a (start, end) pair tapered linearly
    along arc length. The curve must stay radius + 2 voxels away from the
    volume border.
    """

    kind: str = "helix"
    dims: tuple = (64, 64, 64)
    radius: float | tuple = 3.0
    noise_sigma: float = 0.0
    seed: int = 0
    axis: int = 2             # straight: which axis the tube runs along
    helix_radius: float = 18.0
    pitch: float = 40.0       # helix: z advance per turn
    turns: float = 1.0
    amplitude: float = 8.0    # coswave
    cycles: float = 1.5       # coswave
    ring_radius: float = 18.0
    branch_angle: float = 40.0  # bifurcation, degrees between branches

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if min(self.dims) < 8:
            raise ValueError("phantom volume too small")
        if self.max_radius() < 1.5:
            raise ValueError("tube radius must be >= 1.5 voxels")

    def radius_pair(self) -> tuple[float, float]:
        if np.isscalar(self.radius):
            return float(self.radius), float(self.radius)
        r0, r1 = self.radius
        return float(r0), float(r1)

    def max_radius(self) -> float:
        return max(self.radius_pair())

    def radius_at(self, frac) -> np.ndarray:
        r0, r1 = self.radius_pair()
        return r0 + (r1 - r0) * np.asarray(frac, dtype=np.float64)


def _center(spec: CurveSpec) -> np.ndarray:
    return (np.asarray(spec.dims, dtype=np.float64) - 1.0) / 2.0


def _margin(spec: CurveSpec) -> float:
    return spec.max_radius() + BORDER_MARGIN


def _check_bounds(spec: CurveSpec, pts: np.ndarray) -> None:
    lo = _margin(spec)
    hi = np.asarray(spec.dims, dtype=np.float64) - 1.0 - lo
    if np.any(pts < lo - 1e-9) or np.any(pts > hi + 1e-9):
        raise ValueError("curve comes closer than radius + 2 voxels to the border")


def _curve_points(spec: CurveSpec, t: np.ndarray) -> np.ndarray:
    c = _center(spec)
    n = np.asarray(spec.dims, dtype=np.float64)
    lo = _margin(spec)
    if spec.kind == "straight":
        p = np.tile(c, (len(t), 1))
        p[:, spec.axis] = lo + t * (n[spec.axis] - 1.0 - 2 * lo)
        return p
    if spec.kind == "helix":
        ang = 2.0 * np.pi * spec.turns * t
        span = spec.pitch * spec.turns
        z0 = c[2] - span / 2.0
        return np.stack([
            c[0] + spec.helix_radius * np.cos(ang),
            c[1] + spec.helix_radius * np.sin(ang),
            z0 + span * t,
        ], axis=1)
    if spec.kind == "coswave":
        p = np.tile(c, (len(t), 1))
        p[:, 0] = lo + t * (n[0] - 1.0 - 2 * lo)
        p[:, 1] = c[1] + spec.amplitude * np.cos(2.0 * np.pi * spec.cycles * t)
        return p
    if spec.kind == "ring":
        ang = 2.0 * np.pi * t
        return np.stack([
            c[0] + spec.ring_radius * np.cos(ang),
            c[1] + spec.ring_radius * np.sin(ang),
            np.full(len(t), c[2]),
        ], axis=1)
    raise ValueError(f"gen_curve does not handle kind {spec.kind!r}")


def gen_curve(spec: CurveSpec, samples: int = 400) -> Polyline:
    """Sample the analytic centerline at equal parameter steps.

    For the bifurcation phantom this is the trunk plus the first branch;
    gen_branches returns both branch paths.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    if spec.kind == "bifurcation":
        return gen_branches(spec, samples)[0]
    t = np.linspace(0.0, 1.0, samples)
    pts = _curve_points(spec, t)
    _check_bounds(spec, pts)
    return Polyline(points=pts, space="voxel")


def gen_branches(spec: CurveSpec, samples: int = 400) -> list[Polyline]:
    """Both root-to-tip paths of the bifurcation phantom."""
    if spec.kind != "bifurcation":
        return [gen_curve(spec, samples)]
    c = _center(spec)
    n = np.asarray(spec.dims, dtype=np.float64)
    lo = _margin(spec)
    half = np.deg2rad(spec.branch_angle) / 2.0
    start = np.array([lo, c[1], c[2]])
    split = np.array([c[0], c[1], c[2]])
    reach = n[0] - 1.0 - lo - c[0]
    dy = reach * np.tan(half)
    tips = [
        np.array([n[0] - 1.0 - lo, c[1] + dy, c[2]]),
        np.array([n[0] - 1.0 - lo, c[1] - dy, c[2]]),
    ]
    half_n = max(samples // 2, 2)
    branches = []
    for tip in tips:
        trunk = start + (split - start) * np.linspace(0, 1, half_n)[:, None]
        arm = split + (tip - split) * np.linspace(0, 1, half_n)[1:, None]
        pts = np.vstack([trunk, arm])
        _check_bounds(spec, pts)
        branches.append(Polyline(points=pts, space="voxel"))
    return branches


def _dense_curve(curves: list[Polyline]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated dense samples of all branches + per-sample arc fraction."""
    pts = []
    fracs = []
    for c in curves:
        dense = resample_arclength(c, DENSE_SPACING)
        arc = dense.arc_positions()
        pts.append(dense.points)
        fracs.append(arc / arc[-1])
    return np.vstack(pts), np.concatenate(fracs)


def rasterize_tube(spec: CurveSpec, curve):
    """Sweep the tube: (intensity volume, mask, ground-truth centerline).

    The mask is 1 where the voxel center lies within the (possibly
    tapered) radius of the densely resampled curve; intensity is 1 inside
    with a one-voxel linear falloff at the wall, plus optional Gaussian
    noise clipped to [0, 1]. With zero noise, thresholding the intensity
    at 0.5 reproduces the mask exactly. Accepts one Polyline or a list
    (bifurcations); the ground truth comes back in the same shape,
    resampled at half-voxel arc spacing.
    """
    curves = list(curve) if isinstance(curve, (list, tuple)) else [curve]
    single = not isinstance(curve, (list, tuple))
    dense, frac = _dense_curve(curves)
    _check_bounds(spec, dense)
    centers = voxel_centers(spec.dims)
    dist, nearest = cKDTree(dense).query(centers)
    radius = spec.radius_at(frac[nearest])
    inside = dist <= radius
    level = np.clip(radius + 0.5 - dist, 0.0, 1.0)

    # voxel_centers orders x fastest, so reshape with Fortran order
    mask = inside.astype(np.uint8).reshape(spec.dims, order="F")
    intensity = level.reshape(spec.dims, order="F").astype(np.float64)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        intensity = intensity + rng.normal(0.0, spec.noise_sigma, size=spec.dims)
    intensity = np.clip(intensity, 0.0, 1.0).astype(np.float32)

    gt = [resample_arclength(c, GT_SPACING) for c in curves]
    return (
        Volume(data=intensity),
        Mask(data=mask),
        gt[0] if single else gt,
    )


def make_phantom(spec: CurveSpec, samples: int = 400):
    """Convenience wrapper: generate the curve(s) and rasterize in one call."""
    if spec.kind == "bifurcation":
        return rasterize_tube(spec, gen_branches(spec, samples))
    return rasterize_tube(spec, gen_curve(spec, samples))
