"""Cascaded centerline deformation by energy descent.

A chain template is pulled onto a target tubular structure by minimizing
three energies over its point positions: a patch-local bidirectional
chamfer term against ground-truth centerline points, a signed-distance
term that rewards centrality, and a squared-edge-length regularizer. The
offset applied at each inner step comes from a pluggable predictor; the
default one is plain clamped gradient descent on the weighted total, so a
learned predictor can be swapped in behind the same interface.

All optimization runs on coordinates normalized to [0, 1] per axis; patch
extents are specified in voxels and converted, and the distance grid is
sampled in voxel space with the chain rule applied to its gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .fields import (
    NORMALIZED,
    SdfGrid,
    _axis_scale,
    normalized_to_voxel,
    sample_trilinear,
    voxel_to_normalized,
)
from .graphline import Polyline, unpool_points
from .skeleton import VoxelSet


class DivergenceError(RuntimeError):
    """Raised when an inner step produces a non-finite energy or offset."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class DeformConfig:
    """Cascade hyper-parameters; defaults follow the reference settings."""

    stages: int = 4
    inner_steps: int = 25
    step_size: float = 0.01        # eta, normalized units
    max_step: float = 0.05         # per-point per-step clamp, inf-norm
    lambda_chamfer: float = 30.0
    lambda_sdf: float = 0.5
    lambda_reg: float = 60.0
    stage_weights: tuple = (0.05, 0.60, 0.95, 1.00)
    patch_count: tuple = (60, 80)
    patch_size: float = 32.0       # M, voxels
    sdf_scale: float = 1.0
    seed: int = 0
    unpool_final: bool = True

    def __post_init__(self):
        if self.stages < 1 or self.inner_steps < 1:
            raise ValueError("stages and inner_steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not (0 < self.max_step < 1):
            raise ValueError("max_step must lie in (0, 1)")
        if len(self.stage_weights) != self.stages:
            raise ValueError(
                f"need {self.stages} stage weights, got {len(self.stage_weights)}"
            )
        lo, hi = self.patch_count
        if lo < 1 or hi < lo:
            raise ValueError(f"bad patch_count range {self.patch_count}")
        if self.patch_size <= 0:
            raise ValueError("patch_size must be positive")


@dataclass(frozen=True)
class PatchSet:
    """Axis-aligned sampling cubes centered on ground-truth points."""

    centers: np.ndarray     # (m, 3), in `space` coordinates
    half_size: np.ndarray   # (3,) per-axis half extent, same space
    space: str = NORMALIZED
    seed: int = 0

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.centers, dtype=np.float64))
        h = np.ascontiguousarray(
            np.broadcast_to(np.asarray(self.half_size, dtype=np.float64), (3,)).copy()
        )
        if c.ndim != 2 or c.shape[1] != 3 or len(c) == 0:
            raise ValueError("patch centers must be a nonempty (m, 3) array")
        if np.any(h <= 0):
            raise ValueError("patch size must be positive")
        c.flags.writeable = False
        h.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "half_size", h)

    def __len__(self) -> int:
        return len(self.centers)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict-interior membership, (n_points, n_patches) bool."""
        d = np.abs(points[:, None, :] - self.centers[None, :, :])
        return np.all(d < self.half_size, axis=2)


@dataclass(frozen=True)
class EnergyReport:
    """One energy evaluation: raw terms, weighted total, point gradients."""

    chamfer: float
    sdf: float
    reg: float
    total: float
    gradients: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.total):
            raise DivergenceError(f"non-finite energy total {self.total}")


@dataclass
class StageTrace:
    stage: int
    weight: float
    input_points: np.ndarray
    output_points: np.ndarray = None
    reports: list = field(default_factory=list)


@dataclass
class DeformTrace:
    """Per-stage record of the cascade (points in voxel space)."""

    stages: list = field(default_factory=list)

    def weighted_total(self) -> float:
        """Stage-weighted sum of final energies, for cross-run comparison."""
        return float(
            sum(s.weight * s.reports[-1].total for s in self.stages if s.reports)
        )


def _as_points(points) -> np.ndarray:
    if isinstance(points, VoxelSet):
        return points.as_points()
    if isinstance(points, Polyline):
        return np.asarray(points.points, dtype=np.float64)
    return np.asarray(points, dtype=np.float64).reshape(-1, 3)


def fps(points, m: int, seed=0) -> np.ndarray:
    """Greedy farthest-point sampling indices.

    The first index is drawn from the seed; every next index maximizes the
    minimum distance to the already-chosen set, ties broken by lowest index.
    """
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        raise ValueError("fps on an empty point set")
    if not (1 <= m <= n):
        raise ValueError(f"cannot sample {m} of {n} points")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    first = int(rng.integers(n))
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = first
    dmin = np.linalg.norm(pts - pts[first], axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(dmin))  # argmax returns the lowest tied index
        chosen[i] = nxt
        dmin = np.minimum(dmin, np.linalg.norm(pts - pts[nxt], axis=1))
    return chosen


def sample_patches(gt_points, count_range=(60, 80), patch_size: float = 32.0,
                   seed: int = 0, dims=None) -> PatchSet:
    """Draw |patches| ~ U(count_range) FPS-centered cubes of side patch_size.

    patch_size is in voxels. When `dims` is given the ground-truth points
    are assumed normalized and the cube extent is converted per axis;
    otherwise everything stays in voxel units.
    """
    pts = _as_points(gt_points)
    if len(pts) == 0:
        raise ValueError("sample_patches on an empty ground-truth set")
    lo, hi = count_range
    rng = np.random.default_rng(seed)
    count = int(rng.integers(lo, hi + 1))
    count = min(count, len(pts))
    idx = fps(pts, count, seed=rng)
    if dims is None:
        half = np.full(3, patch_size / 2.0)
        space = "voxel"
    else:
        half = (patch_size / 2.0) / _axis_scale(dims)
        space = NORMALIZED
    return PatchSet(centers=pts[idx], half_size=half, space=space, seed=seed)


def local_chamfer(pred, gt, patches: PatchSet) -> tuple[float, np.ndarray]:
    """Patch-averaged bidirectional squared chamfer with analytic gradient.

    Per patch, sums squared nearest-neighbor distances from predicted
    points in the cube to ground-truth points in the cube and back, then
    divides by the number of patches. A patch missing one side contributes
    only the terms that remain defined (both sides missing contributes 0
    but still counts in the average). Nearest-neighbor indices are held
    fixed for the gradient.
    """
    p = _as_points(pred)
    g = _as_points(gt)
    if isinstance(pred, Polyline) and pred.space != patches.space:
        raise ValueError(f"pred space {pred.space!r} != patch space {patches.space!r}")
    if isinstance(gt, (Polyline,)) and gt.space != patches.space:
        raise ValueError(f"gt space {gt.space!r} != patch space {patches.space!r}")
    m = len(patches)
    in_p = patches.contains(p)
    in_g = patches.contains(g)
    value = 0.0
    grad = np.zeros_like(p)
    for w in range(m):
        pi = np.where(in_p[:, w])[0]
        gi = np.where(in_g[:, w])[0]
        if len(pi) == 0 or len(gi) == 0:
            continue
        pw = p[pi]
        gw = g[gi]
        gtree = cKDTree(gw)
        d_pg, nn_pg = gtree.query(pw)
        value += float(np.sum(d_pg**2))
        np.add.at(grad, pi, 2.0 * (pw - gw[nn_pg]))
        ptree = cKDTree(pw)
        d_gp, nn_gp = ptree.query(gw)
        value += float(np.sum(d_gp**2))
        np.add.at(grad, pi[nn_gp], 2.0 * (pw[nn_gp] - gw))
    return value / m, grad / m


def sdf_energy(pred, sdf: SdfGrid, scale: float = 1.0) -> tuple[float, np.ndarray]:
    """Mean sampled signed-distance value over points in voxel space.

    Gradients are with respect to the voxel coordinates (the trilinear
    sample gradient divided by the point count).
    """
    p = _as_points(pred)
    values, grads = sample_trilinear(sdf, p)
    n = len(p)
    return scale * float(values.mean()), scale * grads / n


def reg_energy(points) -> tuple[float, np.ndarray]:
    """Mean squared consecutive-edge length (sum over edges, divided by N)."""
    p = _as_points(points)
    n = len(p)
    if n < 2:
        raise ValueError("regularizer needs at least two points")
    edges = np.diff(p, axis=0)
    value = float(np.sum(edges**2)) / n
    grad = np.zeros_like(p)
    grad[1:] += 2.0 * edges / n
    grad[:-1] -= 2.0 * edges / n
    return value, grad


@dataclass(frozen=True)
class DeformContext:
    """Fixed per-stage inputs: normalized gt points, patches, distance grid."""

    gt: np.ndarray
    patches: PatchSet
    sdf: SdfGrid

    @property
    def dims(self):
        return self.sdf.dims


def total_energy(pred, ctx: DeformContext, cfg: DeformConfig) -> EnergyReport:
    """Weighted sum of the three energies and its gradient.

    Chamfer and regularization are evaluated on the normalized coordinates
    directly; the distance grid is sampled at the voxel-space image of the
    points, with the sample gradient chain-ruled back to normalized units.
    """
    p = _as_points(pred)
    cha_v, cha_g = local_chamfer(p, ctx.gt, ctx.patches)
    sdf_v, sdf_g_vox = sdf_energy(normalized_to_voxel(p, ctx.dims), ctx.sdf,
                                  scale=cfg.sdf_scale)
    sdf_g = sdf_g_vox * _axis_scale(ctx.dims)
    reg_v, reg_g = reg_energy(p)
    total = (cfg.lambda_chamfer * cha_v + cfg.lambda_sdf * sdf_v
             + cfg.lambda_reg * reg_v)
    grad = (cfg.lambda_chamfer * cha_g + cfg.lambda_sdf * sdf_g
            + cfg.lambda_reg * reg_g)
    return EnergyReport(chamfer=cha_v, sdf=sdf_v, reg=reg_v, total=total,
                        gradients=grad)


OffsetPredictor = Callable[[np.ndarray, DeformContext, DeformConfig],
                           tuple[np.ndarray, EnergyReport]]


def gradient_descent_offsets(points: np.ndarray, ctx: DeformContext,
                             cfg: DeformConfig) -> tuple[np.ndarray, EnergyReport]:
    """Default offset predictor: one descent step on the total energy."""
    report = total_energy(points, ctx, cfg)
    return -cfg.step_size * report.gradients, report


def deform_stage(p: Polyline, ctx: DeformContext, cfg: DeformConfig,
                 stage_index: int,
                 predictor: OffsetPredictor = gradient_descent_offsets,
                 ) -> tuple[Polyline, list]:
    """Run the inner refinement loop of one cascade stage, then unpool.

    Applies `inner_steps` offset updates, each clamped per point to
    `max_step` in the infinity norm, and doubles the point density
    afterwards (skipped on the final stage when unpool_final is off).
    stage_index is 1-based.
    """
    if p.space != NORMALIZED:
        raise ValueError("deform_stage expects a normalized-space polyline")
    pts = np.array(p.points, dtype=np.float64)
    reports = []
    for _ in range(cfg.inner_steps):
        offsets, report = predictor(pts, ctx, cfg)
        if report is not None:
            reports.append(report)
        if not np.all(np.isfinite(offsets)):
            raise DivergenceError(
                f"non-finite offsets at stage {stage_index}", trace=reports
            )
        pts = pts + np.clip(offsets, -cfg.max_step, cfg.max_step)
    is_final = stage_index >= cfg.stages
    if not is_final or cfg.unpool_final:
        pts = unpool_points(pts)
    return Polyline(points=pts, space=NORMALIZED, label=p.label), reports


def run_cascade(template: Polyline, target, cfg: DeformConfig,
                predictor: OffsetPredictor = gradient_descent_offsets,
                ) -> tuple[Polyline, DeformTrace]:
    """Fit a template to a target structure over the full cascade.

    `target` is a (ground-truth points, SdfGrid) pair with points in voxel
    coordinates (a VoxelSet, Polyline, or array). The template may be in
    voxel or normalized space; the returned polyline is in voxel space.
    Patches are resampled once per stage from a per-stage sub-seed, so the
    whole run is a pure function of (inputs, config).
    """
    gt_points, sdf = target
    dims = sdf.dims
    gt_vox = _as_points(gt_points)
    if isinstance(gt_points, Polyline) and gt_points.space == NORMALIZED:
        gt_vox = normalized_to_voxel(gt_vox, dims)
    if len(gt_vox) == 0:
        raise ValueError("run_cascade needs nonempty ground-truth points")
    pts = np.asarray(template.points, dtype=np.float64)
    if template.space != NORMALIZED:
        pts = voxel_to_normalized(pts, dims)
    gt_n = voxel_to_normalized(gt_vox, dims)
    current = Polyline(points=pts, space=NORMALIZED, label=template.label)
    trace = DeformTrace()
    for stage in range(1, cfg.stages + 1):
        stage_seed = int(
            np.random.SeedSequence((cfg.seed, stage)).generate_state(1)[0]
        )
        patches = sample_patches(
            gt_n, count_range=cfg.patch_count, patch_size=cfg.patch_size,
            seed=stage_seed, dims=dims,
        )
        ctx = DeformContext(gt=gt_n, patches=patches, sdf=sdf)
        st = StageTrace(
            stage=stage, weight=float(cfg.stage_weights[stage - 1]),
            input_points=normalized_to_voxel(current.points, dims),
        )
        try:
            current, st.reports = deform_stage(current, ctx, cfg, stage,
                                               predictor=predictor)
        except DivergenceError as e:
            trace.stages.append(st)
            e.trace = trace
            raise
        st.output_points = normalized_to_voxel(current.points, dims)
        trace.stages.append(st)
    final = Polyline(
        points=normalized_to_voxel(current.points, dims),
        space="voxel", label=template.label,
    )
    return final, trace
