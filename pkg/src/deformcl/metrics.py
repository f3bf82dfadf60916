"""Volumetric, topological, distance, and centerline evaluation scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import generate_binary_structure, label
from scipy.spatial import cKDTree

from .skeleton import VoxelSet, extract_surface, thin_3d
from .volume import Mask

_STRUCT_26 = generate_binary_structure(3, 3)
_STRUCT_6 = generate_binary_structure(3, 1)


@dataclass(frozen=True)
class TopologySummary:
    """Betti numbers and Euler characteristic of a voxel complex."""

    b0: int
    b1: int
    b2: int
    chi: int

    def __post_init__(self):
        if self.chi != self.b0 - self.b1 + self.b2:
            raise ValueError("inconsistent topology summary")


@dataclass(frozen=True)
class MetricsReport:
    dice: float
    cl_dice: float
    betti0_err: int
    betti1_err: int
    euler_err: int
    hd95: float
    chamfer: float
    cl_precision: float
    cl_recall: float
    cl_f1: float

    def to_dict(self) -> dict:
        return {
            "dice": self.dice,
            "cl_dice": self.cl_dice,
            "betti0_err": self.betti0_err,
            "betti1_err": self.betti1_err,
            "euler_err": self.euler_err,
            "hd95": self.hd95,
            "chamfer": self.chamfer,
            "cl_precision": self.cl_precision,
            "cl_recall": self.cl_recall,
            "cl_f1": self.cl_f1,
        }


def dice(pred: Mask, gt: Mask) -> float:
    """Overlap score 2|P∩G| / (|P|+|G|); two empty masks score 1."""
    p = pred.as_bool()
    g = gt.as_bool()
    if p.shape != g.shape:
        raise ValueError("mask dims differ")
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def cl_dice(pred: Mask, gt: Mask) -> float:
    """Harmonic mean of skeleton-in-mask precision and sensitivity."""
    p = pred.as_bool()
    g = gt.as_bool()
    if p.shape != g.shape:
        raise ValueError("mask dims differ")
    if not p.any() and not g.any():
        return 1.0
    skel_p = thin_3d(pred).as_bool()
    skel_g = thin_3d(gt).as_bool()
    if not skel_p.any() or not skel_g.any():
        return 0.0
    tprec = int((skel_p & g).sum()) / int(skel_p.sum())
    tsens = int((skel_g & p).sum()) / int(skel_g.sum())
    if tprec + tsens == 0:
        return 0.0
    return 2.0 * tprec * tsens / (tprec + tsens)


def _euler_characteristic(fg: np.ndarray) -> int:
    """chi = V - E + F - C of the closed-unit-cube complex of the voxels."""
    m = np.pad(fg, 1, constant_values=False)
    v = np.count_nonzero(
        m[1:, 1:, 1:] | m[:-1, 1:, 1:] | m[1:, :-1, 1:] | m[1:, 1:, :-1]
        | m[:-1, :-1, 1:] | m[:-1, 1:, :-1] | m[1:, :-1, :-1] | m[:-1, :-1, :-1]
    )
    ex = np.count_nonzero(m[:, 1:, 1:] | m[:, :-1, 1:] | m[:, 1:, :-1] | m[:, :-1, :-1])
    ey = np.count_nonzero(m[1:, :, 1:] | m[:-1, :, 1:] | m[1:, :, :-1] | m[:-1, :, :-1])
    ez = np.count_nonzero(m[1:, 1:, :] | m[:-1, 1:, :] | m[1:, :-1, :] | m[:-1, :-1, :])
    fx = np.count_nonzero(m[1:, :, :] | m[:-1, :, :])
    fy = np.count_nonzero(m[:, 1:, :] | m[:, :-1, :])
    fz = np.count_nonzero(m[:, :, 1:] | m[:, :, :-1])
    c = np.count_nonzero(m)
    return int(v - (ex + ey + ez) + (fx + fy + fz) - c)


def betti(m: Mask) -> TopologySummary:
    """Betti numbers of the foreground.

    b0 counts 26-connected foreground components, b2 counts 6-connected
    background components not reaching the grid border (cavities), chi
    comes from the cubical complex, and b1 follows from the
    Euler-Poincare identity b1 = b0 + b2 - chi.
    """
    fg = m.as_bool()
    if not fg.any():
        return TopologySummary(0, 0, 0, 0)
    _, b0 = label(fg, _STRUCT_26)
    bg_labels, n_bg = label(~fg, _STRUCT_6)
    border = np.unique(
        np.concatenate([
            bg_labels[0].ravel(), bg_labels[-1].ravel(),
            bg_labels[:, 0].ravel(), bg_labels[:, -1].ravel(),
            bg_labels[:, :, 0].ravel(), bg_labels[:, :, -1].ravel(),
        ])
    )
    b2 = n_bg - len(set(border.tolist()) - {0})
    chi = _euler_characteristic(fg)
    return TopologySummary(b0=int(b0), b1=int(b0 + b2 - chi), b2=int(b2), chi=chi)


def betti_errors(pred: Mask, gt: Mask) -> tuple[int, int, int]:
    """Componentwise absolute errors (|b0|, |b1|, |chi|)."""
    tp = betti(pred)
    tg = betti(gt)
    return abs(tp.b0 - tg.b0), abs(tp.b1 - tg.b1), abs(tp.chi - tg.chi)


def _as_metric_points(x) -> np.ndarray:
    if isinstance(x, Mask):
        return extract_surface(x).as_points()
    if isinstance(x, VoxelSet):
        return x.as_points()
    if hasattr(x, "points"):
        return np.asarray(x.points, dtype=np.float64)
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)


def _directed_nn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d, _ = cKDTree(b).query(a)
    return d


def hd95(a, b) -> float:
    """Nearest-rank 95th percentile of pooled bidirectional NN distances.

    Masks are converted to their surface voxels; point sets are used as-is.
    """
    pa = _as_metric_points(a)
    pb = _as_metric_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("hd95 needs two nonempty sets")
    pooled = np.sort(np.concatenate([_directed_nn(pa, pb), _directed_nn(pb, pa)]))
    rank = int(np.ceil(0.95 * len(pooled))) - 1
    return float(pooled[rank])


def chamfer_metric(a, b) -> float:
    """Mean of all directed nearest-neighbor distances, both ways."""
    pa = _as_metric_points(a)
    pb = _as_metric_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("chamfer_metric needs two nonempty sets")
    pooled = np.concatenate([_directed_nn(pa, pb), _directed_nn(pb, pa)])
    return float(pooled.mean())


def centerline_f1(pred, gt, tol: float = 3.0) -> tuple[float, float, float]:
    """Precision/recall/F1 of predicted centerline points vs ground truth.

    A predicted point is correct when within `tol` voxels of some
    ground-truth point, and a ground-truth point is covered when within
    `tol` of some prediction.
    """
    pp = _as_metric_points(pred)
    pg = _as_metric_points(gt)
    if len(pp) == 0 or len(pg) == 0:
        raise ValueError("centerline_f1 needs two nonempty sets")
    precision = float(np.mean(_directed_nn(pp, pg) <= tol))
    recall = float(np.mean(_directed_nn(pg, pp) <= tol))
    if precision + recall == 0:
        return 0.0, 0.0, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def evaluate(pred: Mask, gt: Mask, pred_centerline=None,
             tol: float = 3.0) -> MetricsReport:
    """Full report for one structure.

    Distance scores use surface voxels. Centerline scores compare
    `pred_centerline` (or the skeleton of `pred` when omitted) against the
    skeleton of `gt`.
    """
    from .skeleton import skeleton_points

    b0e, b1e, chie = betti_errors(pred, gt)
    gt_skel = skeleton_points(gt)
    if pred_centerline is None:
        pred_pts = skeleton_points(pred)
    else:
        pred_pts = pred_centerline
    p, r, f1 = centerline_f1(pred_pts, gt_skel, tol=tol)
    return MetricsReport(
        dice=dice(pred, gt),
        cl_dice=cl_dice(pred, gt),
        betti0_err=b0e,
        betti1_err=b1e,
        euler_err=chie,
        hd95=hd95(pred, gt),
        chamfer=chamfer_metric(_as_metric_points(pred_pts), gt_skel.as_points()),
        cl_precision=p,
        cl_recall=r,
        cl_f1=f1,
    )
