"""Centerline graphs, templates, and polyline resampling.

Skeleton point clouds become graphs through a Euclidean minimum spanning
tree; a handful of control points abstracts the longest geodesic path; a
chain template is interpolated through them (linear by default, clamped
B-spline curves as alternatives) and later refined point-by-point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import BSpline
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra, minimum_spanning_tree
from scipy.spatial import cKDTree

from .fields import VOXEL
from .skeleton import VoxelSet

COMPLETE_GRAPH_LIMIT = 512
KNN_CANDIDATES = 12

INTERPOLATION_METHODS = ("linear", "bspline2", "bspline3")


@dataclass(frozen=True)
class Polyline:
    """Ordered chain of continuous 3D points (implicit i -- i+1 edges)."""

    points: np.ndarray
    space: str = VOXEL
    label: str | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ValueError("polyline needs at least two 3D points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("polyline contains non-finite coordinates")
        if np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise ValueError("polyline has duplicate consecutive points")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    def arc_positions(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths())])

    def length(self) -> float:
        return float(self.arc_positions()[-1])


@dataclass(frozen=True)
class ControlPoints:
    """Ordered abstraction of a path: k points on its geodesic."""

    points: np.ndarray
    space: str = VOXEL

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ValueError("need at least two control points")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class CenterlineGraph:
    """Undirected graph of continuous centerline points."""

    points: np.ndarray
    edges: np.ndarray
    space: str = VOXEL
    label: str | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("graph points must be (n, 3)")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= len(pts):
                raise ValueError("edge index out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loop edge")
            e = np.unique(np.sort(e, axis=1), axis=0)
        pts.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "edges", e)

    def n_vertices(self) -> int:
        return len(self.points)

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(len(self.points))]
        for a, b in self.edges:
            adj[a].append(int(b))
            adj[b].append(int(a))
        return adj

    def _sparse_weights(self):
        w = np.linalg.norm(
            self.points[self.edges[:, 0]] - self.points[self.edges[:, 1]], axis=1
        )
        n = len(self.points)
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        return coo_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n)).tocsr()

    def is_connected(self) -> bool:
        if len(self.points) <= 1:
            return True
        n_comp, _ = connected_components(self._sparse_weights(), directed=False)
        return n_comp == 1

    def total_edge_length(self) -> float:
        return float(
            np.linalg.norm(
                self.points[self.edges[:, 0]] - self.points[self.edges[:, 1]], axis=1
            ).sum()
        )


def _as_point_array(points) -> np.ndarray:
    if isinstance(points, VoxelSet):
        return points.as_points()
    if isinstance(points, (Polyline, ControlPoints)):
        return np.asarray(points.points, dtype=np.float64)
    return np.asarray(points, dtype=np.float64).reshape(-1, 3)


def _candidate_edges(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(pts)
    if n <= COMPLETE_GRAPH_LIMIT:
        iu, ju = np.triu_indices(n, k=1)
        w = np.linalg.norm(pts[iu] - pts[ju], axis=1)
        return iu, ju, w
    tree = cKDTree(pts)
    k = min(KNN_CANDIDATES + 1, n)
    dist, idx = tree.query(pts, k=k)
    src = np.repeat(np.arange(n), k - 1)
    dst = idx[:, 1:].ravel()
    w = dist[:, 1:].ravel()
    a = np.minimum(src, dst)
    b = np.maximum(src, dst)
    key = a * n + b
    _, keep = np.unique(key, return_index=True)
    iu, ju, w = a[keep], b[keep], w[keep]
    # the kNN graph may fall apart into islands; bridge them with the
    # shortest inter-component links until one component remains
    while True:
        m = coo_matrix(
            (np.concatenate([w, w]), (np.concatenate([iu, ju]), np.concatenate([ju, iu]))),
            shape=(n, n),
        ).tocsr()
        n_comp, labels = connected_components(m, directed=False)
        if n_comp == 1:
            break
        main = labels == labels[0]
        other_idx = np.where(~main)[0]
        main_idx = np.where(main)[0]
        bridge_tree = cKDTree(pts[main_idx])
        d, j = bridge_tree.query(pts[other_idx])
        best = int(np.argmin(d))
        a_ = other_idx[best]
        b_ = main_idx[j[best]]
        iu = np.append(iu, min(a_, b_))
        ju = np.append(ju, max(a_, b_))
        w = np.append(w, d[best])
    return iu, ju, w


def mst_reconstruct(points, label: str | None = None) -> CenterlineGraph:
    """Connect a point cloud into its Euclidean minimum spanning tree.

    Uses the complete candidate graph for small clouds and a 12-NN graph
    (with connectivity repair) for large ones.
    """
    pts = _as_point_array(points)
    space = points.space if isinstance(points, (Polyline, ControlPoints)) else VOXEL
    if len(pts) < 2:
        raise ValueError("mst_reconstruct requires at least two points")
    iu, ju, w = _candidate_edges(pts)
    n = len(pts)
    # strictly positive weights so the sparse MST never drops an edge
    graph = coo_matrix((np.maximum(w, 1e-300), (iu, ju)), shape=(n, n)).tocsr()
    mst = minimum_spanning_tree(graph).tocoo()
    edges = np.stack([mst.row, mst.col], axis=1)
    return CenterlineGraph(points=pts, edges=edges, space=space, label=label)


def _longest_geodesic(g: CenterlineGraph) -> tuple[np.ndarray, np.ndarray]:
    """Vertex index sequence + arc positions of the longest shortest path."""
    w = g._sparse_weights()
    n_comp, _ = connected_components(w, directed=False)
    if n_comp != 1:
        raise ValueError("graph is disconnected")
    d0 = dijkstra(w, directed=False, indices=0)
    a = int(np.argmax(d0))
    da, pred = dijkstra(w, directed=False, indices=a, return_predecessors=True)
    b = int(np.argmax(da))
    path = [b]
    while path[-1] != a:
        path.append(int(pred[path[-1]]))
    path.reverse()
    path = np.asarray(path, dtype=np.int64)
    seg = np.linalg.norm(np.diff(g.points[path], axis=0), axis=1)
    return path, np.concatenate([[0.0], np.cumsum(seg)])


def select_control_points(g: CenterlineGraph, k: int) -> ControlPoints:
    """k points at equal arc-length fractions of the longest geodesic path."""
    if k < 2:
        raise ValueError("need k >= 2 control points")
    path, arc = _longest_geodesic(g)
    total = arc[-1]
    if total <= 0:
        raise ValueError("degenerate geodesic path")
    targets = np.linspace(0.0, total, k)
    verts = g.points[path]
    coords = np.stack(
        [np.interp(targets, arc, verts[:, axis]) for axis in range(3)], axis=1
    )
    return ControlPoints(points=coords, space=g.space)


def _clamped_knots(n_ctrl: int, degree: int) -> np.ndarray:
    n_interior = n_ctrl - degree - 1
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    return np.concatenate(
        [np.zeros(degree + 1), interior, np.ones(degree + 1)]
    )


def interpolate_template(cp: ControlPoints, method: str = "linear",
                         n: int = 100) -> Polyline:
    """Sample n points at equal parameter steps on the chosen interpolant.

    "linear" is the piecewise-linear chain through the control points;
    "bspline2"/"bspline3" are clamped B-spline curves with the control
    points as de Boor points, so only the endpoints are interpolated.
    """
    if method not in INTERPOLATION_METHODS:
        raise ValueError(f"unknown interpolation method {method!r}")
    k = len(cp)
    if n < k:
        raise ValueError(f"need n >= {k} template points, got {n}")
    params = np.linspace(0.0, 1.0, n)
    ctrl = cp.points
    if method == "linear":
        t_ctrl = np.linspace(0.0, 1.0, k)
        pts = np.stack(
            [np.interp(params, t_ctrl, ctrl[:, axis]) for axis in range(3)], axis=1
        )
    else:
        degree = 2 if method == "bspline2" else 3
        if k < degree + 1:
            raise ValueError(f"{method} needs at least {degree + 1} control points")
        spline = BSpline(_clamped_knots(k, degree), ctrl, degree, extrapolate=False)
        pts = spline(np.clip(params, 0.0, 1.0))
        pts[0] = ctrl[0]
        pts[-1] = ctrl[-1]
    return Polyline(points=pts, space=cp.space)


def unpool(p: Polyline) -> Polyline:
    """Insert a midpoint between every connected pair: n -> 2n-1 points."""
    pts = p.points
    out = np.empty((2 * len(pts) - 1, 3))
    out[0::2] = pts
    out[1::2] = 0.5 * (pts[1:] + pts[:-1])
    return Polyline(points=out, space=p.space, label=p.label)


def unpool_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty((2 * len(pts) - 1, 3))
    out[0::2] = pts
    out[1::2] = 0.5 * (pts[1:] + pts[:-1])
    return out


def smooth_polyline(p: Polyline, window: int) -> Polyline:
    """Moving-average smoothing over the point sequence.

    Windows shrink symmetrically near the ends (the first and last points
    average fewer neighbors), which irons out sub-voxel zigzags that
    energy descent leaves behind without shifting the curve globally.
    """
    if window <= 1:
        return p
    pts = p.points
    n = len(pts)
    half = min(window // 2, (n - 1) // 2)
    csum = np.vstack([np.zeros(3), np.cumsum(pts, axis=0)])
    out = np.empty_like(pts)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        out[i] = (csum[hi] - csum[lo]) / (hi - lo)
    return Polyline(points=out, space=p.space, label=p.label)


def resample_arclength(p: Polyline, spacing: float) -> Polyline:
    """Resample at exact arc-length multiples of `spacing` (endpoints kept)."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    arc = p.arc_positions()
    total = arc[-1]
    if total <= 0:
        raise ValueError("degenerate polyline")
    n_steps = int(np.floor(total / spacing + 1e-12))
    targets = np.arange(n_steps + 1, dtype=np.float64) * spacing
    if total - targets[-1] > 1e-9 * max(1.0, total):
        targets = np.append(targets, total)
    pts = np.stack(
        [np.interp(targets, arc, p.points[:, axis]) for axis in range(3)], axis=1
    )
    if len(pts) < 2:  # spacing beyond total length: keep both endpoints
        pts = np.stack([p.points[0], p.points[-1]])
    return Polyline(points=pts, space=p.space, label=p.label)


def split_branches(g: CenterlineGraph) -> list[Polyline]:
    """Decompose a tree into maximal chain paths, cut at junctions (deg > 2).

    Each edge lands in exactly one chain; chains start/end at leaves or
    junction vertices. Deterministic: chains seeded in vertex-index order.
    """
    adj = g.adjacency()
    deg = np.array([len(a) for a in adj])
    visited_edges: set[tuple[int, int]] = set()
    chains: list[Polyline] = []

    def edge_key(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    endpoints = [v for v in range(len(adj)) if deg[v] != 2 and deg[v] > 0]
    for start in endpoints:
        for nxt in sorted(adj[start]):
            if edge_key(start, nxt) in visited_edges:
                continue
            chain = [start, nxt]
            visited_edges.add(edge_key(start, nxt))
            while deg[chain[-1]] == 2:
                a, b = adj[chain[-1]]
                nxt2 = b if a == chain[-2] else a
                visited_edges.add(edge_key(chain[-1], nxt2))
                chain.append(nxt2)
            chains.append(
                Polyline(points=g.points[chain], space=g.space, label=g.label)
            )
    # pure cycles (no endpoint vertices) have every degree == 2; walk them
    for v in range(len(adj)):
        for nxt in sorted(adj[v]):
            if edge_key(v, nxt) in visited_edges:
                continue
            chain = [v, nxt]
            visited_edges.add(edge_key(v, nxt))
            while chain[-1] != v:
                a, b = adj[chain[-1]]
                nxt2 = b if a == chain[-2] else a
                visited_edges.add(edge_key(chain[-1], nxt2))
                chain.append(nxt2)
            chains.append(
                Polyline(points=g.points[chain], space=g.space, label=g.label)
            )
    return chains


def save_centerline(obj, path) -> None:
    """Write a Polyline or CenterlineGraph to the centerline JSON format."""
    doc: dict = {"space": obj.space, "nodes": obj.points.tolist()}
    if isinstance(obj, CenterlineGraph):
        doc["edges"] = obj.edges.tolist()
    if getattr(obj, "label", None) is not None:
        doc["label"] = obj.label
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_centerline(path):
    """Read centerline JSON: chains load as Polyline, else CenterlineGraph."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    doc = json.loads(p.read_text())
    for key in ("space", "nodes"):
        if key not in doc:
            raise ValueError(f"centerline file {p} missing key {key!r}")
    nodes = np.asarray(doc["nodes"], dtype=np.float64).reshape(-1, 3)
    label = doc.get("label")
    if "edges" in doc:
        return CenterlineGraph(
            points=nodes, edges=np.asarray(doc["edges"]), space=doc["space"],
            label=label,
        )
    return Polyline(points=nodes, space=doc["space"], label=label)
