"""Topology-preserving 3D thinning and tubular-surface extraction.

The thinning is classical boundary peeling: six directional
sub-iterations per pass, each marking candidate border voxels and then
deleting them in a sequential lexicographic sweep. A voxel may be
deleted only when (a) it is not a line endpoint, (b) removing it keeps
the Euler characteristic of the cubical complex unchanged, and (c) its
remaining foreground 26-neighbours stay 26-connected. The sweep
re-checks (b) and (c) against the partially deleted image, which is what
keeps fully symmetric shapes (for example a 2x2x2 core) from vanishing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate, generate_binary_structure, label

from .volume import Mask

_S26 = generate_binary_structure(3, 3)
_NEIGHBOR_KERNEL = np.ones((3, 3, 3), dtype=np.uint8)
_NEIGHBOR_KERNEL[1, 1, 1] = 0

# one sub-iteration per face direction, fixed order
_DIRECTIONS = ((0, 0, -1), (0, 0, 1), (0, -1, 0), (0, 1, 0), (-1, 0, 0), (1, 0, 0))


@dataclass(frozen=True)
class VoxelSet:
    """Deduplicated, lexicographically sorted voxel coordinates.

    coords has shape (n, 3) int64; dims is the grid the coords live on.
    """

    coords: np.ndarray
    dims: tuple[int, int, int]

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        c = np.unique(c, axis=0)  # unique() sorts lexicographically
        dims = tuple(int(d) for d in self.dims)
        if len(c) and (c.min() < 0 or np.any(c >= np.array(dims))):
            raise ValueError("voxel coordinates out of bounds")
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "dims", dims)

    def __len__(self) -> int:
        return len(self.coords)

    def as_points(self) -> np.ndarray:
        return self.coords.astype(np.float64)


def _batch_chi(blocks: np.ndarray) -> np.ndarray:
    """Euler characteristic V-E+F-C of each (3,3,3) block's cube complex."""
    m = np.pad(blocks, ((0, 0), (1, 1), (1, 1), (1, 1)))
    v = (m[:, 1:, 1:, 1:] | m[:, :-1, 1:, 1:] | m[:, 1:, :-1, 1:]
         | m[:, 1:, 1:, :-1] | m[:, :-1, :-1, 1:] | m[:, :-1, 1:, :-1]
         | m[:, 1:, :-1, :-1] | m[:, :-1, :-1, :-1]).sum(axis=(1, 2, 3))
    ex = (m[:, :, 1:, 1:] | m[:, :, :-1, 1:] | m[:, :, 1:, :-1]
          | m[:, :, :-1, :-1]).sum(axis=(1, 2, 3))
    ey = (m[:, 1:, :, 1:] | m[:, :-1, :, 1:] | m[:, 1:, :, :-1]
          | m[:, :-1, :, :-1]).sum(axis=(1, 2, 3))
    ez = (m[:, 1:, 1:, :] | m[:, :-1, 1:, :] | m[:, 1:, :-1, :]
          | m[:, :-1, :-1, :]).sum(axis=(1, 2, 3))
    fx = (m[:, 1:, :, :] | m[:, :-1, :, :]).sum(axis=(1, 2, 3))
    fy = (m[:, :, 1:, :] | m[:, :, :-1, :]).sum(axis=(1, 2, 3))
    fz = (m[:, :, :, 1:] | m[:, :, :, :-1]).sum(axis=(1, 2, 3))
    c = m.sum(axis=(1, 2, 3))
    return v - (ex + ey + ez) + (fx + fy + fz) - c


def _batch_euler_invariant(blocks: np.ndarray) -> np.ndarray:
    """True where deleting the center voxel keeps the local chi unchanged."""
    without = blocks.copy()
    without[:, 1, 1, 1] = False
    return _batch_chi(blocks) == _batch_chi(without)


def _batch_single_component(blocks: np.ndarray) -> np.ndarray:
    """True where the non-center foreground is one 26-connected component.

    Blocks are packed into one canvas with empty separator planes so a
    single connected-component labeling covers the whole batch.
    """
    m = len(blocks)
    canvas = np.zeros((m, 5, 5, 5), dtype=bool)
    canvas[:, 1:4, 1:4, 1:4] = blocks
    canvas[:, 2, 2, 2] = False
    labels, _ = label(canvas.reshape(m * 5, 5, 5), _S26)
    nz = labels.ravel()
    keep = nz > 0
    block_id = np.arange(labels.size)[keep] // (5 * 5 * 5)
    pairs = np.unique(np.stack([block_id, nz[keep]], axis=1), axis=0)
    counts = np.bincount(pairs[:, 0], minlength=m)
    return counts == 1


def _gather_blocks(padded: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """(m, 3, 3, 3) neighborhoods around padded-image coords."""
    di, dj, dk = np.meshgrid(np.arange(3), np.arange(3), np.arange(3),
                             indexing="ij")
    return padded[
        coords[:, 0, None, None, None] + di - 1,
        coords[:, 1, None, None, None] + dj - 1,
        coords[:, 2, None, None, None] + dk - 1,
    ]


def _deletable_in_block(block: np.ndarray) -> bool:
    core = block.copy()
    core[1, 1, 1] = False
    if core.sum() < 2:  # endpoint or isolated
        return False
    _, n = label(core, _S26)
    if n != 1:
        return False
    return bool(_batch_euler_invariant(block[None])[0])


def thin_3d(m: Mask) -> Mask:
    """Thin a binary mask to a unit-width, topology-preserving skeleton.

    Never adds a voxel, preserves 26-connected components and loops, and
    is idempotent and deterministic (lexicographic deletion order).
    """
    img = np.pad(m.as_bool(), 1)
    changed = True
    while changed:
        changed = False
        for d in _DIRECTIONS:
            core = img[1:-1, 1:-1, 1:-1]
            neighbor = img[
                1 + d[0]: img.shape[0] - 1 + d[0],
                1 + d[1]: img.shape[1] - 1 + d[1],
                1 + d[2]: img.shape[2] - 1 + d[2],
            ]
            border = core & ~neighbor
            if not border.any():
                continue
            counts = correlate(core.astype(np.uint8), _NEIGHBOR_KERNEL,
                               mode="constant")
            cand = np.argwhere(border & (counts >= 2)) + 1  # padded coords
            if len(cand) == 0:
                continue
            blocks = _gather_blocks(img, cand)
            no_center = blocks.copy()
            no_center[:, 1, 1, 1] = False
            ok = _batch_single_component(no_center) & _batch_euler_invariant(blocks)
            cand = cand[ok]
            # sequential sweep: re-check each survivor against the current
            # image whenever an earlier deletion touched its neighborhood
            dirty = np.zeros_like(img)
            for p in cand:
                i, j, k = p
                patch_dirty = dirty[i - 1:i + 2, j - 1:j + 2, k - 1:k + 2].any()
                if patch_dirty and not _deletable_in_block(
                        img[i - 1:i + 2, j - 1:j + 2, k - 1:k + 2]):
                    continue
                img[i, j, k] = False
                dirty[i, j, k] = True
                changed = True
    return Mask(data=img[1:-1, 1:-1, 1:-1].astype(np.uint8), spacing=m.spacing)


def extract_surface(m: Mask) -> VoxelSet:
    """Foreground voxels with at least one 6-neighbour background voxel.

    Out-of-bounds counts as background, so voxels on the grid border are
    surface whenever they are foreground.
    """
    fg = m.as_bool()
    padded = np.pad(fg, 1, constant_values=False)
    all_neighbours_fg = (
        padded[:-2, 1:-1, 1:-1] & padded[2:, 1:-1, 1:-1]
        & padded[1:-1, :-2, 1:-1] & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, 1:-1, :-2] & padded[1:-1, 1:-1, 2:]
    )
    surface = fg & ~all_neighbours_fg
    return VoxelSet(coords=np.argwhere(surface), dims=m.dims)


def skeleton_points(m: Mask) -> VoxelSet:
    """Thin the mask and collect the skeleton's foreground coordinates."""
    skel = thin_3d(m)
    return VoxelSet(coords=np.argwhere(skel.as_bool()), dims=m.dims)
