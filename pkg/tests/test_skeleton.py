import numpy as np
import pytest

from deformcl import Mask, betti, extract_surface, skeleton_points, thin_3d


def cylinder_mask(dims=(32, 32, 32), radius=3, z0=6, z1=26):
    ii, jj, kk = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    c = (dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0
    fg = ((ii - c[0]) ** 2 + (jj - c[1]) ** 2 <= radius**2) & (kk >= z0) & (kk <= z1)
    return Mask(data=fg.astype(np.uint8))


def test_empty_mask_thins_to_empty():
    m = Mask(data=np.zeros((8, 8, 8), dtype=np.uint8))
    assert thin_3d(m).data.sum() == 0


def test_thin_line_is_fixed_point():
    data = np.zeros((16, 8, 8), dtype=np.uint8)
    data[2:14, 4, 4] = 1
    m = Mask(data=data)
    assert np.array_equal(thin_3d(m).data, m.data)


def test_cylinder_skeleton_is_axis():
    m = cylinder_mask()
    skel = thin_3d(m)
    assert betti(skel).b0 == 1
    pts = np.argwhere(skel.as_bool()).astype(float)
    c = (m.dims[0] - 1) / 2.0
    axis_dist = np.hypot(pts[:, 0] - c, pts[:, 1] - c)
    assert axis_dist.max() <= 1.0


def test_surface_single_voxel():
    data = np.zeros((5, 5, 5), dtype=np.uint8)
    data[2, 2, 2] = 1
    s = extract_surface(Mask(data=data))
    assert len(s) == 1
    assert tuple(s.coords[0]) == (2, 2, 2)


def test_surface_of_solid_cube_excludes_center():
    m = Mask(data=np.ones((3, 3, 3), dtype=np.uint8))
    s = extract_surface(m)
    assert len(s) == 26  # the grid border counts as background
    assert [1, 1, 1] not in s.coords.tolist()


def brute_surface(fg):
    out = []
    nx, ny, nz = fg.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not fg[i, j, k]:
                    continue
                for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                   (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    a, b, c = i + di, j + dj, k + dk
                    if not (0 <= a < nx and 0 <= b < ny and 0 <= c < nz) \
                            or not fg[a, b, c]:
                        out.append((i, j, k))
                        break
    return sorted(out)


@pytest.mark.parametrize("seed", range(5))
def test_surface_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    fg = rng.random((16, 16, 16)) < 0.5
    s = extract_surface(Mask(data=fg.astype(np.uint8)))
    assert [tuple(c) for c in s.coords] == brute_surface(fg)


def test_skeleton_points_empty_and_thin_line():
    m = Mask(data=np.zeros((8, 8, 8), dtype=np.uint8))
    assert len(skeleton_points(m)) == 0
    data = np.zeros((16, 8, 8), dtype=np.uint8)
    data[2:14, 4, 4] = 1
    pts = skeleton_points(Mask(data=data))
    assert len(pts) == 12


def test_skeleton_point_count_of_cylinder():
    m = cylinder_mask()  # axis length 21 voxels
    assert len(skeleton_points(m)) <= 21 + 2


def test_subset_and_idempotence(helix, tube, ring):
    for ph in (helix, tube, ring):
        m = ph["mask"]
        skel = thin_3d(m)
        assert not np.any(skel.as_bool() & ~m.as_bool())
        assert np.array_equal(thin_3d(skel).data, skel.data)


def test_topology_preservation(helix, tube, ring):
    for ph in (helix, tube, ring):
        before = betti(ph["mask"])
        after = betti(thin_3d(ph["mask"]))
        assert after.b0 == before.b0
        assert after.b1 == before.b1
    assert betti(thin_3d(ring["mask"])).b1 == 1
