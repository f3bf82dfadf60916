"""Deformable-centerline extraction for tubular structures in 3D volumes.

The pipeline: skeletonize a coarse mask, connect the skeleton into a
graph, abstract it to a few control points, interpolate a chain template,
refine the template through a cascade of energy-descent deformation and
unpooling stages, and finally derive a segmentation, metrics, and
straightened reformation images from the fitted centerline.
"""

from .volume import Volume, Mask, load_volume, save_volume, binarize
from .skeleton import VoxelSet, thin_3d, extract_surface, skeleton_points
from .fields import (
    DistanceGrid,
    SdfGrid,
    edt,
    sdf_grid,
    sample_trilinear,
    distance_map_from_points,
    voxel_to_normalized,
    normalized_to_voxel,
)
from .graphline import (
    CenterlineGraph,
    ControlPoints,
    Polyline,
    interpolate_template,
    load_centerline,
    mst_reconstruct,
    resample_arclength,
    save_centerline,
    select_control_points,
    smooth_polyline,
    split_branches,
    unpool,
)
from .deform import (
    DeformConfig,
    DeformContext,
    DeformTrace,
    DivergenceError,
    EnergyReport,
    PatchSet,
    fps,
    local_chamfer,
    reg_energy,
    run_cascade,
    sample_patches,
    sdf_energy,
    total_energy,
)
from .segment import RadiusProfile, estimate_radius, refine_segmentation
from .metrics import (
    MetricsReport,
    TopologySummary,
    betti,
    betti_errors,
    centerline_f1,
    chamfer_metric,
    cl_dice,
    dice,
    evaluate,
    hd95,
)
from .phantom import CurveSpec, gen_branches, gen_curve, make_phantom, rasterize_tube
from .scpr import FrameSequence, rm_frames, scpr_from_centerline, scpr_resample, write_pgm

__version__ = "0.1.0"
