"""Command-line interface: one executable, eight composable subcommands.

Every stage of the pipeline is also runnable standalone on the file
outputs of the other stages. Configuration precedence is built-in
defaults < config file (``key = value`` lines) < explicit flags, and all
randomness flows from one ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from .deform import DeformConfig, run_cascade
from .fields import sdf_grid
from .graphline import (
    CenterlineGraph,
    Polyline,
    interpolate_template,
    load_centerline,
    mst_reconstruct,
    resample_arclength,
    save_centerline,
    select_control_points,
    split_branches,
)
from .metrics import evaluate
from .phantom import KINDS, CurveSpec, gen_branches, gen_curve, rasterize_tube
from .scpr import scpr_from_centerline, write_pgm
from .segment import estimate_radius, refine_segmentation
from .skeleton import skeleton_points, thin_3d
from .volume import Mask, Volume, binarize, load_volume, save_volume

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_INPUT = 2

THREADS_ENV = "DEFORMCL_THREADS"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s) -> tuple:
    if isinstance(s, (list, tuple)):
        return tuple(float(x) for x in s)
    return tuple(float(x) for x in str(s).split(","))


@dataclass
class PipelineConfig:
    """Everything the pipeline needs: cascade, template, and fusion knobs."""

    stages: int = 4
    inner_steps: int = 25
    step_size: float = 0.01
    max_step: float = 0.05
    lambda_cha: float = 30.0
    lambda_sdf: float = 0.5
    lambda_reg: float = 60.0
    stage_weights: tuple = (0.05, 0.60, 0.95, 1.00)
    patch_min: int = 60
    patch_max: int = 80
    patch_size: float = 32.0
    sdf_scale: float = 1.0
    unpool_final: bool = True
    k: int = 4
    n_points: int = 100
    interpolation: str = "linear"
    min_radius: float = 0.5
    threshold: float = 0.5
    tolerance: float = 3.0
    seed: int = 0
    threads: int = 1

    def deform_config(self) -> DeformConfig:
        return DeformConfig(
            stages=self.stages,
            inner_steps=self.inner_steps,
            step_size=self.step_size,
            max_step=self.max_step,
            lambda_chamfer=self.lambda_cha,
            lambda_sdf=self.lambda_sdf,
            lambda_reg=self.lambda_reg,
            stage_weights=tuple(self.stage_weights),
            patch_count=(self.patch_min, self.patch_max),
            patch_size=self.patch_size,
            sdf_scale=self.sdf_scale,
            seed=self.seed,
            unpool_final=self.unpool_final,
        )


_CONFIG_PARSERS = {
    "stages": int, "inner_steps": int, "step_size": float, "max_step": float,
    "lambda_cha": float, "lambda_sdf": float, "lambda_reg": float,
    "stage_weights": _parse_floats, "patch_min": int, "patch_max": int,
    "patch_size": float, "sdf_scale": float, "unpool_final": _parse_bool,
    "k": int, "n_points": int, "interpolation": str, "min_radius": float,
    "threshold": float, "tolerance": float, "seed": int, "threads": int,
}


def parse_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    values = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{p}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_PARSERS:
            raise ValueError(f"{p}:{lineno}: unknown config key {key!r}")
        values[key] = _CONFIG_PARSERS[key](val.strip())
    return values


def resolve_config(args) -> PipelineConfig:
    """defaults < config file < explicit CLI flags."""
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        for key, val in parse_config_file(args.config).items():
            setattr(cfg, key, val)
    for f in dataclass_fields(PipelineConfig):
        flag_val = getattr(args, f.name, None)
        if flag_val is not None:
            if isinstance(flag_val, str):
                flag_val = _CONFIG_PARSERS[f.name](flag_val)
            setattr(cfg, f.name, flag_val)
    if getattr(args, "threads", None) is None and THREADS_ENV in os.environ:
        cfg.threads = int(os.environ[THREADS_ENV])
    return cfg


def add_config_flags(p: argparse.ArgumentParser, template: bool = True) -> None:
    p.add_argument("--config", help="config file: one 'key = value' per line")
    p.add_argument("--stages", type=int)
    p.add_argument("--inner-steps", dest="inner_steps", type=int)
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--max-step", dest="max_step", type=float)
    p.add_argument("--lambda-cha", dest="lambda_cha", type=float)
    p.add_argument("--lambda-sdf", dest="lambda_sdf", type=float)
    p.add_argument("--lambda-reg", dest="lambda_reg", type=float)
    p.add_argument("--stage-weights", dest="stage_weights",
                   help="comma-separated, one weight per stage")
    p.add_argument("--patch-min", dest="patch_min", type=int)
    p.add_argument("--patch-max", dest="patch_max", type=int)
    p.add_argument("--patch-size", dest="patch_size", type=float)
    p.add_argument("--sdf-scale", dest="sdf_scale", type=float)
    p.add_argument("--unpool-final", dest="unpool_final", choices=["true", "false"])
    if template:
        p.add_argument("--k", type=int, help="number of template control points")
        p.add_argument("--n-points", dest="n_points", type=int,
                       help="template point count")
        p.add_argument("--interpolation",
                       choices=["linear", "bspline2", "bspline3"])
    p.add_argument("--min-radius", dest="min_radius", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--tolerance", type=float,
                   help="centerline score tolerance, voxels")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int,
                   help=f"cap internal parallelism (env {THREADS_ENV})")


def _emit(args, payload: dict, human_lines=None) -> None:
    if getattr(args, "json", False) or human_lines is None:
        print(json.dumps(payload, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_phantom(args) -> int:
    cfg = resolve_config(args)
    radius = _parse_floats(args.radius)
    spec = CurveSpec(
        kind=args.kind,
        dims=tuple(int(d) for d in _parse_floats(args.dims)),
        radius=radius[0] if len(radius) == 1 else (radius[0], radius[1]),
        noise_sigma=args.noise,
        seed=cfg.seed,
        helix_radius=args.helix_radius,
        pitch=args.pitch,
        turns=args.turns,
        amplitude=args.amplitude,
        cycles=args.cycles,
        ring_radius=args.ring_radius,
        branch_angle=args.branch_angle,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curves = gen_branches(spec) if spec.kind == "bifurcation" else [gen_curve(spec)]
    intensity, mask, gt = rasterize_tube(spec, curves)
    save_volume(intensity, out / "intensity")
    save_volume(mask, out / "mask")
    names = []
    for i, g in enumerate(gt):
        name = "centerline.json" if i == 0 else f"centerline_{i}.json"
        save_centerline(
            Polyline(points=g.points, space=g.space, label=f"branch{i}"),
            out / name,
        )
        names.append(name)
    payload = {
        "kind": spec.kind, "dims": list(spec.dims),
        "mask_voxels": int(mask.data.sum()), "centerlines": names,
        "out": str(out),
    }
    _emit(args, payload, [
        f"phantom {spec.kind}: {int(mask.data.sum())} mask voxels in "
        f"{spec.dims[0]}x{spec.dims[1]}x{spec.dims[2]}",
        f"wrote intensity/mask containers and {', '.join(names)} to {out}",
    ])
    return EXIT_OK


def cmd_skeletonize(args) -> int:
    mask = load_volume(args.input)
    if not isinstance(mask, Mask):
        raise ValueError("skeletonize expects a u8 mask container")
    skel = thin_3d(mask)
    save_volume(skel, args.output)
    _emit(args, {"input_voxels": int(mask.data.sum()),
                 "skeleton_voxels": int(skel.data.sum()),
                 "output": str(args.output)},
          [f"skeleton: {int(skel.data.sum())} voxels "
           f"(from {int(mask.data.sum())})"])
    return EXIT_OK


def _control_points_of_chain(chain: Polyline, k: int):
    graph = CenterlineGraph(
        points=chain.points,
        edges=np.stack([np.arange(len(chain) - 1), np.arange(1, len(chain))], axis=1),
        space=chain.space,
    )
    return select_control_points(graph, k)


def cmd_template(args) -> int:
    cfg = resolve_config(args)
    mask = load_volume(args.skeleton)
    if not isinstance(mask, Mask):
        raise ValueError("template expects a u8 skeleton mask container")
    pts = skeleton_points(mask)
    if len(pts) < 2:
        raise ValueError("skeleton has fewer than two voxels")
    graph = mst_reconstruct(pts, label=args.label)
    if args.branch_index is not None:
        chains = split_branches(graph)
        chains.sort(key=lambda c: -c.length())
        if args.branch_index >= len(chains):
            raise ValueError(
                f"branch index {args.branch_index} out of range "
                f"({len(chains)} branches)"
            )
        cp = _control_points_of_chain(chains[args.branch_index], cfg.k)
    else:
        cp = select_control_points(graph, cfg.k)
    template = interpolate_template(cp, cfg.interpolation, cfg.n_points)
    template = Polyline(points=template.points, space=template.space,
                        label=args.label)
    save_centerline(template, args.output)
    _emit(args, {"control_points": cfg.k, "template_points": len(template),
                 "interpolation": cfg.interpolation, "output": str(args.output)},
          [f"template: {len(template)} points through {cfg.k} control points "
           f"({cfg.interpolation})"])
    return EXIT_OK


def cmd_deform(args) -> int:
    cfg = resolve_config(args)
    coarse = load_volume(args.coarse)
    if not isinstance(coarse, Mask):
        raise ValueError("deform expects a u8 coarse-mask container")
    template = load_centerline(args.template)
    if not isinstance(template, Polyline):
        raise ValueError("template file must be a chain polyline")
    gt_pts = skeleton_points(coarse)
    sdf = sdf_grid(coarse, exponent=2)
    final, trace = run_cascade(template, (gt_pts, sdf), cfg.deform_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage_files = []
    for st in trace.stages:
        name = f"stage_{st.stage}.json"
        save_centerline(
            Polyline(points=st.output_points, space="voxel",
                     label=template.label),
            out / name,
        )
        stage_files.append(name)
    save_centerline(final, out / "centerline.json")
    payload = {
        "stages": [
            {"stage": st.stage, "points": len(st.output_points),
             "final_energy": st.reports[-1].total}
            for st in trace.stages
        ],
        "weighted_total": trace.weighted_total(),
        "final_points": len(final),
        "out": str(out),
    }
    _emit(args, payload,
          [f"stage {s['stage']}: {s['points']} points, "
           f"energy {s['final_energy']:.6f}" for s in payload["stages"]]
          + [f"final centerline: {len(final)} points -> {out/'centerline.json'}"])
    return EXIT_OK


def cmd_segment(args) -> int:
    cfg = resolve_config(args)
    coarse = load_volume(args.coarse)
    if not isinstance(coarse, Mask):
        raise ValueError("segment expects a u8 coarse-mask container")
    centerline = load_centerline(args.centerline)
    if not isinstance(centerline, Polyline):
        raise ValueError("segment expects a chain centerline")
    sdf1 = sdf_grid(coarse, exponent=1)
    radii = estimate_radius(centerline, sdf1, min_radius=cfg.min_radius)
    refined = refine_segmentation(coarse, centerline, radii)
    save_volume(refined, args.output)
    _emit(args, {"median_radius": radii.median,
                 "coarse_voxels": int(coarse.data.sum()),
                 "refined_voxels": int(refined.data.sum()),
                 "output": str(args.output)},
          [f"median radius {radii.median:.2f} voxels; "
           f"{int(coarse.data.sum())} -> {int(refined.data.sum())} voxels"])
    return EXIT_OK


def _metrics_payload(cases, tol: float) -> dict:
    labels = {}
    for label, pred, gt, pred_cl in cases:
        report = evaluate(pred, gt, pred_centerline=pred_cl, tol=tol)
        labels[label] = report.to_dict()
    keys = next(iter(labels.values())).keys()
    average = {k: float(np.mean([labels[lab][k] for lab in labels])) for k in keys}
    return {"labels": labels, "average": average}


def cmd_metrics(args) -> int:
    cfg = resolve_config(args)
    preds = args.pred or []
    gts = args.gt or []
    if len(preds) != len(gts) or not preds:
        raise ValueError("need matching --pred/--gt containers")
    names = args.label or []
    centers = args.pred_centerline or []
    if centers and len(centers) != len(preds):
        raise ValueError("--pred-centerline count must match --pred")
    cases = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        label = names[i] if i < len(names) else f"structure{i}"
        pred = load_volume(p)
        gt = load_volume(g)
        if not isinstance(pred, Mask) or not isinstance(gt, Mask):
            raise ValueError("metrics expects u8 mask containers")
        pred_cl = load_centerline(centers[i]) if centers else None
        cases.append((label, pred, gt, pred_cl))
    payload = _metrics_payload(cases, cfg.tolerance)
    if args.output:
        Path(args.output).write_text(json.dumps(payload, sort_keys=True) + "\n")
    lines = []
    for label, rep in payload["labels"].items():
        lines.append(
            f"{label}: dice={rep['dice']:.4f} clDice={rep['cl_dice']:.4f} "
            f"b0={rep['betti0_err']} b1={rep['betti1_err']} "
            f"euler={rep['euler_err']} hd95={rep['hd95']:.3f} "
            f"f1={rep['cl_f1']:.4f}"
        )
    avg = payload["average"]
    lines.append(f"average: dice={avg['dice']:.4f} clDice={avg['cl_dice']:.4f} "
                 f"f1={avg['cl_f1']:.4f}")
    _emit(args, payload, lines)
    return EXIT_OK


def cmd_scpr(args) -> int:
    volume = load_volume(args.volume)
    centerline = load_centerline(args.centerline)
    if not isinstance(centerline, Polyline):
        raise ValueError("scpr expects a chain centerline")
    result = scpr_from_centerline(
        volume, centerline, width=args.width, sample_spacing=args.spacing,
        pixel_spacing=args.spacing, angle_deg=args.angle,
        smooth_arc=args.smooth,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_volume(result.straightened, out / "straightened")
    write_pgm(result.longitudinal, out / "longitudinal.pgm")
    _emit(args, {"frames": result.straightened.dims[2],
                 "width": args.width,
                 "clamped_fraction": result.clamped_fraction,
                 "out": str(out)},
          [f"straightened {result.straightened.dims} volume; "
           f"{result.clamped_fraction:.1%} samples clamped at the border"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------

def _phantom_inputs(args, cfg: PipelineConfig, out: Path):
    spec = CurveSpec(kind=args.phantom, noise_sigma=args.noise, seed=cfg.seed)
    curves = (gen_branches(spec) if spec.kind == "bifurcation"
              else [gen_curve(spec)])
    intensity, gt_mask, gt_cl = rasterize_tube(spec, curves)
    save_volume(intensity, out / "intensity")
    save_volume(gt_mask, out / "gt_mask")
    gt_list = gt_cl if isinstance(gt_cl, list) else [gt_cl]
    for i, g in enumerate(gt_list):
        name = "gt_centerline.json" if i == 0 else f"gt_centerline_{i}.json"
        save_centerline(g, out / name)
    coarse = binarize(intensity, cfg.threshold)
    return intensity, coarse, gt_mask, gt_list[0]


def run_pipeline(args) -> dict:
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    gt_mask = None
    gt_cl = None
    if args.phantom:
        intensity, coarse, gt_mask, gt_cl = _phantom_inputs(args, cfg, out)
    else:
        if not args.volume and not args.coarse:
            raise ValueError("need --phantom, or --volume and/or --coarse")
        intensity = load_volume(args.volume) if args.volume else None
        if args.coarse:
            coarse = load_volume(args.coarse)
            if not isinstance(coarse, Mask):
                raise ValueError("--coarse must be a u8 mask container")
        else:
            coarse = binarize(intensity, cfg.threshold)
        if args.gt_mask:
            gt_mask = load_volume(args.gt_mask)
    save_volume(coarse, out / "coarse")

    skel = thin_3d(coarse)
    save_volume(skel, out / "skeleton")
    skel_pts = skeleton_points(coarse)
    if len(skel_pts) < 2:
        raise ValueError("coarse mask skeletonized to fewer than two voxels")

    graph = mst_reconstruct(skel_pts)
    cp = select_control_points(graph, cfg.k)
    template = interpolate_template(cp, cfg.interpolation, cfg.n_points)
    save_centerline(template, out / "template.json")

    sdf2 = sdf_grid(coarse, exponent=2)
    final, trace = run_cascade(template, (skel_pts, sdf2), cfg.deform_config())
    for st in trace.stages:
        save_centerline(Polyline(points=st.output_points, space="voxel"),
                        out / f"stage_{st.stage}.json")
    save_centerline(final, out / "centerline.json")

    sdf1 = sdf_grid(coarse, exponent=1)
    radii = estimate_radius(final, sdf1, min_radius=cfg.min_radius)
    refined = refine_segmentation(coarse, final, radii)
    save_volume(refined, out / "refined")

    payload: dict = {
        "out": str(out),
        "template_points": len(template),
        "final_points": len(final),
        "stage_energies": [st.reports[-1].total for st in trace.stages],
        "weighted_total": trace.weighted_total(),
        "median_radius": radii.median,
    }

    if gt_mask is not None:
        metrics = _metrics_payload(
            [("structure", refined, gt_mask, final)], cfg.tolerance
        )
        if gt_cl is not None:
            dense_gt = resample_arclength(gt_cl, 0.25)
            tree = cKDTree(dense_gt.points)
            tmpl_err = float(tree.query(template.points)[0].mean())
            final_err = float(tree.query(final.points)[0].mean())
            metrics["centerline_mean_error"] = {
                "template": tmpl_err, "final": final_err,
            }
            payload["template_error"] = tmpl_err
            payload["final_error"] = final_err
        (out / "metrics.json").write_text(
            json.dumps(metrics, sort_keys=True) + "\n"
        )
        payload["metrics"] = metrics

    if args.scpr:
        source = intensity if intensity is not None else coarse
        if source.data.dtype == np.uint8:
            source = Volume(data=source.data.astype(np.float32),
                            spacing=source.spacing)
        result = scpr_from_centerline(
            source, final, width=args.scpr_width,
            sample_spacing=1.0, pixel_spacing=1.0, smooth_arc=args.smooth,
        )
        save_volume(result.straightened, out / "scpr")
        write_pgm(result.longitudinal, out / "scpr.pgm")
        payload["scpr_clamped_fraction"] = result.clamped_fraction
    return payload


def cmd_pipeline(args) -> int:
    payload = run_pipeline(args)
    lines = [
        f"template: {payload['template_points']} points",
        f"final centerline: {payload['final_points']} points",
        f"stage energies: "
        + ", ".join(f"{e:.5f}" for e in payload["stage_energies"]),
    ]
    if "metrics" in payload:
        avg = payload["metrics"]["average"]
        lines.append(
            f"dice={avg['dice']:.4f} clDice={avg['cl_dice']:.4f} "
            f"f1={avg['cl_f1']:.4f}"
        )
    if "final_error" in payload:
        lines.append(
            f"centerline mean error: template {payload['template_error']:.3f} "
            f"-> final {payload['final_error']:.3f} voxels"
        )
    lines.append(f"artifacts in {payload['out']}")
    _emit(args, payload, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deformcl",
        description="deformable-centerline extraction for tubular 3D volumes",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic tubular volume")
    p.add_argument("--kind", choices=KINDS, default="helix")
    p.add_argument("--dims", default="64,64,64")
    p.add_argument("--radius", default="3.0",
                   help="tube radius, or 'start,end' for a linear taper")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--helix-radius", dest="helix_radius", type=float, default=18.0)
    p.add_argument("--pitch", type=float, default=40.0)
    p.add_argument("--turns", type=float, default=1.0)
    p.add_argument("--amplitude", type=float, default=8.0)
    p.add_argument("--cycles", type=float, default=1.5)
    p.add_argument("--ring-radius", dest="ring_radius", type=float, default=18.0)
    p.add_argument("--branch-angle", dest="branch_angle", type=float, default=40.0)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    add_config_flags(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("skeletonize", help="thin a mask to a unit-width skeleton")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_skeletonize)

    p = sub.add_parser("template", help="adaptive template from a skeleton mask")
    p.add_argument("--skeleton", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--label")
    p.add_argument("--branch-index", dest="branch_index", type=int,
                   help="fit one branch of a junctioned skeleton "
                        "(0 = longest chain)")
    p.add_argument("--json", action="store_true")
    add_config_flags(p)
    p.set_defaults(func=cmd_template)

    p = sub.add_parser("deform", help="run the deformation cascade")
    p.add_argument("--coarse", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    add_config_flags(p)
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("segment", help="refine a mask from a centerline")
    p.add_argument("--coarse", required=True)
    p.add_argument("--centerline", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--json", action="store_true")
    add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("metrics", help="evaluate masks and centerlines")
    p.add_argument("--pred", action="append")
    p.add_argument("--gt", action="append")
    p.add_argument("--pred-centerline", dest="pred_centerline", action="append")
    p.add_argument("--label", action="append")
    p.add_argument("--output", help="also write the JSON report here")
    p.add_argument("--json", action="store_true")
    add_config_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("scpr", help="straightened curved planar reformation")
    p.add_argument("--volume", required=True)
    p.add_argument("--centerline", required=True)
    p.add_argument("--width", type=int, default=15)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--angle", type=float, default=0.0)
    p.add_argument("--smooth", type=float, default=3.0,
                   help="pre-smoothing window in voxels of arc (0 = off)")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_scpr)

    p = sub.add_parser("pipeline", help="full end-to-end run")
    p.add_argument("--phantom", choices=KINDS,
                   help="generate inputs instead of reading them")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--volume", help="intensity container (f32)")
    p.add_argument("--coarse", help="coarse mask container (u8)")
    p.add_argument("--gt-mask", dest="gt_mask", help="ground-truth mask for metrics")
    p.add_argument("--scpr", action="store_true", help="also emit SCPR outputs")
    p.add_argument("--scpr-width", dest="scpr_width", type=int, default=15)
    p.add_argument("--smooth", type=float, default=3.0,
                   help="SCPR pre-smoothing window in voxels of arc (0 = off)")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(json.dumps({"error": "missing input file", "path": str(e)},
                         sort_keys=True))
        return EXIT_MISSING_INPUT
    except (ValueError, RuntimeError) as e:
        print(json.dumps({"error": str(e)}, sort_keys=True))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
