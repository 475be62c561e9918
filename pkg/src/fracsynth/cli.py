"""Command-line entry point: one binary, one subcommand per pipeline stage,
files as the only inter-stage contract.

    blocks sample | blocks select
    dfn gen
    scene slope | scene box
    traces extract
    analyze topology | analyze blocks
    render
    dataset manifest | dataset split | dataset matrix
    eval
    report

Exit codes: 0 success, 2 validation/generation error (with a machine-readable
JSON error on stderr), 64 unknown subcommand.  `--seed` falls back to the
FRACSYNTH_SEED environment variable.  Reruns with equal config and seed
produce byte-identical artifact trees regardless of `--jobs`.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, blockshape, dfn as dfnmod, metrics, scenes, traces as tracesmod
from .dataset import (
    ManifestRoot,
    build_experiment_matrix,
    build_manifest,
    load_manifest_jsonl,
    save_manifest_jsonl,
    save_plan_jsonl,
    split_train_val,
    write_datasheet,
)
from .errors import GenerationError, ValidationError
from .geometry import fit_plane, load_obj, save_obj
from .imaging import (
    Bvh,
    RenderConfig,
    load_mask,
    render_pair,
    sample_camera_poses,
    save_image_pair,
    texture_suite,
)
from .provenance import parse_kv_config, write_provenance

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_USAGE = 64

_COMMANDS = ("blocks", "dfn", "scene", "traces", "analyze", "render",
             "dataset", "eval", "report")


def _sanitize_arg(v):
    # provenance stores basenames so identical runs in different roots
    # produce byte-identical records
    if isinstance(v, str) and os.sep in v:
        return os.path.basename(v)
    if isinstance(v, (list, tuple)):
        return [_sanitize_arg(x) for x in v]
    return v


def _args_dict(args) -> dict:
    return {k: _sanitize_arg(v) for k, v in vars(args).items() if k != "func"}


def _seed_from(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FRACSYNTH_SEED")
    if env is not None:
        return int(env)
    raise ValidationError("a --seed is required (or set FRACSYNTH_SEED)")


def _block_letters(i: int) -> str:
    letters = ""
    i += 1
    while i > 0:
        i, rem = divmod(i - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def _dfn_config_from(args) -> dfnmod.DfnConfig:
    kwargs = {}
    if args.config:
        cfg = parse_kv_config(args.config)
        size_kwargs = {}
        if "size_mu" in cfg:
            size_kwargs["mu"] = float(cfg.pop("size_mu"))
        if "size_sigma" in cfg:
            size_kwargs["sigma"] = float(cfg.pop("size_sigma"))
        if size_kwargs:
            kwargs["size_dist"] = dfnmod.SizeDist(**size_kwargs)
        for key in ("fisher_kappa", "random_fraction", "termination_prob", "n_gon_sides"):
            if key in cfg:
                kwargs[key] = cfg.pop(key)
        if cfg:
            raise ValidationError(f"unknown dfn config keys: {sorted(cfg)}")
    return dfnmod.DfnConfig(**kwargs)


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------

def _cmd_blocks_sample(args) -> int:
    seed = _seed_from(args)
    ranges = blockshape.ParameterRanges(
        edge=(args.edge_min, args.edge_max),
        alpha12=(args.angle_min, args.angle_max),
        alpha13=(args.angle_min, args.angle_max),
        alpha23=(args.angle_min, args.angle_max),
    )
    pop = blockshape.sample_parallelepipeds(args.n, ranges=ranges, seed=seed)
    blockshape.export_population_csv(pop, args.out)
    write_provenance(args.out, "blocks sample", _args_dict(args), seed)
    return EXIT_OK


def _load_population_csv(path):
    import csv as _csv

    pop = []
    with open(path) as fh:
        for row in _csv.DictReader(fh):
            pop.append(blockshape.Parallelepiped(
                float(row["a1"]), float(row["a2"]), float(row["a3"]),
                float(row["alpha12"]), float(row["alpha13"]), float(row["alpha23"]),
            ))
    return pop


def _cmd_blocks_select(args) -> int:
    pop = _load_population_csv(args.population)
    sel = blockshape.select_representatives(pop, args.k)
    blockshape.export_selection_jsonl(pop, sel, args.out)
    write_provenance(args.out, "blocks select", _args_dict(args))
    return EXIT_OK


def _cmd_dfn_gen(args) -> int:
    seed = _seed_from(args)
    blocks = blockshape.load_selection_jsonl(args.blocks)
    if not blocks:
        raise ValidationError("no blocks in selection file")
    lo = np.asarray([float(x) for x in args.region.split(",")[:3]])
    hi = np.asarray([float(x) for x in args.region.split(",")[3:6]])
    region = dfnmod.Region(lo=lo, hi=hi)
    config = _dfn_config_from(args)
    from .geometry import Orientation, orientation_to_normal

    face_normal = orientation_to_normal(Orientation(args.face_dip, args.face_dd))
    suite = dfnmod.build_dfn_suite(blocks, region, master_seed=seed, config=config,
                                   face_normal=face_normal)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, d in enumerate(suite):
        dfnmod.save_dfn_jsonl(d, out / f"dfn_{_block_letters(i)}.jsonl")
    write_provenance(str(out), "dfn gen", _args_dict(args), seed)
    return EXIT_OK


def _cmd_scene_slope(args) -> int:
    spec = scenes.SlopeSpec(
        length=args.length, total_height=args.height,
        bench_height=args.bench_height, bench_angle=args.bench_angle,
        berm_width=args.berm_width,
    )
    mesh = scenes.build_slope_mesh(spec, resolution=args.resolution)
    if args.roughness_amplitude > 0.0:
        seed = _seed_from(args)
        mesh = scenes.apply_perlin_roughness(
            mesh, scenes.RoughnessSpec(amplitude=args.roughness_amplitude, seed=seed)
        )
    save_obj(mesh, args.out)
    write_provenance(args.out, "scene slope", _args_dict(args), args.seed)
    return EXIT_OK


def _cmd_scene_box(args) -> int:
    spec = scenes.BoxSceneSpec(gap=args.gap)
    mesh, gap_traces = scenes.build_box_scene(spec)
    save_obj(mesh, args.out)
    if args.traces_out:
        tracesmod.save_traces_jsonl(gap_traces, args.traces_out)
    write_provenance(args.out, "scene box", _args_dict(args))
    return EXIT_OK


def _cmd_traces_extract(args) -> int:
    seed = _seed_from(args)
    mesh = load_obj(args.mesh)
    network = dfnmod.load_dfn_jsonl(args.dfn)
    raw = tracesmod.extract_traces(network, mesh)
    style = tracesmod.TraceStyle(
        t_min=args.t_min, t_max=args.t_max,
        waviness_amplitude=args.waviness_amplitude,
        waviness_wavelength=args.waviness_wavelength,
    )
    styled = tracesmod.style_traces(raw, style, seed=seed)
    tracesmod.save_traces_jsonl(styled, args.out)
    if args.svg:
        tracesmod.save_traces_svg(styled, args.svg)
    write_provenance(args.out, "traces extract", _args_dict(args), seed)
    return EXIT_OK


def _cmd_analyze_topology(args) -> int:
    rows = []
    summaries = []
    mesh = load_obj(args.mesh) if args.mesh else None
    for path in args.traces:
        trcs = tracesmod.load_traces_jsonl(path)
        if trcs:
            pts = np.concatenate([t.polyline for t in trcs])
            plane = fit_plane(pts)
            polys = analysis.project_polylines(trcs, plane)
            if mesh is not None:
                boundary = analysis.mesh_boundary_2d(mesh, plane)
            elif args.boundary_mode == "exclude":
                all2d = np.concatenate(polys)
                boundary = (all2d[:, 0].min(), all2d[:, 0].max(),
                            all2d[:, 1].min(), all2d[:, 1].max())
            else:
                boundary = None
            nodes = analysis.classify_nodes(polys, boundary=boundary,
                                            boundary_mode=args.boundary_mode)
            summary = analysis.topology_summary(nodes)
        else:
            summary = analysis.TopologySummary(0, 0, 0)
        rows.append((Path(path).stem, summary))
        summaries.append(summary)
    analysis.save_topology_csv(rows, args.out)
    if args.svg:
        analysis.save_ternary_svg(summaries, args.svg)
    write_provenance(args.out, "analyze topology", _args_dict(args))
    return EXIT_OK


def _cmd_analyze_blocks(args) -> int:
    seed = _seed_from(args)
    blocks = blockshape.load_selection_jsonl(args.blocks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    size = tuple(float(x) for x in args.region_size.split(","))
    for i, block in enumerate(blocks):
        sets = [(o, s) for o, s in blockshape.joint_sets_from_block(block)]
        stats = analysis.block_statistics(sets, size, jitter=args.jitter,
                                          seed=dfnmod.derive_seed(seed, i))
        label = _block_letters(i)
        analysis.save_block_stats_csv(stats, out / f"blockstats_{label}.csv")
        analysis.save_volume_cdf_svg(stats, out / f"blockstats_{label}.svg")
    write_provenance(str(out), "analyze blocks", _args_dict(args), seed)
    return EXIT_OK


def _render_combo(mesh_path, traces_path, dfn_id, texture, poses, config_args, out_dir):
    """Render all poses of one (dfn, texture) pair; used by worker processes."""
    mesh = load_obj(mesh_path)
    trcs = tracesmod.load_traces_jsonl(traces_path)
    bvh = Bvh(mesh.vertices, mesh.triangles)
    config = RenderConfig(width=config_args["width"], height=config_args["height"])
    written = []
    for pose_id, cam in poses:
        pair = render_pair(mesh, trcs, texture, cam, config, bvh=bvh,
                           dfn_id=dfn_id, pose_id=pose_id)
        rgb_path, mask_path = save_image_pair(pair, out_dir)
        written.append((rgb_path, mask_path, dfn_id, texture.texture_id, pose_id))
    return written


def _cmd_render(args) -> int:
    seed = _seed_from(args)
    if args.poses < 1:
        raise ValidationError("at least one pose per scene is required")
    traces_paths = sorted(args.traces)
    if not traces_paths:
        raise ValidationError("no trace files given")
    texture_ids = [int(x) for x in args.textures.split(",")]
    suite = texture_suite(seed=seed)
    if any(t < 0 or t >= len(suite) for t in texture_ids):
        raise ValidationError(f"texture ids must be in 0..{len(suite) - 1}")
    d_min, d_max = (float(x) for x in args.dist.split(","))
    mesh = load_obj(args.mesh)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for di, tpath in enumerate(traces_paths):
        dfn_id = Path(tpath).stem.replace("traces_", "dfn")
        poses = sample_camera_poses(mesh, args.poses, (d_min, d_max),
                                    seed=dfnmod.derive_seed(seed, di), fov=args.fov)
        enumerated = list(enumerate(poses))
        for tid in texture_ids:
            jobs.append((args.mesh, tpath, dfn_id, suite[tid], enumerated,
                         {"width": args.width, "height": args.height}, str(out)))

    if args.jobs > 1:
        # spawn: forking after the numba threading runtime starts is unsafe
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=args.jobs, mp_context=ctx) as pool:
            results = list(pool.map(_render_combo_star, jobs))
    else:
        results = [_render_combo(*j) for j in jobs]

    manifest_lines = []
    for written in results:
        for rgb_path, mask_path, dfn_id, tid, pose_id in written:
            manifest_lines.append(json.dumps({
                "image_path": os.path.basename(rgb_path),
                "mask_path": os.path.basename(mask_path),
                "dfn": dfn_id, "texture_id": tid, "pose": pose_id,
            }, sort_keys=True))
    with open(out / "render_manifest.jsonl", "w") as fh:
        fh.write("\n".join(sorted(manifest_lines)) + "\n")
    prov_args = {k: v for k, v in _args_dict(args).items() if k != "jobs"}
    write_provenance(str(out), "render", prov_args, seed)
    return EXIT_OK


def _render_combo_star(job):
    return _render_combo(*job)


def _parse_root(spec: str) -> ManifestRoot:
    # tag=path:domain:kind
    try:
        tag, rest = spec.split("=", 1)
        path, domain, kind = rest.rsplit(":", 2)
    except ValueError:
        raise ValidationError(
            f"bad --root {spec!r}; expected tag=path:domain:kind"
        ) from None
    return ManifestRoot(path=path, domain=domain, scene_kind=kind, site_tag=tag)


def _cmd_dataset_manifest(args) -> int:
    roots = [_parse_root(r) for r in args.root]
    records, errors = build_manifest(roots)
    save_manifest_jsonl(records, args.out)
    if errors:
        with open(f"{args.out}.errors.json", "w") as fh:
            json.dump([{"path": p, "reason": r} for p, r in errors], fh, indent=1)
            fh.write("\n")
    write_provenance(args.out, "dataset manifest", _args_dict(args))
    return EXIT_OK


def _cmd_dataset_split(args) -> int:
    seed = _seed_from(args)
    records = load_manifest_jsonl(args.manifest)
    out = split_train_val(records, seed=seed)
    save_manifest_jsonl(out, args.out)
    write_provenance(args.out, "dataset split", _args_dict(args), seed)
    return EXIT_OK


def _cmd_dataset_matrix(args) -> int:
    seed = _seed_from(args)
    records = load_manifest_jsonl(args.manifest)
    plans = build_experiment_matrix(records, seed=seed, test_fraction=args.test_fraction)
    if args.proportion:
        keep = {int(x) for x in args.proportion.split(",")}
        plans = [p for p in plans if p.real_proportion in keep]
        if not plans:
            raise ValidationError(f"no plans match proportions {sorted(keep)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for plan in plans:
        path = save_plan_jsonl(plan, str(out))
        index.append({"plan": plan.plan_id, "file": os.path.basename(path),
                      "synthetic": len(plan.synthetic),
                      "real_train": len(plan.real_train),
                      "real_test": len(plan.real_test)})
    with open(out / "plans_index.json", "w") as fh:
        json.dump(index, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_datasheet(records, plans, seed, out / "datasheet.md")
    write_provenance(str(out), "dataset matrix", _args_dict(args), seed)
    return EXIT_OK


def _cmd_eval(args) -> int:
    pred_dir = Path(args.pred)
    label_dir = Path(args.labels)
    pairs = []
    for pred_path in sorted(pred_dir.glob("*.png")):
        stem = pred_path.stem
        if stem.endswith("_mask"):
            stem = stem[: -len("_mask")]
        label_path = label_dir / f"{stem}_mask.png"
        if not label_path.exists():
            continue
        pairs.append((stem, load_mask(pred_path), load_mask(label_path)))
    if not pairs:
        raise ValidationError("no prediction/label pairs found")
    rows = metrics.evaluate_pairs(pairs)
    metrics.save_eval_csv(rows, args.out, aggregate=args.aggregate)
    write_provenance(args.out, "eval", _args_dict(args))
    return EXIT_OK


def _cmd_report(args) -> int:
    import csv as _csv

    scores, exp_means, rejects = metrics.quality_ingest(args.quality)
    dice_by_key = {}
    with open(args.dice) as fh:
        for row in _csv.DictReader(fh):
            dice_by_key[(row["experiment"], int(row["epoch"]))] = float(row["dice"])
    paired = metrics.join_quality_with_dice(scores, dice_by_key)
    if len(paired) < 2:
        raise ValidationError("need at least 2 (dice, quality) pairs to correlate")
    xs = [d for d, _ in paired]
    ys = [q for _, q in paired]
    fits = metrics.correlation_fits(xs, ys)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "dice_vs_quality.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["r", "r2_linear", "r2_quadratic", "delta_r2"])
        w.writerow([f"{fits.r:.6f}", f"{fits.r2_linear:.6f}",
                    f"{fits.r2_quadratic:.6f}", f"{fits.delta_r2:.6f}"])
        w.writerow([])
        w.writerow(["experiment", "mean_quality"])
        for k, v in exp_means.items():
            w.writerow([k, f"{v:.6f}"])
        if rejects:
            w.writerow([])
            w.writerow(["rejected_row", "reason"])
            for lineno, reason in rejects:
                w.writerow([lineno, reason])
    metrics.save_dice_quality_svg(xs, ys, fits, out / "dice_vs_quality.svg")
    write_provenance(str(out), "report", _args_dict(args))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracsynth", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, seed=True, out=True):
        if seed:
            sp.add_argument("--seed", type=int, default=None)
        if out:
            sp.add_argument("--out", required=True)

    blocks = sub.add_parser("blocks").add_subparsers(dest="sub", required=True)
    bs = blocks.add_parser("sample")
    bs.add_argument("--n", type=int, required=True)
    bs.add_argument("--edge-min", type=float, default=1.0)
    bs.add_argument("--edge-max", type=float, default=6.0)
    bs.add_argument("--angle-min", type=float, default=60.0)
    bs.add_argument("--angle-max", type=float, default=120.0)
    add_common(bs)
    bs.set_defaults(func=_cmd_blocks_sample)
    bk = blocks.add_parser("select")
    bk.add_argument("--population", required=True)
    bk.add_argument("--k", type=int, required=True)
    add_common(bk, seed=False)
    bk.set_defaults(func=_cmd_blocks_select)

    dfn_p = sub.add_parser("dfn").add_subparsers(dest="sub", required=True)
    dg = dfn_p.add_parser("gen")
    dg.add_argument("--blocks", required=True)
    dg.add_argument("--region", default="-14,0,-2,4,100,22",
                    help="x0,y0,z0,x1,y1,z1 of the generation box")
    dg.add_argument("--config", default=None)
    dg.add_argument("--face-dip", type=float, default=75.0,
                    help="dip of the mapped face; blocks are oriented against it")
    dg.add_argument("--face-dd", type=float, default=90.0)
    add_common(dg)
    dg.set_defaults(func=_cmd_dfn_gen)

    scene = sub.add_parser("scene").add_subparsers(dest="sub", required=True)
    ss = scene.add_parser("slope")
    ss.add_argument("--length", type=float, default=100.0)
    ss.add_argument("--height", type=float, default=20.0)
    ss.add_argument("--bench-height", type=float, default=10.0)
    ss.add_argument("--bench-angle", type=float, default=75.0)
    ss.add_argument("--berm-width", type=float, default=1.5)
    ss.add_argument("--resolution", type=float, default=1.0)
    ss.add_argument("--roughness-amplitude", type=float, default=0.0)
    add_common(ss)
    ss.set_defaults(func=_cmd_scene_slope)
    sb = scene.add_parser("box")
    sb.add_argument("--gap", type=float, default=0.01)
    sb.add_argument("--traces-out", default=None)
    add_common(sb, seed=False)
    sb.set_defaults(func=_cmd_scene_box)

    tr = sub.add_parser("traces").add_subparsers(dest="sub", required=True)
    te = tr.add_parser("extract")
    te.add_argument("--dfn", required=True)
    te.add_argument("--mesh", required=True)
    te.add_argument("--t-min", type=float, default=0.01)
    te.add_argument("--t-max", type=float, default=0.10)
    te.add_argument("--waviness-amplitude", type=float, default=0.03)
    te.add_argument("--waviness-wavelength", type=float, default=2.0)
    te.add_argument("--svg", default=None)
    add_common(te)
    te.set_defaults(func=_cmd_traces_extract)

    an = sub.add_parser("analyze").add_subparsers(dest="sub", required=True)
    at = an.add_parser("topology")
    at.add_argument("--traces", nargs="+", required=True)
    at.add_argument("--mesh", default=None,
                    help="surface OBJ whose boundary censors trace endpoints")
    at.add_argument("--boundary-mode", choices=("count", "exclude"), default="count")
    at.add_argument("--svg", default=None)
    add_common(at, seed=False)
    at.set_defaults(func=_cmd_analyze_topology)
    ab = an.add_parser("blocks")
    ab.add_argument("--blocks", required=True)
    ab.add_argument("--region-size", default="20,20,20")
    ab.add_argument("--jitter", type=float, default=0.3)
    add_common(ab)
    ab.set_defaults(func=_cmd_analyze_blocks)

    rd = sub.add_parser("render")
    rd.add_argument("--mesh", required=True)
    rd.add_argument("--traces", nargs="+", required=True)
    rd.add_argument("--textures", default="0,1")
    rd.add_argument("--poses", type=int, default=5)
    rd.add_argument("--dist", default="8,20")
    rd.add_argument("--fov", type=float, default=50.0)
    rd.add_argument("--width", type=int, default=800)
    rd.add_argument("--height", type=int, default=800)
    rd.add_argument("--jobs", type=int, default=1)
    add_common(rd)
    rd.set_defaults(func=_cmd_render)

    ds = sub.add_parser("dataset").add_subparsers(dest="sub", required=True)
    dm = ds.add_parser("manifest")
    dm.add_argument("--root", nargs="+", required=True,
                    help="tag=path:domain:kind (e.g. larvik=/data/larvik:real:slope)")
    add_common(dm, seed=False)
    dm.set_defaults(func=_cmd_dataset_manifest)
    dsp = ds.add_parser("split")
    dsp.add_argument("--manifest", required=True)
    add_common(dsp)
    dsp.set_defaults(func=_cmd_dataset_split)
    dmx = ds.add_parser("matrix")
    dmx.add_argument("--manifest", required=True)
    dmx.add_argument("--test-fraction", type=float, default=0.3)
    dmx.add_argument("--proportion", default=None,
                     help="comma list restricting the materialised proportions")
    add_common(dmx)
    dmx.set_defaults(func=_cmd_dataset_matrix)

    ev = sub.add_parser("eval")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--labels", required=True)
    ev.add_argument("--aggregate", choices=("image", "pixel"), default="image")
    add_common(ev, seed=False)
    ev.set_defaults(func=_cmd_eval)

    rp = sub.add_parser("report")
    rp.add_argument("--quality", required=True)
    rp.add_argument("--dice", required=True)
    add_common(rp, seed=False)
    rp.set_defaults(func=_cmd_report)

    return p


def dispatch(argv) -> int:
    argv = list(argv)
    if not argv or (argv[0] not in _COMMANDS and not argv[0].startswith("-")):
        sys.stderr.write(
            f"unknown subcommand: {argv[0] if argv else ''}\n"
            f"usage: fracsynth {{{','.join(_COMMANDS)}}} ...\n"
        )
        return EXIT_USAGE
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, GenerationError) as exc:
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}, sort_keys=True
        ) + "\n")
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
