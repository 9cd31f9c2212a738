"""Batch pipeline driver: every stage as a subcommand plus an end-to-end
``pipeline`` command.

Every command takes a JSON config file plus overriding flags; all
randomness flows from a single ``--seed`` with per-stage sub-seeds derived
by hashing stage tags, so any stage can be rerun in isolation
reproducibly. Commands write a manifest (inputs, effective config, config
hash, seed, outputs) next to their outputs; nothing in the output tree
depends on wall-clock time or worker count.

Exit codes: 0 success, 2 configuration, 3 file format / I-O, 4 domain
invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .container import read_heldout, read_mcop, write_heldout, write_mcop
from .core import McopImage
from .erosion import DEFAULT_COMPLETENESS_RANGE, default_mask_count, erode_image
from .errors import ConfigError, McopError
from .inpaint import InpaintConfig, baseline_inpaint, export_for_external, import_from_external
from .metrics import EvalConfig, MetricsReport, evaluate
from .patchbank import PatchBank, build_bank, default_patch_size, load_bank, save_bank
from .ply import read_ply, write_ply
from .preview import write_previews
from .projection import DEFAULT_MAX_DEPTH, project
from .reproject import reproject
from .sweep import RotationProfile, integrate_slit_poses, read_polylines, resample_path, write_polylines
from .synth import StructureSpec, profile_from_structure, synth_erosion_mask, synth_wall
from .core import PointCloud


# ---------------------------------------------------------------- config --

DEFAULT_CONFIG = {
    "seed": 0,
    "step": 0.02,
    "splat_factor": 1.5,
    "max_depth": DEFAULT_MAX_DEPTH,
    "arc_rows": 88,
    "turn_clearance": 0.06,
    "rows": None,
    "erosion": {
        "n_masks": None,
        "completeness_range": list(DEFAULT_COMPLETENESS_RANGE),
        "mask_size": 128,
        "bank_size": 12,
        "severity_range": [0.3, 0.7],
    },
    "patch_bank": {
        "w": None,
        "stride": None,
        "min_completeness": 0.95,
        "cap": 200000,
    },
    "inpaint": {
        "iterations": 2,
        "search_candidates": 32,
        "lambda_cons": 1.0,
        "lambda_reg": 1.0,
        "lambda_sim": 0.1,
    },
    "eval": {"n_windows": 500, "w": None},
    "structures": [
        {
            "name": "straight_door",
            "footprint": [[0.0, 0.0], [2.2, 0.0]],
            "height": 1.6,
            "doors": [{"start": 0.9, "end": 1.35}],
        },
        {
            "name": "l_shape",
            "footprint": [[0.0, 0.0], [1.6, 0.0], [1.6, 1.2]],
            "height": [[0.0, 1.5], [1.0, 1.7]],
        },
        {
            "name": "enclosure",
            "footprint": [[0.0, 0.0], [1.8, 0.0], [1.8, 1.8], [0.0, 1.8]],
            "closed": True,
            "height": 1.5,
        },
    ],
}


def _deep_merge(base, override):
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _validate_config(cfg):
    for key in cfg:
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"unknown config key {key!r}")
    for section in ("erosion", "patch_bank", "inpaint", "eval"):
        for key in cfg.get(section, {}):
            if key not in DEFAULT_CONFIG[section]:
                raise ConfigError(f"unknown config key {section}.{key!r}")


def load_config(path=None, overrides=None) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            user = json.load(f)
        _validate_config(user)
        cfg = _deep_merge(cfg, user)
    for dotted, value in (overrides or []):
        node = cfg
        parts = dotted.split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[p]
        leaf = parts[-1]
        if leaf not in node and parts[0] not in ("structures",):
            raise ConfigError(f"unknown config key {dotted!r}")
        try:
            node[leaf] = json.loads(value)
        except json.JSONDecodeError:
            node[leaf] = value
    _validate_config(cfg)
    return cfg


def config_hash(cfg) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def stage_seed(seed: int, *tags) -> int:
    """Per-stage sub-seed: master seed XOR a stable hash of the stage tag."""
    h = hashlib.sha256(":".join(str(t) for t in tags).encode("utf-8")).digest()
    return (int(seed) ^ int.from_bytes(h[:8], "little")) & 0x7FFFFFFFFFFFFFFF


def write_manifest(path, command, inputs, cfg, seed, outputs):
    doc = {
        "command": command,
        "inputs": sorted(str(i) for i in inputs),
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": int(seed),
        "outputs": sorted(str(o) for o in outputs),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")


# ------------------------------------------------------------- helpers ---


def _rows_for(cfg, max_height: float) -> int:
    if cfg.get("rows"):
        return int(cfg["rows"])
    step = cfg["step"]
    return int(np.ceil((max_height + cfg["turn_clearance"]) / step)) + int(cfg["arc_rows"])


def _profile_from_image(image: McopImage) -> RotationProfile:
    rot = image.rotation
    turn = np.argmax(rot > 0.0, axis=0).astype(np.int64)
    return RotationProfile(rot.copy(), turn)


def _bank_w(cfg, images) -> int:
    w = cfg["patch_bank"]["w"]
    if w:
        return int(w)
    return default_patch_size(min(im.height for im in images))


def _mask_bank(cfg, seed: int, height: int, width: int) -> PatchBank:
    size = min(int(cfg["erosion"]["mask_size"]), height, width)
    lo, hi = cfg["erosion"]["severity_range"]
    n = int(cfg["erosion"]["bank_size"])
    sevs = np.linspace(lo, hi, n)
    masks = tuple(
        synth_erosion_mask(size, size, float(s), seed=stage_seed(seed, "mask", i))
        for i, s in enumerate(sevs)
    )
    return PatchBank(size, masks, 0.0, ("synthetic-erosion",))


def _project_structure(cloud, loops, meta, cfg):
    """Project every annotation loop; returns (images, paths)."""
    step = cfg["step"]
    h = _rows_for(cfg, float(meta["max_height"]))
    images, paths = [], []
    for loop in loops:
        path = resample_path(loop, ground_z=0.0, offset=0.0, step=step, closed=None)
        prof = profile_from_structure(path, meta, h, step, cfg["turn_clearance"])
        poses = integrate_slit_poses(path, prof, h, step)
        images.append(project(cloud, poses, cfg["splat_factor"] * step, cfg["max_depth"]))
        paths.append(path)
    return images, paths


# -------------------------------------------------------- pipeline core --


def _run_structure(payload):
    """Full per-structure pipeline; runs in a worker process."""
    cfg = payload["config"]
    seed = payload["seed"]
    sdir = Path(payload["dir"])
    sdir.mkdir(parents=True, exist_ok=True)
    spec = StructureSpec.from_dict(payload["structure"])
    name = spec.name
    step = cfg["step"]

    res = synth_wall(spec, seed=stage_seed(seed, name, "synth"))
    write_ply(res.cloud, sdir / "cloud.ply")
    write_polylines(res.loops, sdir / "annotation.txt")
    with open(sdir / "structure.json", "w", encoding="utf-8") as f:
        json.dump(res.meta, f, sort_keys=True, indent=2)

    truths, paths = _project_structure(res.cloud, res.loops, res.meta, cfg)
    for k, im in enumerate(truths):
        write_mcop(im, sdir / f"truth_{k:02d}.mcop")

    mask_bank = _mask_bank(cfg, stage_seed(seed, name, "maskbank"),
                           min(im.height for im in truths),
                           min(im.width for im in truths))
    eroded, helds = [], []
    for k, im in enumerate(truths):
        n = cfg["erosion"]["n_masks"] or default_mask_count(im, mask_bank.w)
        e, hmap = erode_image(
            im, mask_bank, n, tuple(cfg["erosion"]["completeness_range"]),
            seed=stage_seed(seed, name, "erode", k),
        )
        write_mcop(e, sdir / f"eroded_{k:02d}.mcop")
        write_heldout(hmap, sdir / f"heldout_{k:02d}.mhld")
        eroded.append(e)
        helds.append(hmap)

    pb = cfg["patch_bank"]
    bank = build_bank(
        eroded, w=_bank_w(cfg, eroded), min_completeness=pb["min_completeness"],
        stride=pb["stride"], cap=pb["cap"], seed=stage_seed(seed, name, "bank"),
        names=[f"{name}:{k}" for k in range(len(eroded))],
    )
    save_bank(bank, sdir / "bank.mpbk")

    icfg = InpaintConfig(
        iterations=int(cfg["inpaint"]["iterations"]),
        search_candidates=int(cfg["inpaint"]["search_candidates"]),
        lambda_cons=float(cfg["inpaint"]["lambda_cons"]),
        lambda_reg=float(cfg["inpaint"]["lambda_reg"]),
        lambda_sim=float(cfg["inpaint"]["lambda_sim"]),
        seed=stage_seed(seed, name, "inpaint"),
    )
    completed = []
    for k, e in enumerate(eroded):
        prof = _profile_from_image(truths[k])
        out = baseline_inpaint(e, bank, prof, icfg)
        write_mcop(out, sdir / f"inpainted_{k:02d}.mcop")
        completed.append(out)

    clouds = [reproject(im, p, step) for im, p in zip(completed, paths)]
    merged = PointCloud(
        np.vstack([c.points for c in clouds]), np.vstack([c.colors for c in clouds])
    )
    write_ply(merged, sdir / "completed.ply")

    ew = cfg["eval"]["w"] or bank.w
    reports = []
    for k in range(len(completed)):
        ecfg = EvalConfig(
            n_windows=int(cfg["eval"]["n_windows"]), w=int(ew),
            seed=stage_seed(seed, name, "eval", k),
        )
        reports.append(evaluate(completed[k], truths[k], helds[k], paths[k], ecfg, step=step))
    rep = MetricsReport.aggregate(reports)
    with open(sdir / "report.json", "w", encoding="utf-8") as f:
        f.write(rep.to_json())
    return name, rep


def run_pipeline(cfg, out_dir, seed, workers=1):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    structures = cfg.get("structures") or []
    if not structures:
        raise ConfigError("config key 'structures' is empty")
    names = [s.get("name", f"structure-{i}") for i, s in enumerate(structures)]
    if len(set(names)) != len(names):
        raise ConfigError("structure names must be unique")
    payloads = [
        {"config": cfg, "seed": seed, "structure": s, "dir": str(out / "structures" / n)}
        for n, s in zip(names, structures)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_structure, payloads))
    else:
        results = [_run_structure(p) for p in payloads]

    results.sort(key=lambda r: r[0])
    agg = MetricsReport.aggregate([r[1] for r in results])
    report_json = out / "metrics_report.json"
    doc = {
        "aggregate": json.loads(agg.to_json()),
        "structures": {n: json.loads(r.to_json()) for n, r in results},
    }
    with open(report_json, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")
    lines = ["# aggregate", agg.to_text()]
    for n, r in results:
        lines += [f"# structure {n}", r.to_text()]
    (out / "metrics_report.txt").write_text("\n".join(lines), encoding="utf-8")
    write_manifest(
        out / "manifest_pipeline.json", "pipeline", [], cfg, seed,
        ["metrics_report.json", "metrics_report.txt"]
        + [f"structures/{n}" for n in names],
    )
    return agg


# ------------------------------------------------------------ commands ---


def _cmd_synth(args):
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for s in cfg["structures"]:
        spec = StructureSpec.from_dict(s)
        res = synth_wall(spec, seed=stage_seed(seed, spec.name, "synth"))
        sdir = out / spec.name
        sdir.mkdir(parents=True, exist_ok=True)
        write_ply(res.cloud, sdir / "cloud.ply")
        write_polylines(res.loops, sdir / "annotation.txt")
        with open(sdir / "structure.json", "w", encoding="utf-8") as f:
            json.dump(res.meta, f, sort_keys=True, indent=2)
        outputs += [f"{spec.name}/cloud.ply", f"{spec.name}/annotation.txt",
                    f"{spec.name}/structure.json"]
        print(f"synth {spec.name}: {res.meta['point_count']} points, {len(res.loops)} loop(s)")
    write_manifest(out / "manifest_synth.json", "synth",
                   [args.config] if args.config else [], cfg, seed, outputs)
    return 0


def _cmd_project(args):
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg["seed"]
    cloud = read_ply(args.cloud)
    loops = read_polylines(args.annotation)
    with open(args.structure, "r", encoding="utf-8") as f:
        meta = json.load(f)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images, _paths = _project_structure(cloud, loops, meta, cfg)
    outputs = []
    for k, im in enumerate(images):
        p = out / f"truth_{k:02d}.mcop"
        write_mcop(im, p)
        outputs.append(p.name)
        print(f"projected loop {k}: {im.height}x{im.width}, completeness {im.completeness():.3f}")
    write_manifest(out / "manifest_project.json", "project",
                   [args.cloud, args.annotation, args.structure], cfg, seed, outputs)
    return 0


def _cmd_erode(args):
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg["seed"]
    image = read_mcop(args.image)
    if args.mask_bank:
        bank = load_bank(args.mask_bank)
    else:
        bank = _mask_bank(cfg, stage_seed(seed, "maskbank"), image.height, image.width)
    n = args.n_masks or cfg["erosion"]["n_masks"] or default_mask_count(image, bank.w)
    rng = tuple(cfg["erosion"]["completeness_range"])
    eroded, held = erode_image(image, bank, n, rng, seed=stage_seed(seed, "erode"))
    write_mcop(eroded, args.out)
    write_heldout(held, args.held_out)
    write_manifest(Path(str(args.out) + ".manifest.json"), "erode",
                   [args.image] + ([args.mask_bank] if args.mask_bank else []),
                   cfg, seed, [args.out, args.held_out])
    print(f"eroded: completeness {image.completeness():.3f} -> {eroded.completeness():.3f}, "
          f"{int(held.sum())} held-out px")
    return 0


def _cmd_patch_bank(args):
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg["seed"]
    images = [read_mcop(p) for p in args.images]
    pb = cfg["patch_bank"]
    bank = build_bank(
        images, w=args.w or pb["w"], min_completeness=pb["min_completeness"],
        stride=args.stride or pb["stride"], cap=pb["cap"],
        seed=stage_seed(seed, "bank"), names=[str(p) for p in args.images],
    )
    save_bank(bank, args.out)
    hist = ", ".join(str(c) for c in bank.row_histogram())
    print(f"bank: {len(bank)} patches of {bank.w}px; row-band counts [{hist}]")
    write_manifest(Path(str(args.out) + ".manifest.json"), "patch-bank",
                   list(args.images), cfg, seed, [args.out])
    return 0


def _cmd_inpaint(args):
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg["seed"]
    image = read_mcop(args.image)
    bank = load_bank(args.bank)
    prof = _profile_from_image(image)
    icfg = InpaintConfig(
        iterations=int(cfg["inpaint"]["iterations"]),
        search_candidates=int(cfg["inpaint"]["search_candidates"]),
        lambda_cons=float(cfg["inpaint"]["lambda_cons"]),
        lambda_reg=float(cfg["inpaint"]["lambda_reg"]),
        lambda_sim=float(cfg["inpaint"]["lambda_sim"]),
        seed=stage_seed(seed, "inpaint"),
    )
    out = baseline_inpaint(image, bank, prof, icfg)
    write_mcop(out, args.out)
    write_manifest(Path(str(args.out) + ".manifest.json"), "inpaint",
                   [args.image, args.bank], cfg, seed, [args.out])
    print(f"inpainted: {int((~image.mask).sum())} px filled")
    return 0


def _cmd_export(args):
    image = read_mcop(args.image)
    prof = _profile_from_image(image)
    export_for_external(image, prof, args.dir)
    print(f"exported exchange directory: {args.dir}")
    return 0


def _cmd_import(args):
    result = import_from_external(args.dir)
    write_mcop(result.image, args.out)
    print(f"imported: {result.clamped} values sanitized")
    return 0


def _cmd_reproject(args):
    cfg = load_config(args.config, args.set)
    image = read_mcop(args.image)
    loops = read_polylines(args.annotation)
    if not (0 <= args.loop < len(loops)):
        raise ConfigError(f"--loop {args.loop} out of range ({len(loops)} loops)")
    path = resample_path(loops[args.loop], 0.0, 0.0, cfg["step"], closed=None)
    cloud = reproject(image, path, cfg["step"])
    write_ply(cloud, args.out, binary=not args.ascii)
    print(f"reprojected {len(cloud)} points")
    return 0


def _cmd_eval(args):
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg["seed"]
    pred = read_mcop(args.pred)
    truth = read_mcop(args.truth)
    held = read_heldout(args.held_out)
    loops = read_polylines(args.annotation)
    path = resample_path(loops[args.loop], 0.0, 0.0, cfg["step"], closed=None)
    ew = cfg["eval"]["w"] or default_patch_size(pred.height)
    ecfg = EvalConfig(n_windows=int(cfg["eval"]["n_windows"]), w=int(ew),
                      seed=stage_seed(seed, "eval"))
    rep = evaluate(pred, truth, held, path, ecfg, step=cfg["step"])
    with open(str(args.out) + ".json", "w", encoding="utf-8") as f:
        f.write(rep.to_json())
    with open(str(args.out) + ".txt", "w", encoding="utf-8") as f:
        f.write(rep.to_text())
    sys.stdout.write(rep.to_text())
    return 0


def _cmd_preview(args):
    image = read_mcop(args.image)
    paths = write_previews(image, args.out)
    print("previews: " + ", ".join(paths))
    return 0


def _cmd_pipeline(args):
    if args.write_default_config:
        with open(args.write_default_config, "w", encoding="utf-8") as f:
            json.dump(DEFAULT_CONFIG, f, sort_keys=True, indent=2)
            f.write("\n")
        print(f"wrote default config to {args.write_default_config}")
        return 0
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg["seed"]
    workers = args.workers or int(os.environ.get("MCOP_WORKERS", "1"))
    agg = run_pipeline(cfg, args.out, seed, workers)
    sys.stdout.write(agg.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mcop",
        description="Multi-center-of-projection point-cloud completion pipeline",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       type=lambda s: tuple(s.split("=", 1)),
                       help="override a config key (dotted path)")
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", help="generate synthetic structures")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("project", help="project a cloud into MCOP images")
    common(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--annotation", required=True)
    p.add_argument("--structure", required=True, help="structure.json metadata")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("erode", help="synthetically erode an image")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--held-out", required=True)
    p.add_argument("--mask-bank", default=None)
    p.add_argument("--n-masks", type=int, default=None)
    p.set_defaults(func=_cmd_erode)

    p = sub.add_parser("patch-bank", help="harvest a completeness-filtered patch bank")
    common(p)
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--w", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.set_defaults(func=_cmd_patch_bank)

    p = sub.add_parser("inpaint", help="run the exemplar-based baseline completer")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_inpaint)

    p = sub.add_parser("export", help="write the external-completer exchange dir")
    p.add_argument("--image", required=True)
    p.add_argument("--dir", required=True)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("import", help="read a completion back from the exchange dir")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_import)

    p = sub.add_parser("reproject", help="map an MCOP image back to a point cloud")
    common(p, seed=False)
    p.add_argument("--image", required=True)
    p.add_argument("--annotation", required=True)
    p.add_argument("--loop", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--ascii", action="store_true")
    p.set_defaults(func=_cmd_reproject)

    p = sub.add_parser("eval", help="evaluate a completion against ground truth")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--held-out", required=True)
    p.add_argument("--annotation", required=True)
    p.add_argument("--loop", type=int, default=0)
    p.add_argument("--out", required=True, help="report path prefix")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("preview", help="write PNG previews of an image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="path prefix")
    p.set_defaults(func=_cmd_preview)

    p = sub.add_parser("pipeline", help="synth -> project -> erode -> bank -> inpaint -> reproject -> eval")
    common(p)
    p.add_argument("--out", default="pipeline_out")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--write-default-config", default=None, metavar="PATH")
    p.set_defaults(func=_cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 3
    except McopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
