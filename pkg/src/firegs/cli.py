"""Command-line pipeline: one subcommand per reconstruction stage.

Every stage reads the JSON configuration (plus flag overrides), reads the
dataset bundle and earlier stage outputs from the work directory, and writes
its own outputs there. Exit codes: 0 success, 2 invalid input or config,
3 missing input, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import FireGSError, MissingInputError, NumericError, ValidationError

log = logging.getLogger("firegs")

DEFAULTS = {
    "bundle": "bundle",
    "workdir": "work",
    "seed": 0,
    "frame_rate": None,
    "camera_time_offsets": None,
    "shutter_mode": "global",
    "holdout_every": 8,
    "background_color": [0.0, 0.0, 0.0],
    "remove_fire": {"mask_threshold": 0.1},
    "pointcloud": {"stride": 2},
    "flow": {
        "mask_source": "bundle",
        "alpha0": 0.1,
        "depth_tolerance": 1.5,
        "min_views": 2,
        "grid": {"origin": [-0.4, -0.05, -0.4], "voxel_size": 0.025, "dims": [32, 40, 32]},
    },
    "init": {"frame_every": 2, "static_opacity": 0.8, "dynamic_opacity": 0.1, "neighbors": 3},
    "loss": {"lambda1": 0.8, "lambda_ssim": 0.2, "lambda_depth_start": 100.0, "lambda_depth_end": 1.0},
    "fit_static": {"iters": 1000},
    "fit_dynamic": {"iters": 1000},
    "optimizer": {"scene_extent": None},
    "evaluate": {"exclude_mask": None},
    "gradient_check": {"eps": 1e-4, "tolerance": 1e-3, "mixed_count": 50},
    "synth": {},
}


# -- configuration -------------------------------------------------------------

def load_schema() -> dict:
    return json.loads(resources.files("firegs").joinpath("config.schema.json").read_text())


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: dict) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(load_schema())
    error = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if error is not None:
        pointer = "/" + "/".join(str(p) for p in error.absolute_path)
        raise ValidationError(f"config {pointer}: {error.message}")


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the JSON file, then flag overrides; validated after each merge."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise MissingInputError(f"missing config file: {p}")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {p} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ValidationError("config / : must be a JSON object")
        validate_config(_merge({}, user))
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


# -- dataset access ------------------------------------------------------------

class Dataset:
    """Read access to a bundle directory (frames/, flows/, depths/, masks/, cameras.json)."""

    def __init__(self, root, cfg: dict):
        from .camera import load_cameras

        self.root = Path(root)
        if not self.root.is_dir():
            raise MissingInputError(f"missing bundle directory: {self.root}")
        self.cameras = load_cameras(self.root / "cameras.json")
        manifest_path = self.root / "manifest.json"
        self.manifest = json.loads(manifest_path.read_text()) if manifest_path.is_file() else {}
        first = self.root / "frames" / cam_name(0)
        if not first.is_dir():
            raise MissingInputError(f"missing frame directory: {first}")
        self.frame_count = len(sorted(first.glob("[0-9][0-9][0-9][0-9].png")))
        if self.frame_count == 0:
            raise MissingInputError(f"no frames in {first}")
        rate = cfg["frame_rate"] or self.manifest.get("frame_rate")
        if not rate:
            raise ValidationError("frame rate unknown: set frame_rate in the config or the bundle manifest")
        self.frame_rate = float(rate)
        offsets = cfg["camera_time_offsets"]
        if offsets is None:
            offsets = [0.0] * len(self.cameras)
        if len(offsets) != len(self.cameras):
            raise ValidationError("camera_time_offsets needs one entry per camera")
        self.offsets = [float(v) for v in offsets]
        every = cfg["holdout_every"]
        self.holdout = [k for k in range(self.frame_count) if every and k % every == every - 1]
        self.train = [k for k in range(self.frame_count) if k not in self.holdout]

    @property
    def frame_time(self) -> float:
        return 1.0 / self.frame_rate

    def time(self, ci: int, k: int) -> float:
        return k * self.frame_time + self.offsets[ci]

    def path(self, kind: str, ci: int, name: str) -> Path:
        return self.root / kind / cam_name(ci) / name

    def frame(self, ci: int, k: int):
        from .fileio import read_image

        return read_image(self.path("frames", ci, f"{k:04d}.png"))

    def flow(self, ci: int, k: int):
        from .fileio import read_flow

        return read_flow(self.path("flows", ci, f"{k:04d}.flo"))

    def mask(self, ci: int, k: int):
        from .fileio import read_mask

        return read_mask(self.path("masks", ci, f"{k:04d}.png"))

    def depth(self, ci: int, name: str, required: bool = True):
        from .fileio import read_depth

        p = self.path("depths", ci, name)
        if not p.is_file() and not required:
            return None
        return read_depth(p)


def cam_name(ci: int) -> str:
    return f"cam{ci:02d}"


def _workdir(cfg) -> Path:
    w = Path(cfg["workdir"])
    w.mkdir(parents=True, exist_ok=True)
    return w


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"missing input (run the earlier stage first): {path}")
    return path


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- stages ----------------------------------------------------------------

def cmd_synth_generate(cfg, args) -> int:
    from .synth import SynthSpec, generate, write_bundle

    settings = dict(cfg["synth"])
    settings.setdefault("seed", cfg["seed"])
    spec = SynthSpec.from_dict(settings)
    out = Path(args.out or cfg["bundle"])
    write_bundle(generate(spec), out)
    log.info("wrote synthetic bundle to %s", out)
    return 0


def cmd_remove_fire(cfg, args) -> int:
    from .background import frame_masks, min_intensity_projection
    from .fileio import write_image, write_mask
    from .rasters import VideoSequence

    ds = Dataset(cfg["bundle"], cfg)
    work = _workdir(cfg)
    thr = cfg["remove_fire"]["mask_threshold"]
    (work / "background").mkdir(exist_ok=True)
    for ci in range(len(ds.cameras)):
        video = VideoSequence([ds.frame(ci, k) for k in ds.train], ds.frame_rate)
        bg = min_intensity_projection(video)
        write_image(work / "background" / f"{cam_name(ci)}.png", bg)
        mdir = work / "masks" / cam_name(ci)
        mdir.mkdir(parents=True, exist_ok=True)
        every = VideoSequence([ds.frame(ci, k) for k in range(ds.frame_count)], ds.frame_rate)
        for k, m in enumerate(frame_masks(every, bg, thr)):
            write_mask(mdir / f"{k:04d}.png", m)
    return 0


def cmd_align_depth(cfg, args) -> int:
    from .depthfuse import alignment_residual, apply_alignment, fit_alignment
    from .fileio import write_depth

    ds = Dataset(cfg["bundle"], cfg)
    work = _workdir(cfg)
    report = {}
    for ci in range(len(ds.cameras)):
        mono = ds.depth(ci, "mono.pfm")
        stereo = ds.depth(ci, "stereo.pfm")
        align = fit_alignment(mono, stereo)
        report[cam_name(ci)] = {"a": align.a, "b": align.b,
                                "residual": alignment_residual(mono, stereo, align)}
        out = work / "depth" / cam_name(ci)
        out.mkdir(parents=True, exist_ok=True)
        write_depth(out / "mono_aligned.pfm", apply_alignment(mono, align))
        for k in range(ds.frame_count):
            per_frame = ds.depth(ci, f"mono_{k:04d}.pfm", required=False)
            if per_frame is not None:
                write_depth(out / f"mono_{k:04d}.pfm", apply_alignment(per_frame, align))
    _write_json(work / "depth" / "alignment.json", report)
    return 0


def cmd_fuse_pointcloud(cfg, args) -> int:
    from .depthfuse import fuse_pointcloud
    from .fileio import read_depth, read_image, write_pointcloud

    ds = Dataset(cfg["bundle"], cfg)
    work = _workdir(cfg)
    n = len(ds.cameras)
    stereo = [ds.depth(ci, "stereo.pfm") for ci in range(n)]
    aligned = [read_depth(_require(work / "depth" / cam_name(ci) / "mono_aligned.pfm")) for ci in range(n)]
    images = [read_image(_require(work / "background" / f"{cam_name(ci)}.png")) for ci in range(n)]
    cloud = fuse_pointcloud(ds.cameras, stereo, aligned, images, cfg["pointcloud"]["stride"])
    write_pointcloud(work / "pointcloud.ply", cloud)
    log.info("fused %d points", len(cloud))
    return 0


def _grid(cfg):
    from .flowfuse import GridSpec

    g = cfg["flow"]["grid"]
    return GridSpec(tuple(g["origin"]), g["voxel_size"], tuple(g["dims"]))


def _masks_for(ds, cfg, ci, k):
    from .fileio import read_mask

    if cfg["flow"]["mask_source"] == "bundle":
        return ds.mask(ci, k)
    return read_mask(_require(Path(cfg["workdir"]) / "masks" / cam_name(ci) / f"{k:04d}.png"))


def flow_frames(ds) -> list[int]:
    """Training frames that have a forward flow to the next frame."""
    return [k for k in ds.train if k < ds.frame_count - 1]


def cmd_fuse_flow(cfg, args) -> int:
    from .fileio import write_voxel_field
    from .flowfuse import fuse_flow_grid

    ds = Dataset(cfg["bundle"], cfg)
    work = _workdir(cfg)
    grid = _grid(cfg)
    fc = cfg["flow"]
    out = work / "flow"
    out.mkdir(exist_ok=True)
    n = len(ds.cameras)
    frames = flow_frames(ds)[:: cfg["init"]["frame_every"]]
    for k in frames:
        flows = [ds.flow(ci, k) for ci in range(n)]
        hints = [ds.depth(ci, f"flame_{k:04d}.pfm", required=False) for ci in range(n)]
        masks = [_masks_for(ds, cfg, ci, k) for ci in range(n)]
        field = fuse_flow_grid(ds.cameras, flows, hints, masks, grid, fc["alpha0"], fc["depth_tolerance"],
                               fc["min_views"])
        write_voxel_field(out / f"{k:04d}.vxf", field)
        log.info("frame %d: %d occupied voxels", k, int(field.occupancy.sum()))
    _write_json(out / "frames.json", {"frames": frames})
    return 0


def static_from_pointcloud(cloud, opacity: float, neighbors: int):
    """Isotropic statics whose scale is the RMS distance to the nearest neighbors."""
    from scipy.spatial import cKDTree

    from .gaussians import StaticGaussians, make_static

    if len(cloud) == 0:
        return StaticGaussians.empty()
    k = min(neighbors + 1, len(cloud))
    if k < 2:
        scale = np.full(len(cloud), 0.01)
    else:
        d, _ = cKDTree(cloud.positions).query(cloud.positions, k=k)
        scale = np.sqrt((d[:, 1:] ** 2).mean(axis=1))
    scale = np.maximum(scale, 1e-4)
    return make_static(cloud.positions, scale, cloud.colors, opacity)


def voxel_colors(ds, field, k):
    from .camera import project_points

    idx = field.occupied_indices()
    centers = field.voxel_centers(idx)
    total = np.zeros((len(idx), 3))
    count = np.zeros(len(idx))
    for ci, cam in enumerate(ds.cameras):
        uv, z = project_points(cam, centers)
        ok = cam.in_bounds(uv) & (z > 0)
        r = np.rint(uv[ok, 1]).astype(np.int64)
        c = np.rint(uv[ok, 0]).astype(np.int64)
        total[ok] += ds.frame(ci, k)[r, c]
        count[ok] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        return total / count[:, None]


def cmd_init_gaussians(cfg, args) -> int:
    from .fileio import read_pointcloud, read_voxel_field, write_scene
    from .gaussians import DynamicGaussians, GaussianScene, init_from_flow

    ds = Dataset(cfg["bundle"], cfg)
    work = _workdir(cfg)
    ic = cfg["init"]
    cloud = read_pointcloud(_require(work / "pointcloud.ply"))
    statics = static_from_pointcloud(cloud, ic["static_opacity"], ic["neighbors"])
    frames = json.loads(_require(work / "flow" / "frames.json").read_text())["frames"]
    dynamics = DynamicGaussians.empty()
    for k in frames:
        field = read_voxel_field(_require(work / "flow" / f"{k:04d}.vxf"))
        # seed per frame so the result does not depend on which frames were fused before
        g = init_from_flow(field, ds.frame_time, ds.time(0, k), cfg["seed"] * 100003 + k,
                           opacity=ic["dynamic_opacity"], voxel_colors=voxel_colors(ds, field, k))
        dynamics = dynamics.concat(g)
    scene = GaussianScene(statics, dynamics, cfg["background_color"])
    write_scene(work / "scene_init.ply", scene)
    log.info("initialized %d static and %d dynamic Gaussians", len(statics), len(dynamics))
    return 0


def _weights(cfg, iters):
    from .optimize import LossWeights

    return LossWeights(**cfg["loss"], total_iters=max(iters, 1))


def _optimizer(cfg, ds):
    from .optimize import OptimizerConfig, camera_extent

    opt = dict(cfg["optimizer"])
    if opt.get("scene_extent") is None:
        opt["scene_extent"] = camera_extent(ds.cameras)
    return OptimizerConfig.from_dict({**opt, "shutter_mode": cfg["shutter_mode"], "seed": cfg["seed"]})


def _fit_stage(cfg, args, stage, src, dst, trace_name) -> int:
    from .fileio import read_scene, write_scene
    from .gaussians import DynamicGaussians, GaussianScene
    from .optimize import STATIC_STAGE, fit, write_trace

    ds = Dataset(cfg["bundle"], cfg)
    work = _workdir(cfg)
    key = "fit_static" if stage == STATIC_STAGE else "fit_dynamic"
    iters = cfg[key]["iters"]
    src_path = _require(work / src)
    scene = read_scene(src_path)
    if iters == 0:
        (work / dst).write_bytes(src_path.read_bytes())
        write_trace(work / trace_name, [])
        return 0
    batches = (_static_batches if stage == STATIC_STAGE else _dynamic_batches)(ds, work)
    if stage == STATIC_STAGE:
        # the background images contain no fire; fit statics alone, then restore dynamics
        part = GaussianScene(scene.statics, DynamicGaussians.empty(), scene.background_color)
        result = fit(part, batches, _weights(cfg, iters), stage, _optimizer(cfg, ds), iters)
        out = GaussianScene(result.scene.statics, scene.dynamics, scene.background_color)
    else:
        result = fit(scene, batches, _weights(cfg, iters), stage, _optimizer(cfg, ds), iters)
        out = result.scene
    write_scene(work / dst, out)
    write_trace(work / trace_name, result.trace)
    return 0


def _static_batches(ds, work):
    from .fileio import read_depth, read_image
    from .optimize import TrainBatch

    batches = []
    for ci, cam in enumerate(ds.cameras):
        bg = read_image(_require(work / "background" / f"{cam_name(ci)}.png"))
        depth = read_depth(_require(work / "depth" / cam_name(ci) / "mono_aligned.pfm"))
        batches.append(TrainBatch(cam, bg, depth, None, 0.0))
    return batches


def _dynamic_batches(ds, work):
    from .fileio import read_depth
    from .optimize import TrainBatch

    batches = []
    for ci, cam in enumerate(ds.cameras):
        for k in ds.train:
            p = work / "depth" / cam_name(ci) / f"mono_{k:04d}.pfm"
            depth = read_depth(p) if p.is_file() else None
            batches.append(TrainBatch(cam, ds.frame(ci, k), depth, None, ds.time(ci, k)))
    return batches


def cmd_fit_static(cfg, args) -> int:
    return _fit_stage(cfg, args, "static", "scene_init.ply", "scene_static.ply", "trace_static.csv")


def cmd_fit_dynamic(cfg, args) -> int:
    return _fit_stage(cfg, args, "dynamic", "scene_static.ply", "scene_final.ply", "trace_dynamic.csv")


def cmd_render(cfg, args) -> int:
    from .camera import load_cameras
    from .fileio import read_scene, write_depth, write_image
    from .render import RenderRequest, render

    scene = read_scene(_require(args.scene))
    cams = load_cameras(_require(args.cameras))
    if not 0 <= args.camera_index < len(cams):
        raise ValidationError(f"camera index {args.camera_index} outside [0, {len(cams)})")
    out = render(scene, RenderRequest(cams[args.camera_index], args.time, cfg["shutter_mode"]))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_image(prefix.with_suffix(".png"), out.color)
    write_depth(prefix.with_name(prefix.name + "_depth.pfm"), out.depth)
    return 0


def cmd_evaluate(cfg, args) -> int:
    from .fileio import read_mask, read_scene, write_image
    from .metrics import evaluate_frame, summarize
    from .render import RenderRequest, render

    ds = Dataset(cfg["bundle"], cfg)
    work = _workdir(cfg)
    scene = read_scene(_require(Path(args.scene) if args.scene else work / "scene_final.ply"))
    frames = ds.holdout or list(range(ds.frame_count))
    exclude = cfg["evaluate"]["exclude_mask"]
    exclude = read_mask(_require(exclude)) if exclude else None
    out = work / "eval"
    (out / "renders").mkdir(parents=True, exist_ok=True)
    rows = []
    for ci, cam in enumerate(ds.cameras):
        for k in frames:
            r = render(scene, RenderRequest(cam, ds.time(ci, k), cfg["shutter_mode"]))
            write_image(out / "renders" / f"{cam_name(ci)}_{k:04d}.png", r.color)
            mono = ds.depth(ci, f"mono_{k:04d}.pfm", required=False)
            flame = ds.mask(ci, k) if ds.path("masks", ci, f"{k:04d}.png").is_file() else None
            rows.append(evaluate_frame(ci, k, r.color, ds.frame(ci, k), flame, exclude,
                                       r.depth if mono is not None else None, mono))
    report = summarize(rows)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    log.info("PSNR %.2f dB, SSIM %.4f", report.psnr, report.ssim)
    return 0


def cmd_decode_sync(cfg, args) -> int:
    from .errors import AmbiguousReadingError
    from .sync import LedLayout, decode_frame

    ds = Dataset(cfg["bundle"], cfg)
    work = _workdir(cfg)
    layout = LedLayout.load(_require(Path(args.layout) if args.layout else ds.root / "led_layout.json"))
    out = work / "sync"
    out.mkdir(exist_ok=True)
    summary = {}
    for ci, cam in enumerate(ds.cameras):
        offsets = []
        with open(out / f"{cam_name(ci)}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["frame", "frame_index", "offset_us", "precision_us", "transition_flag"])
            for k in range(ds.frame_count):
                try:
                    rd = decode_frame(ds.frame(ci, k), layout, cam.readout)
                except AmbiguousReadingError as exc:
                    log.warning("%s frame %d: %s", cam_name(ci), k, exc)
                    w.writerow([k, "", "", "", "ambiguous"])
                    continue
                w.writerow([k, rd.frame_index, _us(rd.subframe_offset), _us(rd.offset_precision),
                            int(rd.transition)])
                if np.isfinite(rd.subframe_offset):
                    offsets.append(rd.subframe_offset)
        summary[cam_name(ci)] = float(np.mean(offsets)) if offsets else None
    ref = summary.get(cam_name(0))
    # simple alignment: express every camera's mean exposure offset relative to camera 0
    rel = {k: (None if v is None or ref is None else v - ref) for k, v in summary.items()}
    _write_json(out / "offsets.json", {"mean_offset_s": summary, "relative_to_cam00_s": rel})
    return 0


def _us(seconds: float) -> str:
    return "" if not np.isfinite(seconds) else repr(float(seconds) * 1e6)


def cmd_gradient_check(cfg, args) -> int:
    from .optimize import TrainBatch, gradient_check
    from .synth import probe_camera, probe_mixed, probe_single, probe_targets

    gc = cfg["gradient_check"]
    work = _workdir(cfg)
    cam = probe_camera()
    probes = {"single": probe_single, "mixed": lambda: probe_mixed(gc["mixed_count"], cfg["seed"])}
    names = list(probes) if args.probe == "both" else [args.probe]
    results = {}
    for name in names:
        scene = probes[name]()
        target, depth = probe_targets(scene, cam, 0.0, cfg["seed"])
        worst = gradient_check(scene, TrainBatch(cam, target, depth, None, 0.0), eps=gc["eps"])
        results[name] = worst
        log.info("probe %s: worst relative error %.3e", name, worst)
    _write_json(work / "gradient_check.json", {"eps": gc["eps"], "tolerance": gc["tolerance"], "worst": results})
    if max(results.values()) >= gc["tolerance"]:
        raise NumericError(f"gradient check failed: {results}")
    return 0


COMMANDS = {
    "synth-generate": cmd_synth_generate,
    "remove-fire": cmd_remove_fire,
    "align-depth": cmd_align_depth,
    "fuse-pointcloud": cmd_fuse_pointcloud,
    "fuse-flow": cmd_fuse_flow,
    "init-gaussians": cmd_init_gaussians,
    "fit-static": cmd_fit_static,
    "fit-dynamic": cmd_fit_dynamic,
    "render": cmd_render,
    "evaluate": cmd_evaluate,
    "decode-sync": cmd_decode_sync,
    "gradient-check": cmd_gradient_check,
}

PIPELINE = ("remove-fire", "align-depth", "fuse-pointcloud", "fuse-flow", "init-gaussians",
            "fit-static", "fit-dynamic", "evaluate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="firegs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="pipeline configuration JSON")
        p.add_argument("--bundle", help="dataset directory")
        p.add_argument("--workdir", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--shutter-mode", choices=("global", "rolling"))
        p.add_argument("--holdout-every", type=int, help="hold out every N-th frame (0 disables)")
        if name in ("fit-static", "fit-dynamic"):
            p.add_argument("--iters", type=int)
        if name == "synth-generate":
            p.add_argument("--out", help="bundle directory (defaults to the config's bundle)")
        if name == "render":
            p.add_argument("--scene", required=True)
            p.add_argument("--cameras", required=True, help="camera JSON (may describe novel views)")
            p.add_argument("--camera-index", type=int, default=0)
            p.add_argument("--time", type=float, default=0.0)
            p.add_argument("--out", required=True, help="output prefix")
        if name == "evaluate":
            p.add_argument("--scene", help="scene PLY (defaults to the fitted scene)")
        if name == "decode-sync":
            p.add_argument("--layout", help="LED layout JSON (defaults to the bundle's)")
        if name == "gradient-check":
            p.add_argument("--probe", choices=("single", "mixed", "both"), default="both")
    return parser


def _overrides(args) -> dict:
    o = {}
    for key in ("bundle", "workdir", "seed", "shutter_mode", "holdout_every"):
        v = getattr(args, key, None)
        if v is not None:
            o[key] = v
    if getattr(args, "iters", None) is not None:
        o["fit_static" if args.command == "fit-static" else "fit_dynamic"] = {"iters": args.iters}
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except FireGSError as exc:
        print(f"firegs {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"firegs {args.command}: {exc}", file=sys.stderr)
        return MissingInputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
