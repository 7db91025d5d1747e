"""Command-line surface.

Subcommands:

    antenna    closed-form helix figures
    plan       hop plan + grid summary as JSON
    estimate   scan duration for a grid and dwell policy
    scan       run a scan (simulated device or serial-attached rotor)
    export     re-render a saved map (PGM / PNG, optional reference map)
    overlay    project a saved map over a camera photo

Exit codes: 0 success, 2 usage or configuration error, 3 scan aborted
before completion, 4 device or port unreachable.

Note: option values that begin with a dash need the equals form, e.g.
``--az-range=-45:45``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from importlib import resources

from . import __version__
from .antenna import (
    HelixDesign,
    helix_axial_ratio,
    helix_gain_kraus,
    helix_hpbw_kraus,
    spacing_from_pitch,
)
from .heatmap import (
    OverlaySpec,
    export_csv,
    export_pgm,
    export_png,
    normalize_clip,
    overlay,
    read_csv,
)
from .protocol import (
    FdTransport,
    RotorClient,
    SimDevice,
    SimDeviceTransport,
    TranscriptTransport,
    TransportError,
)
from .rotor import RotorConfig
from .scan import (
    ScanPlan,
    build_hop_plan,
    estimate_duration_s,
    execute_scan,
    write_pixel_log,
)
from .scene import SceneFormatError, SimCaptureBackend, load_scene

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INCOMPLETE = 3
EXIT_TRANSPORT = 4


def _range_pair(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(
            f"expected MIN:MAX, got {text!r} (use --flag=-10:10 for negatives)"
        )
    try:
        return (float(lo), float(hi))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers in MIN:MAX, got {text!r}")


def _hms(total_s: float) -> str:
    whole = int(round(total_s))
    h, rest = divmod(whole, 3600)
    m, s = divmod(rest, 60)
    return f"{h}:{m:02d}:{s:02d}"


def _fail(message: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# antenna
# ---------------------------------------------------------------------------


def _cmd_antenna(args: argparse.Namespace) -> int:
    try:
        design = HelixDesign(
            turns=args.turns,
            pitch_angle_deg=args.pitch,
            circumference_wavelengths=args.clambda,
            frequency_hz=args.frequency,
        )
    except ValueError as exc:
        return _fail(str(exc))
    figures = {
        "spacing_wavelengths": spacing_from_pitch(design),
        "gain_dbi": helix_gain_kraus(design),
        "hpbw_deg": helix_hpbw_kraus(design),
        "axial_ratio": helix_axial_ratio(design),
    }
    if args.json:
        print(json.dumps(figures, indent=2, sort_keys=True))
    else:
        for key, value in figures.items():
            print(f"{key}: {value:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plan / estimate
# ---------------------------------------------------------------------------


def _build_plan(args: argparse.Namespace) -> ScanPlan:
    hops = build_hop_plan(args.band, args.hop_bandwidth, args.hop_duration)
    return ScanPlan(
        az_range_deg=args.az_range,
        el_range_deg=args.el_range,
        az_pixels=args.az_pixels,
        el_pixels=args.el_pixels,
        hops=hops,
        settle_s=args.settle,
        unsafe_settle=args.unsafe_settle,
    )


def _cmd_estimate(args: argparse.Namespace) -> int:
    try:
        plan = _build_plan(args)
    except ValueError as exc:
        return _fail(str(exc))
    total = estimate_duration_s(plan)
    print(f"{total:g} s ({_hms(total)})")
    return EXIT_OK


def _cmd_plan(args: argparse.Namespace) -> int:
    try:
        plan = _build_plan(args)
    except ValueError as exc:
        return _fail(str(exc))
    out = {
        "az_range_deg": list(plan.az_range_deg),
        "el_range_deg": list(plan.el_range_deg),
        "az_pixels": plan.az_pixels,
        "el_pixels": plan.el_pixels,
        "pixels": plan.pixel_count(),
        "settle_s": plan.settle_s,
        "dwell_s": plan.dwell_s(),
        "hops": [
            {
                "center_frequency_hz": h.center_frequency_hz,
                "bandwidth_hz": h.bandwidth_hz,
                "duration_s": h.duration_s,
            }
            for h in plan.hops
        ],
        "estimated_duration_s": estimate_duration_s(plan),
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------


def _resolve_scene_path(name: str) -> str:
    """Filesystem path, or the name of a bundled scenario (builtin:NAME)."""
    if name.startswith("builtin:"):
        name = name[len("builtin:") :]
        if not name.endswith(".json"):
            name += ".json"
        target = resources.files("emscan").joinpath("scenarios").joinpath(name)
        with resources.as_file(target) as path:
            return str(path)
    return name


_CONFIG_PAIR_KEYS = {"az_range", "el_range", "band"}
_CONFIG_KEYS = _CONFIG_PAIR_KEYS | {
    "az_pixels",
    "el_pixels",
    "hop_bandwidth",
    "hop_duration",
    "settle",
    "unsafe_settle",
    "pipeline_depth",
    "png_scale",
    "seed",
    "scene",
    "port",
    "backend",
    "calibration_offset",
}


def _apply_config_file(args: argparse.Namespace) -> RotorConfig | None:
    """File values fill in flags the user did not set on the command line.

    Scan flags default to None (or False for switches), so anything still
    unset is fair game for the file; built-in defaults apply last.
    """
    if args.config is None:
        return None
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{args.config}: top level must be an object")
    rotor_cfg = raw.pop("rotor", None)
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{args.config}: unknown setting {key!r}")
        if key in _CONFIG_PAIR_KEYS:
            if not isinstance(value, list) or len(value) != 2:
                raise ValueError(f"{args.config}: {key} must be a 2-element array")
            value = (float(value[0]), float(value[1]))
        current = getattr(args, key)
        if current is None or current is False:
            setattr(args, key, value)
    if rotor_cfg is not None:
        if not isinstance(rotor_cfg, dict):
            raise ValueError(f"{args.config}: rotor must be an object")
        for k in ("az_travel_deg", "el_travel_deg"):
            if k in rotor_cfg:
                rotor_cfg[k] = tuple(rotor_cfg[k])
        return RotorConfig(**rotor_cfg)
    return None


def _cmd_scan(args: argparse.Namespace) -> int:
    try:
        rotor_config = _apply_config_file(args) or RotorConfig()
    except (OSError, ValueError, TypeError) as exc:
        return _fail(f"config: {exc}")
    _fill_scan_defaults(args)

    if args.scene is None:
        return _fail("a scene description is required (--scene)")
    if args.backend == "sim" and args.seed is None:
        return _fail("--seed is required with the simulated backend")
    if args.backend == "serial" and args.port is None:
        return _fail("--port is required with the serial backend")
    if args.seed is not None and args.seed < 0:
        return _fail("--seed must be non-negative")

    try:
        scene = load_scene(_resolve_scene_path(args.scene))
    except (OSError, SceneFormatError) as exc:
        return _fail(str(exc))
    if args.calibration_offset is not None:
        scene = replace(
            scene, chain=replace(scene.chain, calibration_offset_db=args.calibration_offset)
        )

    try:
        plan = _build_plan(args)
    except ValueError as exc:
        return _fail(str(exc))

    os.makedirs(args.out, exist_ok=True)
    transcript_path = os.path.join(args.out, "transcript.log")
    backend = SimCaptureBackend(scene)

    with open(transcript_path, "w", encoding="utf-8") as transcript:
        try:
            if args.backend == "sim":
                inner = SimDeviceTransport(SimDevice(rotor_config))
            else:
                inner = FdTransport(args.port)
        except TransportError as exc:
            return _fail(str(exc), EXIT_TRANSPORT)
        client = RotorClient(
            TranscriptTransport(inner, transcript), rotor_config, plan.settle_s
        )
        try:
            result = execute_scan(
                plan,
                client,
                backend,
                seed=args.seed,
                pipeline_depth=args.pipeline_depth,
            )
        except TransportError as exc:
            return _fail(str(exc), EXIT_TRANSPORT)
        except ValueError as exc:
            return _fail(str(exc))
        finally:
            if isinstance(inner, FdTransport):
                inner.close()

    raw_csv = os.path.join(args.out, "heatmap.csv")
    export_csv(result.heatmap, raw_csv)
    outputs = ["heatmap.csv"]
    # a scan aborted before any valid pixel leaves nothing to normalize
    if not result.heatmap.invalid.all():
        rendered = normalize_clip([result.heatmap])[0]
        export_pgm(rendered, os.path.join(args.out, "heatmap.pgm"))
        export_png(rendered, os.path.join(args.out, "heatmap.png"), scale=args.png_scale)
        outputs += ["heatmap.pgm", "heatmap.png"]
    write_pixel_log(result.records, len(plan.hops), os.path.join(args.out, "pixels.csv"))
    outputs += ["pixels.csv", "transcript.log"]

    manifest = {
        "backend": args.backend,
        "scene": args.scene,
        "scene_description": scene.description,
        "seed": args.seed,
        "grid": {
            "az_range_deg": list(plan.az_range_deg),
            "el_range_deg": list(plan.el_range_deg),
            "az_pixels": plan.az_pixels,
            "el_pixels": plan.el_pixels,
        },
        "hops": [
            {
                "center_frequency_hz": h.center_frequency_hz,
                "bandwidth_hz": h.bandwidth_hz,
                "duration_s": h.duration_s,
            }
            for h in plan.hops
        ],
        "settle_s": plan.settle_s,
        "pipeline_depth": args.pipeline_depth,
        "estimated_duration_s": estimate_duration_s(plan),
        "scan_duration_s": result.duration_s,
        "pixels": plan.pixel_count(),
        "pixels_acquired": len(result.records),
        "invalid_pixels": result.invalid_pixels,
        "complete": result.complete,
        "outputs": outputs,
    }
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if not result.complete:
        print(
            f"scan aborted after {len(result.records)} of {plan.pixel_count()} pixels",
            file=sys.stderr,
        )
        return EXIT_INCOMPLETE
    return EXIT_OK


def _fill_scan_defaults(args: argparse.Namespace) -> None:
    defaults = {
        "az_range": (-90.0, 90.0),
        "el_range": (0.0, 80.0),
        "az_pixels": 100,
        "el_pixels": 100,
        "band": (1.648e9, 1.728e9),
        "hop_bandwidth": 20e6,
        "hop_duration": 0.125,
        "settle": 0.5,
        "pipeline_depth": 1,
        "png_scale": 1,
        "backend": "sim",
    }
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


# ---------------------------------------------------------------------------
# export / overlay
# ---------------------------------------------------------------------------


def _cmd_export(args: argparse.Namespace) -> int:
    if not (args.pgm or args.png or args.csv):
        return _fail("nothing to do: give --pgm, --png, or --csv")
    try:
        source = read_csv(args.map)
        if source.normalized:
            rendered = source
        else:
            maps = [source]
            reference_index = 0
            if args.reference is not None:
                maps.append(read_csv(args.reference))
                reference_index = 1
            rendered = normalize_clip(maps, reference_index)[0]
        if args.pgm:
            export_pgm(rendered, args.pgm)
        if args.png:
            export_png(rendered, args.png, scale=args.scale, resample=args.resample)
        if args.csv:
            export_csv(rendered, args.csv)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    return EXIT_OK


def _cmd_overlay(args: argparse.Namespace) -> int:
    try:
        heatmap = read_csv(args.map)
        if not heatmap.normalized:
            heatmap = normalize_clip([heatmap])[0]
        from PIL import Image

        with Image.open(args.photo) as img:
            width, height = img.size
            spec = OverlaySpec(
                width_px=width,
                height_px=height,
                hfov_deg=args.hfov,
                vfov_deg=args.vfov,
                boresight_az_deg=args.boresight_az,
                boresight_el_deg=args.boresight_el,
                alpha=args.alpha,
            )
            overlay(heatmap, img, spec, args.out)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_plan_flags(p: argparse.ArgumentParser, with_defaults: bool = True) -> None:
    d = (lambda v: v) if with_defaults else (lambda v: None)
    p.add_argument("--az-range", type=_range_pair, default=d((-90.0, 90.0)),
                   metavar="MIN:MAX", help="azimuth coverage in degrees")
    p.add_argument("--el-range", type=_range_pair, default=d((0.0, 80.0)),
                   metavar="MIN:MAX", help="elevation coverage in degrees")
    p.add_argument("--az-pixels", type=int, default=d(100))
    p.add_argument("--el-pixels", type=int, default=d(100))
    p.add_argument("--band", type=_range_pair, default=d((1.648e9, 1.728e9)),
                   metavar="LO:HI", help="swept band in Hz")
    p.add_argument("--hop-bandwidth", type=float, default=d(20e6),
                   metavar="HZ", help="per-hop capture bandwidth in Hz")
    p.add_argument("--hop-duration", type=float, default=d(0.125),
                   metavar="S", help="per-hop capture duration in seconds")
    p.add_argument("--settle", type=float, default=d(0.5),
                   metavar="S", help="post-move settle floor in seconds")
    p.add_argument("--unsafe-settle", action="store_true",
                   help="allow settle below the 0.5 s mechanical floor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emscan",
        description="Passive EM survey tool: plan, run, and render RF scans.",
    )
    parser.add_argument("--version", action="version", version=f"emscan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("antenna", help="closed-form helix figures")
    p.add_argument("--turns", type=int, required=True)
    p.add_argument("--pitch", type=float, required=True, metavar="DEG")
    p.add_argument("--clambda", type=float, required=True,
                   help="circumference in wavelengths")
    p.add_argument("--frequency", type=float, default=2.45e9, metavar="HZ")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_antenna)

    p = sub.add_parser("plan", help="hop plan and grid summary as JSON")
    _add_plan_flags(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("estimate", help="scan duration estimate")
    _add_plan_flags(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("scan", help="run a scan")
    _add_plan_flags(p, with_defaults=False)
    p.add_argument("--backend", choices=("sim", "serial"), default=None)
    p.add_argument("--scene", help="scene JSON path or builtin:NAME")
    p.add_argument("--port", help="serial device path (serial backend)")
    p.add_argument("--seed", type=int, help="run seed (required for sim)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pipeline-depth", type=int, default=None,
                   help="max pixels acquisition may run ahead (default 1)")
    p.add_argument("--png-scale", type=int, default=None,
                   help="integer upscale for heatmap.png (default 1)")
    p.add_argument("--calibration-offset", type=float, default=None,
                   metavar="DB", help="override the scene's dBFS-to-dBm offset")
    p.add_argument("--config", help="JSON file with default settings")
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("export", help="re-render a saved heatmap CSV")
    p.add_argument("--map", required=True, help="heatmap CSV path")
    p.add_argument("--reference", help="normalize against this map instead")
    p.add_argument("--pgm", help="write a 16-bit PGM here")
    p.add_argument("--png", help="write a false-color PNG here")
    p.add_argument("--csv", help="write the normalized CSV here")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--resample", choices=("nearest", "bilinear"), default="nearest")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("overlay", help="project a map over a camera photo")
    p.add_argument("--map", required=True, help="heatmap CSV path")
    p.add_argument("--photo", required=True, help="camera image (any PIL format)")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--hfov", type=float, required=True, metavar="DEG")
    p.add_argument("--vfov", type=float, required=True, metavar="DEG")
    p.add_argument("--boresight-az", type=float, default=0.0, metavar="DEG")
    p.add_argument("--boresight-el", type=float, default=0.0, metavar="DEG")
    p.add_argument("--alpha", type=float, default=0.6)
    p.set_defaults(func=_cmd_overlay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
