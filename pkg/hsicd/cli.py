"""
Command-line entry point: synth, detect, eval and sweep-patch

stdout carries one JSON summary per successful run; logs and errors go to stderr.
Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from . import tasks
from .config import Settings, get_settings, load_pipeline_config, setup_logging
from .models import BinarizePolicy, ConfigError, DataError, Method
from .schemas import PipelineConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# CLI dest -> location in PipelineConfig
CONFIG_FLAGS = {
    "method": ("method",),
    "patch_size": ("patch_size",),
    "connectivity": ("connectivity",),
    "fusion_a": ("fusion", "a"),
    "fusion_b": ("fusion", "b"),
    "max_iters": ("als", "max_iters"),
    "tol": ("als", "tol"),
    "seed": ("scene", "seed"),
    "height": ("scene", "height"),
    "width": ("scene", "width"),
    "bands": ("scene", "bands"),
    "regions": ("scene", "num_change_regions"),
    "region_size": ("scene", "region_size"),
    "noise_sigma": ("scene", "noise_sigma"),
    "change_magnitude": ("scene", "change_magnitude"),
    "w_min": ("sweep", "w_min"),
    "w_max": ("sweep", "w_max"),
    "binarize": ("binarize", "policy"),
    "q": ("binarize", "q"),
}


def emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


class JsonErrorParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as one JSON line and exits 1"""

    def error(self, message: str):
        emit_error("usage", f"{self.prog}: {message}")
        raise SystemExit(EXIT_USAGE)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Pipeline config JSON (overrides HSICD_CONFIG_PATH)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging on stderr")
    return common


def _add_als_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-iters", dest="max_iters", type=int, default=None, help="ALS sweep limit")
    parser.add_argument("--tol", type=float, default=None, help="ALS relative stopping tolerance")
    parser.add_argument("--workers", type=int, default=None, help="Process both dates in parallel when > 1")


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = JsonErrorParser(prog="hsicd", description="Hyperspectral change detection on bi-temporal cubes")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="Write a synthetic bi-temporal scene and its mask")
    synth.add_argument("--out-dir", dest="out_dir", default=None, help="Output directory (default <HSICD_OUTPUT_DIR>/scene)")
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--height", type=int, default=None)
    synth.add_argument("--width", type=int, default=None)
    synth.add_argument("--bands", type=int, default=None)
    synth.add_argument("--regions", type=int, default=None, help="Number of rectangular change regions")
    synth.add_argument("--region-size", dest="region_size", type=int, default=None, help="Side of each change square")
    synth.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    synth.add_argument("--change-magnitude", dest="change_magnitude", type=float, default=None)
    synth.set_defaults(handler=_cmd_synth)

    det = sub.add_parser("detect", parents=[common], help="Compute a change score map for a cube pair")
    det.add_argument("--t1", required=True, help="First-date cube")
    det.add_argument("--t2", required=True, help="Second-date cube")
    det.add_argument("--out", required=True, help="Output score map (raster name)")
    det.add_argument("--method", choices=[m.value for m in Method], default=None)
    det.add_argument("--patch-size", dest="patch_size", type=int, default=None)
    det.add_argument("--connectivity", type=int, choices=[4, 8], default=None)
    det.add_argument("--fusion-a", dest="fusion_a", type=float, default=None, help="Weight of the morphology branch")
    det.add_argument("--fusion-b", dest="fusion_b", type=float, default=None, help="Weight of the tensor branch")
    _add_als_options(det)
    det.add_argument("--png", default=None, help="Also write a grayscale quick-look PNG")
    det.add_argument("--mask-out", dest="mask_out", default=None, help="Also write a binarized change mask")
    det.add_argument("--binarize", choices=[p.value for p in BinarizePolicy], default=None)
    det.add_argument("--q", type=float, default=None, help="Percentile for the percentile binarization policy")
    det.set_defaults(handler=_cmd_detect)

    ev = sub.add_parser("eval", parents=[common], help="ROC curve and AUC of a score map against a mask")
    ev.add_argument("--scores", required=True, help="Score map raster")
    ev.add_argument("--mask", required=True, help="Ground-truth mask raster")
    ev.add_argument("--out-prefix", dest="out_prefix", required=True, help="Writes <prefix>.roc.csv and <prefix>.metrics.json")
    ev.set_defaults(handler=_cmd_eval)

    sweep = sub.add_parser("sweep-patch", parents=[common], help="Tensor-branch AUC for every patch size")
    sweep.add_argument("--t1", required=True)
    sweep.add_argument("--t2", required=True)
    sweep.add_argument("--mask", required=True)
    sweep.add_argument("--out", required=True, help="Output CSV of (w, auc)")
    sweep.add_argument("--w-min", dest="w_min", type=int, default=None)
    sweep.add_argument("--w-max", dest="w_max", type=int, default=None)
    _add_als_options(sweep)
    sweep.set_defaults(handler=_cmd_sweep_patch)

    return parser


def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested override dict holding only the flags given on the command line"""
    overrides: Dict[str, Any] = {}
    for dest, location in CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        target = overrides
        for key in location[:-1]:
            target = target.setdefault(key, {})
        target[location[-1]] = value
    return overrides


def _workers(args: argparse.Namespace, settings: Settings) -> int:
    workers = getattr(args, "workers", None)
    return workers if workers is not None else settings.workers


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_synth(args: argparse.Namespace, cfg: PipelineConfig, settings: Settings) -> Dict[str, Any]:
    out_dir = args.out_dir if args.out_dir is not None else settings.output_dir / "scene"
    return tasks.run_synth(cfg.scene, out_dir)


def _cmd_detect(args: argparse.Namespace, cfg: PipelineConfig, settings: Settings) -> Dict[str, Any]:
    return tasks.run_detect(
        args.t1, args.t2, cfg, args.out,
        workers=_workers(args, settings), png_path=args.png, mask_out=args.mask_out,
    )


def _cmd_eval(args: argparse.Namespace, cfg: PipelineConfig, settings: Settings) -> Dict[str, Any]:
    return tasks.run_eval(args.scores, args.mask, args.out_prefix)


def _cmd_sweep_patch(args: argparse.Namespace, cfg: PipelineConfig, settings: Settings) -> Dict[str, Any]:
    return tasks.run_sweep_patch(args.t1, args.t2, args.mask, cfg, args.out, workers=_workers(args, settings))


def _log_level(verbose: int, settings: Settings) -> str:
    if verbose >= 2:
        return "DEBUG"
    if verbose == 1:
        return "INFO"
    return settings.log_level


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
    except ValidationError as e:
        emit_error("config", f"invalid HSICD_* environment: {e.errors()[0]['msg']}")
        return EXIT_USAGE
    setup_logging(_log_level(args.verbose, settings))

    try:
        cfg = load_pipeline_config(args.config or settings.config_path, config_overrides(args))
        result = args.handler(args, cfg, settings)
    except ConfigError as e:
        emit_error("config", str(e))
        return EXIT_USAGE
    except DataError as e:
        emit_error("data", str(e))
        return EXIT_DATA
    except OSError as e:
        emit_error("data", f"{e.filename or 'output'}: {e.strerror or e}")
        return EXIT_DATA

    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return EXIT_OK
