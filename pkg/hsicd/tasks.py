"""
Batch jobs behind the CLI subcommands

Each job reads its inputs, runs the library, writes its artifacts and returns a
JSON-able summary dict.
"""
import csv
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from . import datacube, evaluation
from .detectors import detect, tensor_branch
from .models import BiTemporalPair, DataError, Method
from .schemas import EvalReport, PipelineConfig, RunReport, SceneConfig, SweepRow, SynthSummary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _sidecar(path: PathLike, suffix: str) -> Path:
    """`runs/score` (or `runs/score.json`) -> `runs/score<suffix>`."""
    header, _ = datacube.raster_paths(path)
    stem = header.with_suffix("")
    return stem.with_name(stem.name + suffix)


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e


def _load_pair(t1_path: PathLike, t2_path: PathLike) -> BiTemporalPair:
    return BiTemporalPair(datacube.load_cube(t1_path), datacube.load_cube(t2_path))


def run_synth(scene: SceneConfig, out_dir: PathLike) -> Dict[str, Any]:
    """Write t1, t2 and the ground-truth mask of a synthetic scene into out_dir"""
    out_dir = Path(out_dir)
    pair, mask = datacube.synth_pair(scene)
    targets = {"t1": out_dir / "t1", "t2": out_dir / "t2", "mask": out_dir / "mask"}
    datacube.save_cube(pair.t1, targets["t1"])
    datacube.save_cube(pair.t2, targets["t2"])
    datacube.save_mask(mask, targets["mask"])
    summary = SynthSummary(
        height=scene.height,
        width=scene.width,
        bands=scene.bands,
        changed_pixels=mask.changed_count,
        seed=scene.seed,
        files={name: str(datacube.raster_paths(path)[0]) for name, path in targets.items()},
    )
    return summary.model_dump(mode="json")


def run_detect(
    t1_path: PathLike,
    t2_path: PathLike,
    cfg: PipelineConfig,
    out_path: PathLike,
    workers: int = 1,
    png_path: Optional[PathLike] = None,
    mask_out: Optional[PathLike] = None,
) -> Dict[str, Any]:
    """Run the configured detector, save the score map and a run report next to it"""
    started = time.perf_counter()
    pair = _load_pair(t1_path, t2_path)
    change_map = detect(pair, cfg, workers)
    datacube.save_change_map(change_map, out_path)

    outputs = {"score_map": str(datacube.raster_paths(out_path)[0])}
    if png_path is not None:
        datacube.save_quicklook_png(change_map, png_path)
        outputs["png"] = str(png_path)
    if mask_out is not None:
        binary = evaluation.binarize(change_map, cfg.binarize.policy, cfg.binarize.q)
        datacube.save_mask(binary, mask_out)
        outputs["mask"] = str(datacube.raster_paths(mask_out)[0])

    report_path = _sidecar(out_path, ".report.json")
    outputs["report"] = str(report_path)
    report = RunReport(
        method=cfg.method,
        height=change_map.shape[0],
        width=change_map.shape[1],
        bands=pair.shape[2],
        score_min=float(change_map.score.min()),
        score_max=float(change_map.score.max()),
        wall_time_s=round(time.perf_counter() - started, 3),
        inputs={"t1": str(t1_path), "t2": str(t2_path)},
        outputs=outputs,
        config=cfg,
    )
    _write_text(report_path, report.model_dump_json(indent=2))
    logger.info("[DETECT] %s done in %.2fs -> %s", cfg.method.value, report.wall_time_s, outputs["score_map"])

    # stdout summary leaves out the wall time so reruns print the same bytes
    return report.model_dump(mode="json", exclude={"wall_time_s", "config"})


def run_eval(score_path: PathLike, mask_path: PathLike, out_prefix: PathLike) -> Dict[str, Any]:
    """ROC CSV and metrics JSON for a score map against a ground-truth mask"""
    scores = datacube.load_change_map(score_path)
    truth = datacube.load_mask(mask_path)
    curve = evaluation.roc_curve(scores, truth)
    report = EvalReport(
        auc=evaluation.auc(curve),
        separability=evaluation.separability(scores, truth),
        changed_pixels=truth.changed_count,
        unchanged_pixels=truth.unchanged_count,
        roc_points=len(curve.fpr),
    )

    prefix = Path(out_prefix)
    roc_path = prefix.with_name(prefix.name + ".roc.csv")
    metrics_path = prefix.with_name(prefix.name + ".metrics.json")
    evaluation.write_roc_csv(curve, roc_path)
    _write_text(metrics_path, report.model_dump_json(indent=2))
    logger.info("[EVAL] auc=%.6f over %d ROC points", report.auc, report.roc_points)

    summary = report.model_dump(mode="json")
    summary["files"] = {"roc": str(roc_path), "metrics": str(metrics_path)}
    return summary


def run_sweep_patch(
    t1_path: PathLike,
    t2_path: PathLike,
    mask_path: PathLike,
    cfg: PipelineConfig,
    out_csv: PathLike,
    workers: int = 1,
) -> Dict[str, Any]:
    """Tensor-branch AUC for every patch size of the sweep range, written as a (w, auc) CSV"""
    pair = _load_pair(t1_path, t2_path)
    truth = datacube.load_mask(mask_path)
    largest = min(pair.shape[0], pair.shape[1])

    rows: List[SweepRow] = []
    skipped: List[int] = []
    for w in cfg.sweep.patch_sizes:
        if w > largest:
            logger.warning("[SWEEP] skipping w=%d, larger than the %dx%d scene", w, pair.shape[0], pair.shape[1])
            skipped.append(w)
            continue
        run_cfg = cfg.model_copy(update={"patch_size": w, "method": Method.TENSOR})
        change_map = tensor_branch(pair, run_cfg, workers)
        value = evaluation.auc(evaluation.roc_curve(change_map, truth))
        logger.info("[SWEEP] w=%d auc=%.6f", w, value)
        rows.append(SweepRow(w=w, auc=value))

    out_csv = Path(out_csv)
    try:
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["w", "auc"])
            for row in rows:
                writer.writerow([row.w, repr(row.auc)])
    except OSError as e:
        raise DataError(f"cannot write sweep table {out_csv}: {e}") from e

    best = max(rows, key=lambda row: row.auc) if rows else None
    return {
        "rows": [row.model_dump() for row in rows],
        "skipped": skipped,
        "best_w": best.w if best else None,
        "best_auc": best.auc if best else None,
        "csv": str(out_csv),
    }
