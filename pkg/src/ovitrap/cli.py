"""Command-line pipeline: plan, simulate, detect-oracle, merge, count,
eval, stats, and report.

Exit codes are a stable contract: 0 success, 2 usage/missing input,
3 schema violation, 4 internal invariant breach. All randomness flows from
the --seed flags, and every command is deterministic given identical
inputs, producing byte-identical artifacts on re-runs.
"""
from __future__ import annotations

import functools
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import click

from . import __version__
from .errors import ConfigError, GeometryError, InvariantError, SchemaError
from .jsonio import dump_json, load_json

log = logging.getLogger("ovitrap")

LOCK_NAME = ".ovitrap.lock"
RUN_MANIFEST = "run_manifest.json"


def _configure_logging() -> None:
    level = os.environ.get("OVITRAP_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(message)s")


def pipeline_errors(f):
    """Map pipeline exceptions onto the documented exit codes."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except SchemaError as exc:
            click.echo(f"schema error: {exc}", err=True)
            sys.exit(3)
        except InvariantError as exc:
            click.echo(f"invariant breach: {exc}", err=True)
            sys.exit(4)
        except (ConfigError, GeometryError) as exc:
            raise click.UsageError(str(exc))
        except FileNotFoundError as exc:
            click.echo(f"missing input: {exc}", err=True)
            sys.exit(2)

    return wrapper


@contextmanager
def _dir_lock(out_dir: Path):
    """Fail fast when another invocation already writes to this directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise click.UsageError(f"output directory is locked by another run: {lock}")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _update_run_manifest(out_dir: Path, artifacts: dict[str, str], config: dict) -> None:
    """Record artifact paths and the config snapshot at the tree root."""
    path = out_dir / RUN_MANIFEST
    doc = load_json(path) if path.exists() else {"artifacts": {}, "config": {}}
    doc["artifacts"].update(artifacts)
    doc["config"].update(config)
    doc["version"] = __version__
    for key, rel in doc["artifacts"].items():
        if not (out_dir / rel).exists():
            raise InvariantError(f"run manifest references missing artifact {key}: {rel}")
    dump_json(doc, path)


def _note_artifact(out_path: Path, key: str, config: dict) -> None:
    """If the artifact landed inside a run directory, record it there."""
    parent = out_path.parent
    if (parent / RUN_MANIFEST).exists():
        _update_run_manifest(parent, {key: out_path.name}, config)


def _parse_pair(text: str, name: str, sep: str = "x", cast=float) -> tuple:
    parts = text.split(sep)
    if len(parts) != 2:
        raise click.UsageError(f"--{name} expects two values as A{sep}B, got {text!r}")
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError:
        raise click.UsageError(f"--{name}: could not parse {text!r}")


@click.group()
@click.version_option(__version__, prog_name="ovitrap")
def main():
    """Microscope ovitrap scanning, reconstruction, and evaluation."""
    _configure_logging()


@main.command("plan")
@click.option("--preset", type=click.Choice(["paper-165"]), default=None,
              help="Named configuration; sets all geometry flags and counts.")
@click.option("--trap-mm", default="148x25", show_default=True,
              help="Trap length x width in mm.")
@click.option("--tile-mm", default="5x9", show_default=True,
              help="Tile extent along major x minor axis in mm.")
@click.option("--tile-px", default="1280x1024", show_default=True,
              help="Tile resolution along major x minor axis in px.")
@click.option("--overlap", default="0.25,0.40", show_default=True,
              help="Overlap fractions major,minor.")
@click.option("--counts", default=None, help="Force the grid to N_MAJORxN_MINOR tiles.")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@pipeline_errors
def cmd_plan(preset, trap_mm, tile_mm, tile_px, overlap, counts, out):
    """Generate a serpentine scan plan and write it as JSON."""
    from . import geometry

    if preset == "paper-165":
        plan = geometry.paper_preset()
    else:
        length, width = _parse_pair(trap_mm, "trap-mm")
        major, minor = _parse_pair(tile_mm, "tile-mm")
        pxu, pxv = _parse_pair(tile_px, "tile-px", cast=int)
        ov_major, ov_minor = _parse_pair(overlap, "overlap", sep=",")
        override = _parse_pair(counts, "counts", cast=int) if counts else None
        plan = geometry.plan_scan(
            geometry.TrapSpec(length_mm=length, width_mm=width),
            geometry.TileSpec(major_extent_mm=major, minor_extent_mm=minor,
                              px_major=pxu, px_minor=pxv),
            geometry.OverlapSpec(major_frac=ov_major, minor_frac=ov_minor),
            count_override=override,
        )
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_json(geometry.plan_to_json(plan), out)
    click.echo(f"{len(plan.poses)} poses ({plan.n_major}x{plan.n_minor}) -> {out}")


@main.command("simulate")
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--eggs", default=200, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--hatch-fraction", default=0.15, show_default=True, type=float)
@click.option("--min-separation", default=0.5, show_default=True, type=float,
              help="Minimum egg center distance in mm.")
@click.option("--dwell", default=2.0, show_default=True, type=float,
              help="Post-move settle time in seconds (for the command stream).")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@pipeline_errors
def cmd_simulate(plan_path, eggs, seed, hatch_fraction, min_separation, dwell, out_dir):
    """Render a synthetic scan: tile PNGs, manifest, scene, command stream."""
    from . import device, geometry

    plan = geometry.plan_from_json(load_json(plan_path))
    with _dir_lock(out_dir):
        scene = device.generate_scene(
            seed=seed, n_eggs=eggs, hatch_fraction=hatch_fraction,
            min_separation_mm=min_separation, trap=plan.trap,
        )
        device.simulate_run(scene, plan, out_dir, plan_ref=plan_path.name)
        dump_json(device.scene_to_json(scene), out_dir / "scene.json")
        commands = device.compile_plan(plan, dwell_s=dwell)
        (out_dir / "commands.txt").write_text(
            device.commands_to_text(commands), encoding="utf-8"
        )
        _update_run_manifest(
            out_dir,
            {
                "manifest": "manifest.json",
                "scene": "scene.json",
                "commands": "commands.txt",
            },
            {
                "plan": str(plan_path),
                "eggs": eggs,
                "seed": seed,
                "hatch_fraction": hatch_fraction,
                "min_separation_mm": min_separation,
                "dwell_s": dwell,
            },
        )
    log.info("simulated %d tiles into %s", len(plan.poses), out_dir)
    click.echo(f"{len(plan.poses)} tiles, {eggs} eggs -> {out_dir}")


@main.command("detect-oracle")
@click.option("--scene", "scene_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--sigma-px", default=0.0, show_default=True, type=float,
              help="Gaussian boundary jitter in pixels.")
@click.option("--score-noise", default=0.0, show_default=True, type=float)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@pipeline_errors
def cmd_detect_oracle(scene_path, plan_path, sigma_px, score_noise, out):
    """Run the perfect-knowledge detector over every tile of the plan."""
    from . import detections, device, geometry

    plan = geometry.plan_from_json(load_json(plan_path))
    scene = device.scene_from_json(load_json(scene_path))
    jitter = detections.JitterParams(sigma_px=sigma_px, score_noise=score_noise)
    dets = detections.oracle_detect_plan(scene, plan, jitter=jitter)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_json(detections.serialize_tile_detections(dets), out)
    _note_artifact(out, "detections", {"sigma_px": sigma_px, "score_noise": score_noise})
    n = sum(len(t.instances) for t in dets)
    click.echo(f"{n} instances over {len(dets)} tiles -> {out}")


@main.command("merge")
@click.option("--detections", "dets_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--iou-threshold", default=0.5, show_default=True, type=float)
@click.option("--contact-tolerance", default=0.02, show_default=True, type=float)
@click.option("--score-combine", type=click.Choice(["max", "mean"]), default="max",
              show_default=True)
@click.option("--raster-pitch", default=0.007, show_default=True, type=float)
@click.option("--containment-threshold", default=0.8, show_default=True, type=float)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@pipeline_errors
def cmd_merge(dets_path, plan_path, iou_threshold, contact_tolerance, score_combine,
              raster_pitch, containment_threshold, out):
    """Reconstruct the whole trap: lift, deduplicate, fuse, count."""
    from . import detections, geometry, merge

    plan = geometry.plan_from_json(load_json(plan_path))
    dets = detections.parse_tile_detections(load_json(dets_path))
    cfg = merge.MergeConfig(
        dup_iou_threshold=iou_threshold,
        contact_tolerance_mm=contact_tolerance,
        score_combine=score_combine,
        raster_pitch_mm=raster_pitch,
        containment_threshold=containment_threshold,
    )
    merged = merge.deduplicate(merge.to_global(dets, plan), cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_json(merge.merged_to_json(merged), out)
    _note_artifact(out, "merged", {"merge": {
        "iou_threshold": iou_threshold,
        "contact_tolerance_mm": contact_tolerance,
        "score_combine": score_combine,
        "raster_pitch_mm": raster_pitch,
        "containment_threshold": containment_threshold,
    }})
    report = merge.count_eggs(merged)
    click.echo(f"{report.total} instances ({report.n_hatched} hatched) -> {out}")


def _echo_count_report(report, as_json: bool) -> None:
    if as_json:
        from .jsonio import dumps_canonical

        click.echo(dumps_canonical(report.to_json()), nl=False)
        return
    click.echo(f"hatched: {report.n_hatched}")
    click.echo(f"full:    {report.n_full}")
    click.echo(f"total:   {report.total}")
    ratio = "n/a" if report.hatch_ratio is None else f"{report.hatch_ratio:.4f}"
    click.echo(f"hatch ratio: {ratio}")


@main.command("count")
@click.option("--merged", "merged_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
@pipeline_errors
def cmd_count(merged_path, as_json):
    """Print the hatched/full counts of a merged reconstruction."""
    from . import merge

    instances, _ = merge.merged_from_json(load_json(merged_path))
    _echo_count_report(merge.count_eggs(instances), as_json)


@main.command("eval")
@click.option("--detections", "dets_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--ground-truth", "gt_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--pitch", default=1.0, show_default=True, type=float,
              help="IoU raster pitch in detection pixels.")
@click.option("--out", default=None, type=click.Path(dir_okay=False, path_type=Path))
@pipeline_errors
def cmd_eval(dets_path, gt_path, pitch, out):
    """Evaluate tile detections against ground truth (mask mAP)."""
    from . import detections, metrics

    gt = detections.parse_ground_truth(load_json(gt_path))
    tiles = detections.parse_tile_detections(load_json(dets_path))
    dets_per_image = {t.tile_id: t.instances for t in tiles}
    report = metrics.evaluate(dets_per_image, gt, pitch=pitch)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        dump_json(report.to_json(), out)
        _note_artifact(out, "eval_report", {"eval_pitch": pitch})
    click.echo(f"mAP@.5     {report.map_50:.4f}")
    click.echo(f"mAP@.5:.95 {report.map_5095:.4f}")


@main.command("stats")
@click.argument("ground_truth", required=False,
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--bundled", type=click.Choice(["table1", "table1_train", "table1_test"]),
              default=None, help="Use a fixture shipped with the package.")
@click.option("--json", "as_json", is_flag=True)
@pipeline_errors
def cmd_stats(ground_truth, bundled, as_json):
    """Per-split instance counts and hatch ratios of a ground-truth set."""
    from . import detections

    if (ground_truth is None) == (bundled is None):
        raise click.UsageError("pass exactly one of GROUND_TRUTH or --bundled")
    if bundled:
        doc = load_json(bundled_fixture_path(bundled))
    else:
        doc = load_json(ground_truth)
    stats = detections.dataset_stats(detections.parse_ground_truth(doc))
    if as_json:
        from .jsonio import dumps_canonical

        payload = {
            split: {
                "hatch": s.n_hatch,
                "full": s.n_full,
                **({"hatch_ratio": s.hatch_ratio} if s.hatch_ratio is not None else {}),
            }
            for split, s in stats.items()
        }
        click.echo(dumps_canonical(payload), nl=False)
        return
    click.echo(f"{'split':<12} {'hatch':>6} {'full':>6} {'ratio':>8}")
    for split, s in stats.items():
        ratio = "n/a" if s.hatch_ratio is None else f"{s.hatch_ratio:.4f}"
        click.echo(f"{split:<12} {s.n_hatch:>6} {s.n_full:>6} {ratio:>8}")


def bundled_fixture_path(name: str) -> Path:
    from importlib import resources

    with resources.as_file(resources.files("ovitrap") / "data" / f"{name}.json") as p:
        return Path(p)


@main.command("report")
@click.option("--merged", "merged_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--images", "images_dir", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Directory holding manifest.json and the tile PNGs.")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--json", "as_json", is_flag=True)
@pipeline_errors
def cmd_report(merged_path, plan_path, images_dir, out, as_json):
    """Render the whole-trap overlay and print the count report."""
    from . import geometry, merge
    from .overlay import render_overlay

    plan = geometry.plan_from_json(load_json(plan_path))
    instances, _ = merge.merged_from_json(load_json(merged_path))
    manifest = load_json(images_dir / "manifest.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    render_overlay(instances, plan, manifest, images_dir, out)
    _note_artifact(out, "overlay", {})
    _echo_count_report(merge.count_eggs(instances), as_json)


if __name__ == "__main__":  # pragma: no cover
    main()
