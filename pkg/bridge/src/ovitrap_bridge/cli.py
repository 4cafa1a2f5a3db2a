"""ovitrap-bridge: batch inference over scanned tiles."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .bridge import BridgeConfig, BridgeError, infer_tiles


def _parse_class_map(text: str) -> dict[int, str]:
    out: dict[int, str] = {}
    for part in text.split(","):
        label, _, name = part.partition("=")
        try:
            out[int(label)] = name.strip()
        except ValueError:
            raise click.UsageError(f"--class-map: bad entry {part!r}")
    return out


@click.command()
@click.version_option(__version__, prog_name="ovitrap-bridge")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--images", "images_dir", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--model", default="torchvision:maskrcnn_resnet50_fpn",
              show_default=True,
              help="torchvision:<name>[@state.pt] or a TorchScript file.")
@click.option("--score-floor", default=0.05, show_default=True, type=float)
@click.option("--class-map", default="1=hatch,2=full", show_default=True,
              help="Model label ids mapped onto the two egg classes.")
@click.option("--device", default="cpu", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
def main(manifest_path, images_dir, model, score_floor, class_map, device, out):
    """Run the configured segmentation model over every tile in MANIFEST
    and write detections JSON compatible with the ovitrap pipeline."""
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    try:
        cfg = BridgeConfig(
            model=model,
            score_floor=score_floor,
            class_map=_parse_class_map(class_map),
            device=device,
        )
        doc = infer_tiles(manifest, images_dir, cfg)
    except BridgeError as exc:
        click.echo(f"bridge error: {exc}", err=True)
        sys.exit(3)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    n = sum(len(t["instances"]) for t in doc["tiles"])
    click.echo(f"{n} instances over {len(doc['tiles'])} tiles -> {out}")


if __name__ == "__main__":  # pragma: no cover
    main()
