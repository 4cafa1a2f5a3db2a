"""
Dataset statistics
==================

Parse a labeled annotation set (the strict COCO-style subset exported by
labeling tools) and tabulate per-split instance counts and hatch ratios.
The bundled fixture reproduces the published split sizes: 182/1042
training and 33/118 test instances.
"""
from importlib import resources

import ovitrap as ov
from ovitrap.jsonio import load_json

doc = load_json(str(resources.files("ovitrap") / "data" / "table1.json"))
gt = ov.parse_ground_truth(doc)
print(f"{len(gt.images)} images, {len(gt.instances)} instances")

stats = ov.dataset_stats(gt)
print(f"{'split':<10} {'hatch':>6} {'full':>6} {'ratio':>8}")
for split, s in stats.items():
    print(f"{split:<10} {s.n_hatch:>6} {s.n_full:>6} {s.hatch_ratio:>8.4f}")
