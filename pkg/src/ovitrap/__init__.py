"""Ovitrap scan planning, acquisition simulation, reconstruction, and
evaluation toolkit."""

from .device import (
    CLASS_FULL,
    CLASS_HATCH,
    EggTruth,
    MotionCommand,
    SyntheticScene,
    TileImage,
    compile_plan,
    generate_scene,
    render_tile,
    simulate_run,
)
from .detections import (
    EggInstance,
    GroundTruthSet,
    JitterParams,
    TileDetections,
    dataset_stats,
    oracle_detect,
    oracle_detect_plan,
    parse_ground_truth,
    parse_tile_detections,
    serialize_tile_detections,
)
from .errors import (
    ConfigError,
    GeometryError,
    InvariantError,
    OvitrapError,
    SceneTooDenseError,
    SchemaError,
)
from .geometry import (
    OverlapSpec,
    PRESET_PAPER_165,
    Rect,
    ScanPlan,
    TilePose,
    TileSpec,
    TrapSpec,
    estimate_duration,
    global_to_tile,
    overlap_region,
    paper_preset,
    plan_from_json,
    plan_scan,
    plan_to_json,
    tile_to_global,
)
from .merge import (
    CountReport,
    GlobalInstance,
    MergeConfig,
    count_eggs,
    deduplicate,
    merged_to_json,
    to_global,
)
from .metrics import (
    EvalReport,
    IOU_THRESHOLDS,
    MatchResult,
    average_precision,
    evaluate,
    mask_iou,
    match_greedy,
)

__version__ = "0.1.0"
