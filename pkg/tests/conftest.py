import sys
from pathlib import Path

import pytest

from ovitrap import OverlapSpec, TileSpec, TrapSpec, paper_preset, plan_scan

sys.path.insert(0, str(Path(__file__).parent))  # ap_oracle, scene helpers


@pytest.fixture(scope="session")
def paper_plan():
    return paper_preset()


@pytest.fixture()
def small_plan():
    """20 x 10 mm trap tiled by 5 x 8 mm views at 0.01 mm/px; 10 tiles."""
    return plan_scan(
        TrapSpec(20.0, 10.0),
        TileSpec(5.0, 8.0, px_major=500, px_minor=800),
        OverlapSpec(0.2, 0.0),
    )


@pytest.fixture()
def square_pitch_tile():
    return TileSpec(5.0, 8.0, px_major=500, px_minor=800)
