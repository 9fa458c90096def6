# Make sure tests can import the local 'app' package
import sys, pathlib
sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1]))

import os
from decimal import Decimal

import pytest

from app.config import KiB, PolicyConfig, SimConfig, validate_config


def scaled(n: int, floor: int = 1) -> int:
    """Acceptance-size loop counts, shrunk unless HMSIM_PROPERTY_SCALE asks for more."""
    try:
        scale = float(os.getenv("HMSIM_PROPERTY_SCALE", "") or 0.02)
    except ValueError:
        scale = 0.02
    return max(floor, int(n * scale))


def make_cfg(**kw) -> SimConfig:
    """Small window: 16 DRAM pages, 64 NVM pages of 4 KiB."""
    base = dict(dram_capacity=16 * 4 * KiB, nvm_capacity=64 * 4 * KiB)
    base.update(kw)
    return validate_config(SimConfig(**base))


@pytest.fixture
def small_cfg() -> SimConfig:
    return make_cfg()


@pytest.fixture
def hot_cfg() -> SimConfig:
    return make_cfg(policy=PolicyConfig(name="hotness", threshold=2, epoch_cycles=1_000_000,
                                        dram_watermark=Decimal("0.75")))
