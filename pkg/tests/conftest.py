"""Shared fixtures: small rooms, bulbs and protocols that keep the suite fast."""

import pytest

from simulator.geometry import build_bulb
from simulator.models import BulbDesign, EvalProtocol, LayerSpec, RoomSpec


@pytest.fixture
def room() -> RoomSpec:
    return RoomSpec(width=6.0, depth=6.0, height=3.0)


@pytest.fixture
def small_room() -> RoomSpec:
    return RoomSpec(width=4.0, depth=4.0, height=3.0, floor_grid_resolution=0.5)


def make_bulb(room: RoomSpec, counts=(8, 8, 8), divergence=30.0, power=0.02) -> BulbDesign:
    layers = tuple(
        LayerSpec(elevation_deg=elevation, board_count=n)
        for elevation, n in zip((30.0, 45.0, 70.0), counts)
    )
    return BulbDesign(
        center=room.ceiling_center,
        radius=0.4,
        layers=layers,
        divergence_angle=divergence,
        half_intensity_angle=min(divergence, 89.0),
        power_per_board=power,
    )


@pytest.fixture
def bulb(room) -> BulbDesign:
    return make_bulb(room)


@pytest.fixture
def boards(bulb):
    return build_bulb(bulb)


@pytest.fixture
def protocol(small_room) -> EvalProtocol:
    return EvalProtocol(room=small_room, n_placements=12, seed=3)


@pytest.fixture
def bulb_factory():
    """make_bulb(room, counts=(8, 8, 8), divergence=30.0, power=0.02)"""
    return make_bulb
