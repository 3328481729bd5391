"""
Named scenario presets, one per reproduced experiment.
Each preset is a raw scenario document; validation happens in config_parser.
"""

import copy
from typing import Any, Callable, Dict, List


THREE_LAYERS = [
    {"elevation_deg": 30.0, "board_count": 8},
    {"elevation_deg": 45.0, "board_count": 8},
    {"elevation_deg": 70.0, "board_count": 8},
]


def get_fig3a_preset() -> Dict[str, Any]:
    """Room-size sweep: 25-board bulb at 20 mW per board, 20 deg divergence"""
    return {
        "room": {"width": 4.0, "depth": 4.0, "height": 3.0},
        "bulb": {
            "radius": 0.4,
            "layers": [
                {"elevation_deg": 30.0, "board_count": 5},
                {"elevation_deg": 45.0, "board_count": 8},
                {"elevation_deg": 70.0, "board_count": 12},
            ],
            "divergence_angle": 20.0,
            "half_intensity_angle": 20.0,
            "power_per_board": 0.02,
        },
        "seed": 1,
        "evaluation": {"n_placements": 200},
        "room_sweep": {"floor_dims": [4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0]},
    }


def get_fig3b_preset() -> Dict[str, Any]:
    """Divergence sweep in a 6 m room, averaged over five total bulb powers"""
    return {
        "room": {"width": 6.0, "depth": 6.0, "height": 3.0},
        "bulb": {
            "radius": 0.4,
            "layers": copy.deepcopy(THREE_LAYERS),
            "divergence_angle": 20.0,
            "half_intensity_angle": 20.0,
        },
        "seed": 1,
        "evaluation": {"n_placements": 200, "sir_policy": {"sensitivity_w": 1.0e-4}},
        "divergence_sweep": {
            "angles": [5.0, 40.0, 1.0],
            "powers": [5.0, 10.0, 20.0, 25.0, 50.0],
        },
    }


def get_fig4_preset() -> Dict[str, Any]:
    """Three-region surface of the two-layer 11/17 bulb at 45 deg divergence"""
    return {
        "room": {"width": 6.0, "depth": 6.0, "height": 3.0},
        "bulb": {
            "radius": 0.4,
            "layers": [
                {"elevation_deg": 30.0, "board_count": 11},
                {"elevation_deg": 60.0, "board_count": 17},
            ],
            "divergence_angle": 45.0,
            "half_intensity_angle": 45.0,
        },
        "seed": 1,
        "three_region": {"n_samples": 40, "bin_width": 0.25, "fixed_receiver": [1.5, 3.0]},
    }


def get_fig5_preset() -> Dict[str, Any]:
    """Optimizer frontier over total power budgets, with and without the illumination objective"""
    return {
        "room": {"width": 6.0, "depth": 6.0, "height": 3.0},
        "bulb": {
            "radius": 0.4,
            "layers": copy.deepcopy(THREE_LAYERS),
            "divergence_angle": 20.0,
            "half_intensity_angle": 20.0,
        },
        "seed": 1,
        "evaluation": {"n_placements": 100},
        "optimizer": {
            "boards_per_layer_range": [[4, 8], [4, 10], [6, 12]],
            "divergence_range": [5.0, 40.0, 5.0],
            "per_board_power": 1.0,
            "budgets": [14.0, 18.0, 22.0, 26.0, 30.0, 34.0],
        },
    }


def get_fig6_preset() -> Dict[str, Any]:
    """SINR CDFs of the 3-LED and 7-LED flat cluster layouts in a 15 x 17 x 4 m room"""
    return {
        "room": {"width": 15.0, "depth": 17.0, "height": 4.0, "floor_grid_resolution": 0.5},
        "sinr": {
            "layouts": [
                {"name": "3led", "cluster_type": "three_led", "rows": 7, "cols": 2},
                {"name": "7led", "cluster_type": "seven_led", "rows": 3, "cols": 2},
            ],
            "fov_deg": 40.0,
            "tilt_deg": 40.0,
            "max_order": 4,
            "patch_size": 0.5,
        },
    }


def get_protocol_preset() -> Dict[str, Any]:
    """Association protocol with eight random walkers in a 6 m room"""
    return {
        "room": {"width": 6.0, "depth": 6.0, "height": 3.0},
        "bulb": {
            "radius": 0.4,
            "layers": copy.deepcopy(THREE_LAYERS),
            "divergence_angle": 30.0,
            "half_intensity_angle": 30.0,
        },
        "seed": 7,
        "protocol": {
            "config": {"search_period": 0.1, "n_t": 3},
            "random_traces": {"n": 8, "duration": 5.0},
            "data_destinations": ["02:00:00:00:00:00", "02:00:00:00:00:07"],
        },
    }


# Registry of all scenario presets
PRESET_REGISTRY: Dict[str, Callable[[], Dict[str, Any]]] = {
    "fig3a": get_fig3a_preset,
    "fig3b": get_fig3b_preset,
    "fig4": get_fig4_preset,
    "fig5": get_fig5_preset,
    "fig6": get_fig6_preset,
    "protocol": get_protocol_preset,
}


def get_preset(name: str) -> Dict[str, Any]:
    """
    Get a preset scenario document.

    Args:
        name: Preset name

    Returns:
        Fresh raw scenario document (safe to mutate)

    Raises:
        ValueError: If the preset is not in the registry
    """
    if name not in PRESET_REGISTRY:
        raise ValueError(
            f"No preset named '{name}'. "
            f"Available: {list(PRESET_REGISTRY.keys())}"
        )

    return PRESET_REGISTRY[name]()


def list_presets() -> List[str]:
    """List all preset names"""
    return list(PRESET_REGISTRY.keys())


def describe_presets() -> Dict[str, str]:
    return {name: (factory.__doc__ or "").strip() for name, factory in PRESET_REGISTRY.items()}
