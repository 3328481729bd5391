"""
Main CLI for the VLC simulator.
Runs one experiment per subcommand:
1. sweep-room: mean SIR versus square floor size
2. sweep-divergence: mean SIR versus board divergence angle
3. three-region: mean SIR over receiver-pair distance bins (plus top-view map)
4. optimize: best bulb per power budget, with and without illumination objective
5. sinr-cdf: SINR distributions of flat cluster layouts
6. protocol-sim: association protocol over mobility traces
7. export-gains, irradiance, partition: channel tables for one bulb and fixed receivers
"""

import argparse
import logging
import math
import os
import sys
import time
from typing import Any, Callable, Dict, List, Optional

from dotenv import load_dotenv

from scenarios.config_parser import ConfigError, resolve_scenario
from scenarios.presets import describe_presets, get_preset
from scenarios.trace_loader import load_traces
from simulator.channel import build_surface_mesh, compute_gain_matrix, floor_irradiance_map
from simulator.data_logger import DataLogger, db_cell, format_value
from simulator.geometry import build_bulb, build_cluster_layout, grid_receivers, make_receiver
from simulator.metrics import (
    ecdf,
    illumination_stats,
    layout_gains,
    room_size_sweep,
    sinr_field,
    sir_map,
    three_region_surface,
    to_db,
)
from simulator.models import CoverageGate, Frame, FrameKind, ReceiverSpec, ScenarioConfig, SinrScenario
from simulator.optimizer import build_manifest, divergence_sweep, power_sweep
from simulator.partition import partition_rows, repartition
from simulator.protocol import (
    generate_random_traces,
    handover_stats,
    route_data,
    run_simulation,
)
from simulator.report import ReportGenerator


load_dotenv()

DEFAULT_OUTPUT_DIR = "data/runs"

STOCHASTIC_COMMANDS = {"sweep-room", "sweep-divergence", "three-region", "optimize"}


class Console:
    """Phase banners and status lines on stdout"""

    def __init__(self, quiet: bool = False):
        self.quiet = quiet

    def banner(self, title: str):
        if not self.quiet:
            print(f"\n{'='*60}")
            print(title)
            print(f"{'='*60}\n")

    def line(self, text: str):
        if not self.quiet:
            print(text)


def _require(config: ScenarioConfig, section: str, command: str):
    value = getattr(config, section)
    if value is None:
        raise ConfigError([(section, f"section is required by {command}")])
    return value


def _require_seed(config: ScenarioConfig, command: str):
    if config.seed is None:
        raise ConfigError([("seed", f"a seed is required by {command}")])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_sweep_room(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                   console: Console) -> Dict[str, Any]:
    """Room-size sweep; one CSV row per floor dimension"""
    bulb = _require(config, "bulb", "sweep-room")
    sweep = _require(config, "room_sweep", "sweep-room")
    _require_seed(config, "sweep-room")

    rows = room_size_sweep(bulb, sweep.floor_dims, config.eval_protocol())
    for row in rows:
        console.line(f"  {row.floor_dim:5.1f} m: {row.mean_sir_db:8.3f} dB")

    data_logger.write_csv(
        "sweep_room.csv",
        ["floor_dim_m", "mean_sir_db", "zero_signal_placements"],
        [[r.floor_dim, db_cell(r.mean_sir_db), r.zero_signal_placements] for r in rows],
    )
    return {"rows": len(rows)}


def cmd_sweep_divergence(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                         console: Console) -> Dict[str, Any]:
    """Divergence sweep averaged over total bulb powers"""
    bulb = _require(config, "bulb", "sweep-divergence")
    sweep = _require(config, "divergence_sweep", "sweep-divergence")
    _require_seed(config, "sweep-divergence")

    rows = divergence_sweep(
        bulb,
        sweep.angle_values(),
        sweep.powers,
        config.eval_protocol(),
        follow_half_intensity=sweep.follow_half_intensity,
        threads=threads,
    )
    best = max(rows, key=lambda r: (r.mean_sir, -r.angle))
    console.line(f"  Best divergence: {best.angle:.1f} deg ({best.mean_sir_db:.3f} dB)")

    header = ["divergence_deg", "mean_sir_db"] + [f"sir_db_{p:g}W" for p in sweep.powers]
    data_logger.write_csv(
        "sweep_divergence.csv",
        header,
        [
            [r.angle, db_cell(r.mean_sir_db)] + [db_cell(to_db(r.per_power[p])) for p in sweep.powers]
            for r in rows
        ],
    )
    return {"best_divergence_deg": best.angle, "best_mean_sir_db": round(best.mean_sir_db, 4)}


def cmd_three_region(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                     console: Console) -> Dict[str, Any]:
    """Mean SIR over (d1, d2) distance bins, and the optional top-view map"""
    bulb = _require(config, "bulb", "three-region")
    region = _require(config, "three_region", "three-region")
    _require_seed(config, "three-region")

    bulb = bulb.centered_in(config.room)
    protocol = config.eval_protocol()
    rows = three_region_surface(
        config.room, bulb, region.n_samples, config.seed,
        bin_width=region.bin_width, max_distance=region.max_distance, protocol=protocol,
    )
    console.line(f"  {len(rows)} distance bins")
    data_logger.write_csv(
        "three_region.csv",
        ["d1_m", "d2_m", "mean_sir_db", "samples"],
        [[r.d1, r.d2, db_cell(r.mean_sir_db), r.samples] for r in rows],
    )

    summary: Dict[str, Any] = {"bins": len(rows)}
    if region.fixed_receiver is not None:
        values = sir_map(config.room, bulb, region.fixed_receiver, protocol)
        xs, ys = config.room.floor_grid()
        cells = []
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                v = values[j, i]
                cells.append([float(x), float(y), "" if math.isnan(v) else db_cell(to_db(float(v)))])
        data_logger.write_csv("sir_map.csv", ["x_m", "y_m", "sir_db"], cells)
        summary["fixed_receiver"] = list(region.fixed_receiver)
    return summary


def cmd_optimize(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                 console: Console) -> Dict[str, Any]:
    """Power sweep of the exhaustive optimizer"""
    bulb = _require(config, "bulb", "optimize")
    opt = _require(config, "optimizer", "optimize")
    _require_seed(config, "optimize")

    space = opt.design_space(bulb)
    protocol = config.eval_protocol()
    rows = power_sweep(space, opt.budgets, protocol, threads=threads)
    for row in rows:
        if not row.feasible:
            console.line(f"  {row.budget:7.2f} W: no feasible design")
            continue
        console.line(
            f"  {row.budget:7.2f} W: {row.sir_unconstrained_db:8.3f} dB {row.unconstrained_boards}"
            f" | constrained {row.sir_constrained_db:8.3f} dB {row.constrained_boards}"
        )

    data_logger.write_csv(
        "frontier.csv",
        ["budget_w", "feasible", "sir_unconstrained_db", "sir_constrained_db", "illum_variance", "objective",
         "unconstrained_boards", "unconstrained_divergence_deg",
         "constrained_boards", "constrained_divergence_deg"],
        [
            [r.budget, r.feasible, db_cell(r.sir_unconstrained_db), db_cell(r.sir_constrained_db),
             r.illum_variance, r.objective,
             "/".join(str(n) for n in r.unconstrained_boards), r.unconstrained_divergence,
             "/".join(str(n) for n in r.constrained_boards), r.constrained_divergence]
            for r in rows
        ],
    )
    data_logger.write_json("optimizer.json", build_manifest(space, protocol, rows))
    return {"budgets": len(rows), "feasible_budgets": sum(r.feasible for r in rows)}


def cmd_sinr_cdf(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                 console: Console) -> Dict[str, Any]:
    """SINR samples and CDFs for every configured cluster layout"""
    sinr = _require(config, "sinr", "sinr-cdf")
    room = config.room
    receivers = grid_receivers(
        room, diversity=True, aperture_radius=sinr.aperture_radius,
        fov_deg=sinr.fov_deg, tilt_deg=sinr.tilt_deg,
    )
    console.line(f"  {len(receivers)} receivers, reflections up to order {sinr.max_order}")

    summary: Dict[str, Any] = {}
    for spec in sinr.layouts:
        layout = build_cluster_layout(
            spec.cluster_type, spec.rows, spec.cols, room,
            tilt_deg=spec.tilt_deg, spacing=spec.element_spacing,
            per_led_power=spec.per_led_power, half_intensity_deg=spec.half_intensity_deg,
            divergence_deg=spec.divergence_deg,
        )
        gains = layout_gains(room, layout, receivers, sinr.max_order, sinr.patch_size, gate=CoverageGate.FOV)
        field = sinr_field(layout, receivers, gains, sinr.noise)

        data_logger.write_csv(
            f"sinr_samples_{spec.name}.csv",
            ["x_m", "y_m"] + [s.value for s in SinrScenario],
            [
                [r.position[0], r.position[1]] + [db_cell(float(field[s][i])) for s in SinrScenario]
                for i, r in enumerate(receivers)
            ],
        )
        cdf_rows = []
        medians = {}
        for scenario in SinrScenario:
            cdf = ecdf(field[scenario])
            medians[scenario.value] = round(cdf.median, 4)
            cdf_rows.extend([scenario.value, db_cell(v), p] for v, p in cdf.rows())
        data_logger.write_csv(f"sinr_cdf_{spec.name}.csv", ["scenario", "sinr_db", "cdf"], cdf_rows)

        console.line(f"  {spec.name}: medians {medians}")
        summary[spec.name] = {"boards": len(layout.boards), "median_sinr_db": medians}
    return summary


def cmd_protocol_sim(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                     console: Console) -> Dict[str, Any]:
    """Association protocol run with event log, LED-RAT and handover statistics"""
    bulb = _require(config, "bulb", "protocol-sim")
    sim = _require(config, "protocol", "protocol-sim")
    protocol_config = sim.config
    if sim.random_traces is not None or protocol_config.ack_loss_probability > 0.0:
        _require_seed(config, "protocol-sim with random traces or ACK loss")
    if config.seed is not None:
        protocol_config = protocol_config.model_copy(update={"seed": config.seed})

    if sim.random_traces is not None:
        traces = generate_random_traces(
            config.room, sim.random_traces.n, config.seed,
            duration=sim.random_traces.duration, n_waypoints=sim.random_traces.n_waypoints,
        )
    else:
        traces = load_traces(sim.traces_file, sim.manifest_file)
    console.line(f"  {len(traces)} receivers")

    result = run_simulation(traces, bulb.centered_in(config.room), config.room, protocol_config)
    stats = handover_stats(result.log)

    routes = []
    for destination in sim.data_destinations:
        frame = Frame(kind=FrameKind.DATA, payload_dest=destination)
        boards = route_data(frame, result.led_rat, result.log,
                            time=result.led_rat.round_counter * protocol_config.search_period)
        routes.append([destination, " ".join(str(b) for b in sorted(boards))])

    data_logger.write_lines("events.jsonl", result.log.to_lines())
    data_logger.write_json("led_rat.json", result.led_rat.model_dump(mode="json"))
    data_logger.write_json("handover_stats.json", stats.model_dump(mode="json"))
    if routes:
        data_logger.write_csv("routing.csv", ["rf_address", "boards"], routes)

    console.line(f"  {result.rounds} rounds, {len(result.log)} events, "
                 f"{stats.repartition_count} re-partitions")
    return {
        "rounds": result.rounds,
        "events": len(result.log),
        "repartitions": stats.repartition_count,
        "mean_association_latency": stats.mean_association_latency,
    }


def _channel_receivers(config: ScenarioConfig, command: str) -> List[ReceiverSpec]:
    channel = _require(config, "channel", command)
    if not channel.receivers:
        raise ConfigError([("channel.receivers", f"at least one receiver position is required by {command}")])
    outside = [(i, p) for i, p in enumerate(channel.receivers) if not config.room.contains_floor_point(p)]
    if outside:
        raise ConfigError([(f"channel.receivers.{i}", f"{p} is outside the room") for i, p in outside])
    return [
        make_receiver(i, x, y, z=channel.receiver_height,
                      aperture_radius=channel.aperture_radius, fov_deg=channel.fov_deg)
        for i, (x, y) in enumerate(channel.receivers)
    ]


def cmd_export_gains(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                     console: Console) -> Dict[str, Any]:
    """Board-to-receiver gain matrix, one CSV row per (board, receiver, element)"""
    bulb = _require(config, "bulb", "export-gains")
    receivers = _channel_receivers(config, "export-gains")
    channel = config.channel

    boards = build_bulb(bulb.centered_in(config.room))
    mesh = build_surface_mesh(config.room, channel.patch_size) if channel.max_order > 0 else None
    gains = compute_gain_matrix(boards, receivers, config.room, gate=channel.gate,
                                mesh=mesh, max_order=channel.max_order)
    rows = gains.to_rows()
    console.line(f"  {len(boards)} boards x {len(receivers)} receivers, reflections up to order {channel.max_order}")

    data_logger.write_csv(
        "gains.csv",
        ["board_id", "receiver_id", "element_id", "los_gain", "reflected_gain"],
        rows,
    )
    return {"boards": len(boards), "receivers": len(receivers), "rows": len(rows)}


def cmd_irradiance(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                   console: Console) -> Dict[str, Any]:
    """Floor irradiance grid plus its uniformity statistics"""
    bulb = _require(config, "bulb", "irradiance")
    boards = build_bulb(bulb.centered_in(config.room))
    xs, ys = config.room.floor_grid()
    grid = floor_irradiance_map(boards, config.room)
    stats = illumination_stats(grid)
    console.line(f"  mean {stats.mean:.4g} W/m^2, std {stats.std:.4g}, min {stats.min:.4g}, max {stats.max:.4g}")

    data_logger.write_csv(
        "irradiance.csv",
        ["y_m\\x_m", *(format_value(float(x)) for x in xs)],
        [[float(y), *(float(v) for v in grid[iy])] for iy, y in enumerate(ys)],
    )
    return stats.model_dump(mode="json")


def cmd_partition(config: ScenarioConfig, data_logger: DataLogger, threads: int,
                  console: Console) -> Dict[str, Any]:
    """Board partition among the configured receivers"""
    bulb = _require(config, "bulb", "partition")
    receivers = _channel_receivers(config, "partition")
    boards = build_bulb(bulb.centered_in(config.room))

    partition = repartition(
        [(r.id, (r.position[0], r.position[1])) for r in receivers], boards, config.room,
    )
    sizes = {r.id: len(partition.boards_of(r.id)) for r in receivers}
    console.line("  " + ", ".join(f"receiver {rid}: {n} boards" for rid, n in sizes.items()))

    data_logger.write_csv("partition.csv", ["board_id", "receiver_id"], partition_rows(partition))
    return {"boards_per_receiver": sizes}


COMMANDS: Dict[str, Callable[..., Dict[str, Any]]] = {
    "sweep-room": cmd_sweep_room,
    "sweep-divergence": cmd_sweep_divergence,
    "three-region": cmd_three_region,
    "optimize": cmd_optimize,
    "sinr-cdf": cmd_sinr_cdf,
    "protocol-sim": cmd_protocol_sim,
    "export-gains": cmd_export_gains,
    "irradiance": cmd_irradiance,
    "partition": cmd_partition,
}


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def run_command(
    command: str,
    preset: Optional[str] = None,
    config_path: Optional[str] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    threads: Optional[int] = None,
    quiet: bool = False,
) -> int:
    """
    Resolve the scenario, run one subcommand and write its outputs.

    Returns:
        Exit status: 0 on success, 2 for config errors, 1 for any other failure
    """
    console = Console(quiet)
    try:
        base = get_preset(preset) if preset else None
        config, _ = resolve_scenario(base, config_path, {"seed": seed})
    except ConfigError as e:
        for line in e.lines():
            print(line, file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"config error at preset: {e}", file=sys.stderr)
        return 2

    threads = threads or int(os.getenv("VLCSIM_THREADS", "1"))
    base_dir = out or config.output_dir or os.getenv("VLCSIM_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)
    run_name = f"{preset}_{command}" if preset else command

    data_logger = DataLogger(base_dir)
    run_dir = data_logger.setup_run_dir(run_name)

    console.banner(f"{command.upper()}: {preset or config_path}")
    start_time = time.time()
    try:
        summary = COMMANDS[command](config, data_logger, threads, console)
        reporter = ReportGenerator(data_logger)
        manifest = reporter.build_manifest(
            subcommand=command,
            config=config.model_dump(mode="json"),
            seed=config.seed,
            threads=threads,
            preset=preset,
            summary=summary,
        )
        reporter.save_manifest(manifest)
    except ConfigError as e:
        data_logger.discard()
        for line in e.lines():
            print(line, file=sys.stderr)
        return 2
    except Exception as e:
        data_logger.discard()
        print(f"Error: {command} failed: {e}", file=sys.stderr)
        return 1

    console.line(f"\nOutputs saved to: {run_dir}/")
    console.line(f"Execution Time: {time.time() - start_time:.1f}s")
    return 0


def print_presets():
    print("\nAvailable presets:")
    for name, description in describe_presets().items():
        print(f"  - {name}: {description}")


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    parser = argparse.ArgumentParser(
        description="Multi-element VLC simulator: bulb design, interference and association protocol",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m simulator.main sweep-room --preset fig3a
  python -m simulator.main sweep-divergence --preset fig3b --threads 4
  python -m simulator.main optimize --preset fig5 --config my_space.yaml --seed 3
  python -m simulator.main protocol-sim --config scenario.yaml --out /tmp/runs
  python -m simulator.main partition --config scenarios/examples/channel_export.yaml
  python -m simulator.main --list-presets
        """
    )
    parser.add_argument(
        "command",
        nargs="?",
        choices=list(COMMANDS.keys()),
        help="Experiment to run"
    )
    parser.add_argument("--config", help="YAML scenario file (merged over the preset)")
    parser.add_argument("--preset", help="Named preset scenario")
    parser.add_argument("--seed", type=int, help="Override the scenario seed")
    parser.add_argument("--out", help="Output base directory (default: $VLCSIM_OUTPUT_DIR or data/runs)")
    parser.add_argument("--threads", type=int, help="Worker threads (default: $VLCSIM_THREADS or 1)")
    parser.add_argument("--list-presets", action="store_true", help="List preset scenarios")
    parser.add_argument("--quiet", action="store_true", help="Suppress progress output")
    parser.add_argument("--verbose", action="store_true", help="Show library diagnostics")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.list_presets:
        print_presets()
        return 0

    if not args.command:
        parser.print_help()
        return 2
    if args.seed is not None and args.seed < 0:
        print("config error at seed: must be >= 0", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("config error at threads: must be >= 1", file=sys.stderr)
        return 2

    return run_command(
        args.command,
        preset=args.preset,
        config_path=args.config,
        seed=args.seed,
        out=args.out,
        threads=args.threads,
        quiet=args.quiet,
    )


if __name__ == "__main__":
    sys.exit(main())
