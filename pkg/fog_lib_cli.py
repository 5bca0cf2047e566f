#!/usr/bin/env python3
"""Command line front end: run scenarios, sweeps and checks.

    fog_lib_cli.py run --gen b:3,2,1:2:8 --scenario storms.json --out out/
    fog_lib_cli.py sweep --sweep raa_time --grid grid.json --jobs 4
    fog_lib_cli.py check --topology net.json --ops 500
    fog_lib_cli.py gen --gen a:25,12:5:20 topology.json

Every option can also be given in the environment with the FOGLIB_ prefix
(FOGLIB_SEED, FOGLIB_OUT, FOGLIB_CONTROL_BW, FOGLIB_FABRIC_CONFIG, ...);
flags win.

Exit codes: 0 success, 1 invariant violation, 2 bad usage or input.
"""

from __future__ import print_function

import argparse
import concurrent.futures
import json
import logging
import os
import random
import sys

from pathlib2 import Path

import fog_lib
import lib.checks as checks
import lib.dumpers as dumpers
import lib.simnet as simnet
import lib.southbound as southbound
import lib.topology as topology

ENV_PREFIX = "FOGLIB_"

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def env_default(name, default=None, environ=None):
    environ = os.environ if environ is None else environ
    return environ.get(ENV_PREFIX + name, default)


def build_parser(environ=None):
    def env(name, default=None):
        return env_default(name, default, environ)

    parser = argparse.ArgumentParser(
        description="Fog orchestration simulator and checker.")
    parser.add_argument('-v', '--verbose', action='store_true',
                        default=bool(env('VERBOSE')))
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group()
    source.add_argument('--topology', default=env('TOPOLOGY'),
                        help="topology JSON file")
    source.add_argument('--gen', default=env('GEN'),
                        help="generator spec kind:levels:fogs[:end_devices], "
                             "e.g. b:25,12,6:5:20")
    common.add_argument('--out', default=env('OUT', '.'),
                        help="output directory")
    common.add_argument('--seed', type=int, default=int(env('SEED', 0)))
    common.add_argument('--control-bw', type=float,
                        default=env('CONTROL_BW'),
                        help="control reservation per link, Mbps")
    common.add_argument('--config', default=env('CONFIG'),
                        help="orchestrator configuration JSON file")

    commands = parser.add_subparsers(dest='command')
    run = commands.add_parser('run', parents=[common],
                              help="replay a scenario")
    run.add_argument('--scenario', default=env('SCENARIO'),
                     required=env('SCENARIO') is None,
                     help="scenario JSON file")
    run.add_argument('--fabric-config', default=env('FABRIC_CONFIG'),
                     help="fabric byte sizes JSON file")

    sweep = commands.add_parser('sweep', parents=[common],
                                help="scalability sweeps")
    sweep.add_argument('--sweep', choices=('raa_time', 'alloc_delay'),
                       default=env('SWEEP', 'raa_time'))
    sweep.add_argument('--grid', default=env('GRID'),
                       help="grid as a JSON file or inline JSON")
    sweep.add_argument('--jobs', type=int, default=int(env('JOBS', 1)))

    check = commands.add_parser('check', parents=[common],
                                help="run the allocation and ledger oracles")
    check.add_argument('--ops', type=int, default=int(env('OPS', 500)),
                       help="random orchestrator operations")
    check.add_argument('--graphs', type=int, default=int(env('GRAPHS', 0)),
                       help="random graphs for the optimality oracle")
    check.add_argument('--corrupt', action='store_true',
                       help="corrupt a ledger before reconciling")

    gen = commands.add_parser('gen', parents=[common],
                              help="write a generated topology")
    gen.add_argument('output', help="topology JSON file to write")
    return parser


def load_config(args):
    if args.config:
        config = fog_lib.OrchestratorConfig.create_from_file(args.config)
    else:
        config = fog_lib.OrchestratorConfig()
    if args.control_bw is not None:
        config.control_bw = int(float(args.control_bw) * topology.MBPS)
    return config


def load_fabric_config(args):
    if not args.fabric_config:
        return None
    return southbound.FabricConfig.create_from_file(args.fabric_config)


def load_snapshot(args, required=True):
    if args.topology:
        snapshot = topology.TopologySnapshot.create_from_file(args.topology)
    elif args.gen:
        try:
            snapshot = simnet.generate_snapshot(
                simnet.TopologyGen.parse(args.gen))
        except simnet.SimulationError as e:
            raise UsageError(str(e))
    elif required:
        raise UsageError("one of --topology or --gen is required")
    else:
        return None
    if not snapshot.valid:
        raise UsageError("topology is invalid: %s" % "; ".join(
            snapshot.notes))
    return snapshot


def output_dir(args):
    out = Path(args.out).expanduser().absolute()
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args):
    config = load_config(args)
    fabric_config = load_fabric_config(args)
    snapshot = load_snapshot(args)
    scenario = simnet.Scenario.create_from_file(args.scenario)
    if not scenario.valid:
        raise UsageError("scenario is invalid: %s" % "; ".join(
            scenario.notes))
    topo = topology.Topology.from_snapshot(snapshot)
    try:
        metrics = simnet.run_scenario(topo, scenario,
                                      fabric_config=fabric_config,
                                      orchestrator_config=config)
    except simnet.SimulationError as e:
        raise UsageError(str(e))
    out = output_dir(args)
    dumpers.dump_metrics_to_csv(metrics, out / "metrics.csv")
    dumpers.dump_summary_to_json(metrics.summary, out / "summary.json")
    summary = metrics.summary
    print("Requests: %d, successes: %d, failures: %s" % (
        summary['requests'], summary['successes'], summary['failures']))
    print("Metrics written to %s" % (out / "metrics.csv"))
    if summary['reconciliation']:
        print("Ledger reconciliation failed:")
        for note in summary['reconciliation']:
            print("  %s" % note)
        return EXIT_VIOLATION
    return EXIT_OK


def load_grid(text):
    if text is None:
        raise UsageError("--grid is required for sweeps")
    path = Path(text).expanduser()
    try:
        if path.exists():
            with path.open('r', encoding='utf-8') as grid_file:
                grid = json.load(grid_file)
        else:
            grid = json.loads(text)
    except ValueError as e:
        raise UsageError("grid is not valid JSON: %s" % e)
    if not isinstance(grid, dict) or not grid.get('configs'):
        raise UsageError("grid needs a non-empty 'configs' list")
    return grid


def _raa_time_point(spec, repeats, seed, samples):
    return [simnet.sweep_raa_time(simnet.TopologyGen.parse(spec), repeats,
                                  seed, samples)], []


def _alloc_delay_point(spec, data_bw, control_bw):
    load = simnet.Load(int(data_bw), int(control_bw))
    reports = []
    points = simnet.sweep_alloc_delay(simnet.TopologyGen.parse(spec), load,
                                      reports=reports)
    return points, reports


def sweep_tasks(kind, grid, seed):
    """Returns the list of (function, args) grid points of a sweep.

    Each function returns a (SweepPoint list, DelayReport list) pair.
    """
    tasks = []
    for spec in grid['configs']:
        try:
            simnet.TopologyGen.parse(spec)
        except simnet.SimulationError as e:
            raise UsageError(str(e))
        if kind == 'raa_time':
            tasks.append((_raa_time_point,
                          (spec, int(grid.get('repeats', 5)), seed,
                           int(grid.get('samples', 20)))))
        else:
            loads = grid.get('loads', [[0, simnet.SimConfig.control_bw]])
            for data_bw, control_bw in loads:
                tasks.append((_alloc_delay_point,
                              (spec, data_bw, control_bw)))
    return tasks


def cmd_sweep(args):
    grid = load_grid(args.grid)
    tasks = sweep_tasks(args.sweep, grid, args.seed)
    points = []
    reports = []
    try:
        if args.jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
                futures = [pool.submit(f, *a) for f, a in tasks]
                results = [future.result() for future in futures]
        else:
            results = [function(*task_args) for function, task_args in tasks]
    except simnet.SimulationError as e:
        raise UsageError(str(e))
    for task_points, task_reports in results:
        points.extend(task_points)
        reports.extend(task_reports)
    out = output_dir(args)
    dumpers.dump_sweep_to_csv(points, out / ("%s.csv" % args.sweep))
    if reports:
        dumpers.dump_delay_reports_to_csv(
            reports, out / ("%s_reports.csv" % args.sweep))
    for point in points:
        print("%-40s %-12s median %.6g [%.6g, %.6g] n=%d" % point)
    return EXIT_OK


def cmd_check(args):
    rng = random.Random(args.seed)
    notes = checks.fuzz_optimality(args.graphs, args.seed)
    orchestrator = None
    if args.ops > 0 or args.corrupt:
        snapshot = load_snapshot(args, required=False)
        config = load_config(args)
        if snapshot is None:
            topo = simnet.testbed_topology()
        else:
            topo = topology.Topology.from_snapshot(snapshot)
        orchestrator = fog_lib.Orchestrator(topo, config=config)
        notes.extend(checks.fuzz_orchestrator(orchestrator, args.ops, rng))
        if args.corrupt:
            key = sorted(topo.links)[0]
            topo.links[key].alloc_bw += 1
            notes.extend(orchestrator.reconcile())
    if notes:
        print("Check failed:")
        for note in notes:
            print("  %s" % note)
        if orchestrator is not None:
            out = output_dir(args)
            dumpers.dump_fabric_to_json(orchestrator.backend,
                                        out / "check-fabric.json")
            dumpers.dump_topology_to_json(orchestrator.topology.to_snapshot(),
                                          out / "check-topology.json")
            dumpers.dump_summary_to_json({'notes': notes},
                                         out / "check-notes.json")
            print("Counterexample written to %s" % out)
        return EXIT_VIOLATION
    print("All checks passed.")
    return EXIT_OK


def cmd_gen(args):
    if not args.gen:
        raise UsageError("gen needs --gen")
    snapshot = load_snapshot(args)
    output = Path(args.output).expanduser().absolute()
    dumpers.dump_topology_to_json(snapshot, output)
    print("%s written to %s" % (snapshot, output))
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'sweep': cmd_sweep,
    'check': cmd_check,
    'gen': cmd_gen,
}


def main(argv=None, environ=None):
    parser = build_parser(environ)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage()
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, fog_lib.ConfigError,
            southbound.FabricConfigError) as e:
        print("Error: %s" % e, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
