"""Command-line harness: simulate, estimate, evaluate, sweep-n, report."""

from __future__ import annotations

import argparse
import glob
import json
import sys
from pathlib import Path

from .clustering import ClusterParams
from .flow import FlowParams
from .harness import estimate_over_log, sweep_n
from .logs import read_flow, read_frames, read_truth, require_file, write_flow, write_frames, write_truth
from .metrics import aggregate_trial, experiment_name, summarize_trials, target_speed_from_truth
from .registration import IcpParams
from .simulator import (
    PRESET_NAMES,
    ConfigError,
    load_scenario,
    make_preset,
    parse_preset_key,
    run_scenario,
    save_scenario,
)


def _load_scenario_arg(text: str):
    """A scenario argument is a JSON file path or a preset key like
    'approach-y@0.15#s0'."""
    path = Path(text)
    if path.is_file():
        return load_scenario(path)
    try:
        return parse_preset_key(text)
    except ConfigError:
        raise FileNotFoundError(f"no such scenario file or preset: {text}")


def _cmd_simulate(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    log = run_scenario(scenario, seed=args.seed)
    write_frames(args.out, log.frames)
    write_truth(args.truth, log.truth)
    print(f"simulated {scenario.name}: {len(log.truth)} steps, {len(log.frames)} frames")
    return 0


def _cmd_presets(args) -> int:
    if args.list or args.name is None:
        for name in PRESET_NAMES:
            print(name)
        return 0
    scenario = make_preset(args.name, speed=args.speed, seed=args.seed, noise_rel=args.noise_rel)
    if args.out:
        save_scenario(scenario, args.out)
        print(f"wrote {scenario.name} to {args.out}")
    else:
        print(json.dumps({"name": scenario.name, "duration": scenario.duration, "steps": scenario.n_steps}))
    return 0


def _cmd_estimate(args) -> int:
    frames = read_frames(require_file(args.frames))
    scenario = load_scenario(require_file(args.scenario)) if args.scenario else None
    params = FlowParams(
        n=args.n,
        n_min=args.nmin,
        gamma=args.gamma,
        delta=args.delta,
        max_retry=args.max_retry,
        baseline_mode=args.baseline,
    )
    cluster_params = ClusterParams(
        min_cluster_size=args.min_cluster_size, min_samples=args.min_samples
    )
    icp_params = IcpParams(correspondence_threshold=args.tau)
    records = estimate_over_log(
        frames, params, cluster_params, icp_params, scenario=scenario, timing=args.timing
    )
    write_flow(args.out, records)
    print(f"estimated {len(records)} frame pairs -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    flow = read_flow(require_file(args.flow))
    truth = read_truth(require_file(args.truth))
    trial = aggregate_trial(
        flow,
        truth,
        target_speed=target_speed_from_truth(truth),
        experiment=experiment_name(args.flow),
    )
    doc = trial.to_doc()
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if trial.no_moving_points:
        print(f"warning: no moving points in {args.flow}")
    print(f"evaluated {trial.frames_evaluated} frame pairs -> {args.out}")
    return 0


def _cmd_sweep_n(args) -> int:
    paths = sorted(glob.glob(args.frames_glob))
    if not paths:
        raise FileNotFoundError(f"no frame logs match: {args.frames_glob}")
    n_values = [int(v) for v in args.n.split(",") if v.strip()]
    trials = []
    scenarios = {}
    for frames_path in paths:
        truth_path = frames_path.replace("frames", "truth")
        label = Path(frames_path).name
        trials.append((label, read_frames(frames_path), read_truth(require_file(truth_path))))
        scenario_path = Path(frames_path.replace(".frames.jsonl", ".scenario.json"))
        if scenario_path.is_file():
            scenarios[label] = load_scenario(scenario_path)
    rows = sweep_n(trials, n_values, scenarios=scenarios)
    with open(args.out, "w") as fh:
        fh.write("n,speed,trial,normalized_error_pct\n")
        for row in rows:
            err = "MISSING" if row.normalized_error_pct is None else repr(row.normalized_error_pct)
            fh.write(f"{row.n},{row.target_speed:.2f},{row.trial},{err}\n")
    print(f"swept n={n_values} over {len(paths)} trials -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    trials = []
    for path in args.metrics:
        with open(require_file(path)) as fh:
            doc = json.load(fh)
        from .metrics import TrialMetrics

        trials.append(
            TrialMetrics(
                experiment=doc["experiment"],
                target_speed=doc["target_speed"],
                n=doc["n"],
                baseline=doc["baseline"],
                frames_evaluated=doc["frames_evaluated"],
                angle_mean_deg=doc["angle_deviation_deg_mean"],
                velocity_error_mean=doc["velocity_error_mean"],
                moving_points=doc["points"]["Moving"],
                stationary_points=doc["points"]["Stationary"],
                unclassified_points=doc["points"]["Unclassified"],
                missed_moving_points=doc["missed_moving_points"],
                no_moving_points=doc["no_moving_points"],
            )
        )
    rows = summarize_trials(trials)
    header = f"{'experiment':<18}{'speed':>7}{'angle mean':>12}{'angle std':>11}{'vel mean':>10}{'vel std':>9}{'trials':>8}"
    print(header)
    print("-" * len(header))

    def _fmt(v, nd):
        return "-" if v is None else f"{v:.{nd}f}"

    for row in rows:
        print(
            f"{row['experiment']:<18}{row['speed']:>7.2f}{_fmt(row['angle_mean'], 3):>12}"
            f"{_fmt(row['angle_std'], 3):>11}{_fmt(row['vel_mean'], 3):>10}{_fmt(row['vel_std'], 3):>9}"
            f"{row['trials']:>8d}"
        )
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("experiment,speed,angle_mean,angle_std,vel_mean,vel_std\n")
            for row in rows:
                cells = [
                    row["experiment"],
                    f"{row['speed']:.2f}",
                    *("" if row[key] is None else repr(row[key]) for key in ("angle_mean", "angle_std", "vel_mean", "vel_std")),
                ]
                fh.write(",".join(cells) + "\n")
        print(f"wrote CSV -> {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparseflow",
        description="Scene-flow estimation from distributed multizone ToF sensing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scenario into frame and truth logs")
    p.add_argument("--scenario", required=True, help="scenario JSON file or preset key (e.g. approach-y@0.15#s0)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", required=True, help="output frame log (JSONL)")
    p.add_argument("--truth", required=True, help="output ground-truth log (JSONL)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("presets", help="list preset scenarios or export one as JSON")
    p.add_argument("--list", action="store_true")
    p.add_argument("--name", choices=PRESET_NAMES)
    p.add_argument("--speed", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-rel", type=float, default=0.10)
    p.add_argument("--out", help="write the scenario JSON here")
    p.set_defaults(func=_cmd_presets)

    p = sub.add_parser("estimate", help="run the flow estimator over a frame log")
    p.add_argument("--frames", required=True)
    p.add_argument("--n", type=int, default=8, help="frame gap")
    p.add_argument("--gamma", type=float, default=0.7, help="fitness gate")
    p.add_argument("--delta", type=float, default=0.04, help="stationary displacement gate (m)")
    p.add_argument("--nmin", type=int, default=60, help="minimum cluster side size")
    p.add_argument("--baseline", action="store_true", help="disable gates and inlier-removal retry")
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", help="scenario JSON enabling the robot self filter and exact intrinsics")
    p.add_argument("--min-cluster-size", type=int, default=20)
    p.add_argument("--min-samples", type=int, default=5)
    p.add_argument("--tau", type=float, default=0.10, help="ICP correspondence threshold (m)")
    p.add_argument("--max-retry", type=int, default=5)
    p.add_argument("--timing", action="store_true", help="record wall-clock per pair (breaks byte determinism)")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("evaluate", help="score a flow log against ground truth")
    p.add_argument("--flow", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep-n", help="sweep the frame gap over a set of trials")
    p.add_argument("--frames-glob", required=True, help="glob of frame logs; truth logs are siblings with 'frames' -> 'truth'")
    p.add_argument("--n", default="2,4,6,8,10", help="comma-separated frame gaps")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=_cmd_sweep_n)

    p = sub.add_parser("report", help="summarize metrics files into a results table")
    p.add_argument("--metrics", nargs="+", required=True)
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=_cmd_report)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
