"""Command-line entry point.

Subcommands: gen-data, train, rollout, eval, inspect. Every run writes its
fully resolved configuration next to its outputs. Exit codes: 0 success,
1 usage or invalid parameters, 2 numeric failure, 3 missing input.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import figures
from .correction import CorrectionGains, WaypointSchedule, forward_schedule
from .features import build_dataset
from .kinematics import KinematicTree, planar_biped
from .mann import load_checkpoint
from .rollout import (TrajectoryLog, load_predictor, metric_drift,
                      metric_foot_slide, metric_foot_traces, rollout)
from .synthdata import (GaitParams, forward_walk_segments, generate_gait,
                        mixed_segments, verify_consistency)
from .trajectory import MirrorMap, Trajectory, default_mirror_map, mirror_trajectory
from .training import NonFiniteGradientError, TrainConfig, run_training

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_MISSING = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_config(out_dir, name, payload):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)


def _load_data_dir(data_dir):
    data_dir = Path(data_dir)
    tree_path = data_dir / "tree.model"
    if not tree_path.exists():
        raise FileNotFoundError(f"no tree.model in {data_dir}")
    tree = KinematicTree.load(tree_path)
    episodes = sorted(data_dir.glob("episode_*.csv"))
    if not episodes:
        raise FileNotFoundError(f"no episode_*.csv files in {data_dir}")
    trajs = [Trajectory.load(p) for p in episodes]
    mirror_path = data_dir / "mirror_map.txt"
    mirror = (MirrorMap.load(mirror_path, tree.joint_names)
              if mirror_path.exists() else default_mirror_map(tree))
    return tree, trajs, mirror


def cmd_gen_data(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tree = KinematicTree.load(args.tree) if args.tree else planar_biped(args.joints)
    mirror = default_mirror_map(tree)
    rng = np.random.default_rng(args.seed)
    episodes = max(1, round(args.minutes * 60.0 / args.episode_seconds))
    worst = 0.0
    frames = 0
    for ep in range(episodes):
        ep_seed = int(rng.integers(2**31))
        if args.profile == "forward":
            segments = forward_walk_segments(args.episode_seconds - 4.0,
                                             args.step_length)
        else:
            segments = mixed_segments(args.episode_seconds - 4.0,
                                      args.step_length, seed=ep_seed)
        params = GaitParams(
            segments=segments, seed=ep_seed,
            start_xy=tuple(rng.uniform(-3.0, 3.0, 2)),
            start_yaw=float(rng.uniform(-1.0, 1.0)),
            lateral_bias=args.lateral_bias, yaw_bias=args.yaw_bias)
        traj = generate_gait(tree, params)
        traj.save(out / f"episode_{ep:03d}.csv")
        if args.mirror:
            mirror_trajectory(traj, mirror).save(out / f"episode_{ep:03d}m.csv")
        report = verify_consistency(tree, traj)
        worst = max(worst, report.max_residual)
        frames += len(traj) * (2 if args.mirror else 1)
    tree.save(out / "tree.model")
    mirror.save(out / "mirror_map.txt", tree.joint_names)
    _write_config(out, "gen_config.json", vars(args))
    bias = max(abs(args.lateral_bias), abs(args.yaw_bias))
    print(f"wrote {episodes * (2 if args.mirror else 1)} episodes, "
          f"{frames} frames at 50 Hz")
    print(f"max support-foot velocity residual: {worst:.3e}"
          + (f" (includes injected bias {bias:g})" if bias else ""))
    return EXIT_OK


def _parse_sweep(text):
    try:
        return [float(w) for w in text.split(",") if w.strip() != ""]
    except ValueError:
        raise ValueError(f"bad sweep list {text!r}; expected e.g. 0,1,10,20,100")


def _train_single(dataset, tree, args, w, seed, out_dir, resume=False):
    config = TrainConfig(
        contact_weight=w, epochs=args.epochs, batch_size=args.batch,
        learning_rate=args.lr, weight_decay=args.weight_decay, seed=seed,
        test_fraction=args.test_fraction, experts=args.experts,
        gating_hidden=args.gating_hidden, prediction_hidden=args.prediction_hidden)
    result = run_training(out_dir, dataset, config, tree_text=tree.to_text(),
                          resume=resume)
    figures.loss_history_figure(result.history, Path(out_dir) / "history.png")
    return result


def _sweep_worker(payload):
    data_dir, vargs, w, seed, out_dir = payload
    args = argparse.Namespace(**vargs)
    tree, trajs, mirror = _load_data_dir(data_dir)
    dataset = build_dataset(tree, trajs, mirror, augment=args.mirror)
    result = _train_single(dataset, tree, args, w, seed, out_dir)
    return {"w": w, "seed": seed, "dir": str(out_dir),
            "checkpoint": str(Path(out_dir) / "checkpoint_best.npz"),
            "best_epoch": result.best_epoch,
            "best_test_total": result.best_test_total,
            "aborted": result.aborted}


def cmd_train(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, "train_config.json", vars(args))
    if args.sweep:
        ws = _parse_sweep(args.sweep)
        seeds = list(range(args.seeds))
        jobs = [(args.data, vars(args), w, s, str(out / f"w{w:g}_s{s}"))
                for w in ws for s in seeds]
        if args.jobs > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(_sweep_worker, jobs))
        else:
            rows = [_sweep_worker(j) for j in jobs]
        manifest = {"schema": "gaitgen-sweep v1", "runs": rows}
        with open(out / "sweep_manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        bad = [r for r in rows if r["aborted"]]
        print(f"sweep complete: {len(rows)} runs -> {out}/sweep_manifest.json")
        if bad:
            print(f"{len(bad)} runs aborted on non-finite losses", file=sys.stderr)
            return EXIT_NUMERIC
        return EXIT_OK
    tree, trajs, mirror = _load_data_dir(args.data)
    dataset = build_dataset(tree, trajs, mirror, augment=args.mirror)
    result = _train_single(dataset, tree, args, args.w, args.seed, out,
                           resume=args.resume)
    print(f"best epoch {result.best_epoch} test loss {result.best_test_total:.6f}"
          + (" [aborted]" if result.aborted else ""))
    return EXIT_NUMERIC if result.aborted else EXIT_OK


def _default_seed_trajectory(tree, steps_needed):
    params = GaitParams(segments=forward_walk_segments(4.0, 0.20),
                        lead_in=2.4, lead_out=0.02, seed=0)
    return generate_gait(tree, params)


def _rollout_one(checkpoint, args, out_dir):
    predictor, tree, header = load_predictor(checkpoint)
    if tree is None:
        raise FileNotFoundError(f"{checkpoint} carries no kinematic tree")
    if args.seed_traj:
        seed_traj = Trajectory.load(args.seed_traj)
    else:
        seed_traj = _default_seed_trajectory(tree, args.steps)
    gains = CorrectionGains(0.0, 0.0) if args.no_correction \
        else CorrectionGains(args.k0, args.k1)
    if args.waypoints:
        schedule = WaypointSchedule.load(args.waypoints)
    else:
        start = seed_traj.base_position[-1]
        yaw = float(seed_traj.base_rpy[-1, 2])
        schedule = forward_schedule(
            args.steps / 50.0 + float(seed_traj.time[-1]), args.speed,
            float(start[2]), start=(float(start[0]), float(start[1])), yaw=yaw)
    log = rollout(predictor, tree, seed_traj, schedule, gains, args.steps)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log.save(out_dir / "rollout.csv")
    traces = metric_foot_traces(log, tree)
    traces.save(out_dir / "foot_traces.csv")
    slide = metric_foot_slide(log, tree)
    drift = metric_drift(log)
    metrics = {"schema": "gaitgen-rollout-metrics v1",
               "foot_slide": slide.as_dict(), "drift": drift.as_dict(),
               "gains": {"k0": gains.k0, "k1": gains.k1},
               "steps": args.steps, "checkpoint": str(checkpoint)}
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    _write_config(out_dir, "rollout_config.json", vars(args))
    return metrics


def cmd_rollout(args):
    if args.manifest:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        out = Path(args.out)
        for run in manifest["runs"]:
            sub = out / f"w{run['w']:g}_s{run['seed']}"
            metrics = _rollout_one(run["checkpoint"], args, sub)
            print(f"w={run['w']:g} seed={run['seed']}: "
                  f"linear sum {metrics['foot_slide']['linear_sum']:.3f}")
        return EXIT_OK
    if not args.checkpoint:
        raise ValueError("either --checkpoint or --manifest is required")
    metrics = _rollout_one(args.checkpoint, args, args.out)
    print(json.dumps(metrics["foot_slide"], indent=2, sort_keys=True))
    print(f"terminal lateral {metrics['drift']['terminal_lateral']:.4f} m, "
          f"terminal yaw {metrics['drift']['terminal_yaw']:.4f} rad")
    return EXIT_OK


def cmd_eval(args):
    sweep_dir = Path(args.sweep_dir)
    manifest_path = sweep_dir / "sweep_manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no sweep_manifest.json in {sweep_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    rollout_dir = Path(args.rollout_dir)
    runs, missing = [], []
    for run in manifest["runs"]:
        sub = rollout_dir / f"w{run['w']:g}_s{run['seed']}"
        if not (sub / "rollout.csv").exists():
            missing.append(str(sub / "rollout.csv"))
        else:
            runs.append((run, sub))
    if missing or not runs:
        raise FileNotFoundError(
            "missing rollout logs:\n  " + "\n  ".join(missing or ["<all>"]))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, drift_rows, traces_by_label, paths = [], [], {}, []
    seen_w = set()
    for run, sub in runs:
        _, tree, _ = load_predictor(run["checkpoint"])
        log = TrajectoryLog.load(sub / "rollout.csv")
        slide = metric_foot_slide(log, tree)
        drift = metric_drift(log)
        traces = metric_foot_traces(log, tree)
        label = f"w={run['w']:g} seed={run['seed']}"
        rows.append((run["w"], run["seed"], slide.linear_sum, slide.angular_sum,
                     slide.linear_per_second, slide.angular_per_second))
        drift_rows.append((run["w"], run["seed"], drift.terminal_lateral,
                           drift.terminal_yaw, drift.max_lateral))
        traces.save(out / f"foot_traces_w{run['w']:g}_s{run['seed']}.csv")
        if run["w"] not in seen_w:
            seen_w.add(run["w"])
            traces_by_label[label] = traces
            paths.append((label, log.base_position[:, :2], log.desired_position[:, :2]))

    with open(out / "fig4_analog.csv", "w") as fh:
        fh.write("# schema: gaitgen-weight-sweep v1\n")
        fh.write("w,seed,linear_sum,angular_sum,linear_per_second,angular_per_second\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")
    with open(out / "fig4_analog_summary.csv", "w") as fh:
        fh.write("# schema: gaitgen-weight-sweep-summary v1\n")
        fh.write("w,mean_linear,median_linear,mean_angular,median_angular,runs\n")
        for w in sorted({r[0] for r in rows}):
            lin = [r[2] for r in rows if r[0] == w]
            ang = [r[3] for r in rows if r[0] == w]
            fh.write(f"{w:g},{np.mean(lin)!r},{np.median(lin)!r},"
                     f"{np.mean(ang)!r},{np.median(ang)!r},{len(lin)}\n")
    with open(out / "drift_table.csv", "w") as fh:
        fh.write("# schema: gaitgen-drift v1\n")
        fh.write("w,seed,terminal_lateral,terminal_yaw,max_lateral\n")
        for r in drift_rows:
            fh.write(f"{r[0]:g},{r[1]}," + ",".join(repr(float(v)) for v in r[2:]) + "\n")

    figures.weight_sweep_figure(rows, out / "weight_sweep.png")
    figures.foot_heights_figure(traces_by_label, out / "foot_heights.png")
    figures.foot_pitch_figure(traces_by_label, out / "foot_pitch.png")
    figures.drift_paths_figure(paths, out / "drift_paths.png")
    _write_config(out, "eval_config.json", vars(args))
    print(f"evaluated {len(rows)} runs -> {out}")
    return EXIT_OK


def cmd_inspect(args):
    params, config, header, arrays = load_checkpoint(args.checkpoint)
    print(f"checkpoint: {args.checkpoint}")
    print(f"config hash: {header['config_hash']}")
    print(f"joints n={config.n}, experts K={config.experts}, "
          f"gating {config.gating_input_size}->{config.gating_hidden}->{config.experts}, "
          f"prediction {config.input_size}->{config.prediction_hidden}->"
          f"{config.output_size}, seed {config.seed}")
    for name, arr in params.arrays().items():
        print(f"  {name}: {arr.shape}")
    extra = header.get("extra", {})
    for key in ("best_epoch", "best_test", "aborted"):
        if key in extra:
            print(f"{key}: {extra[key]}")
    if "x_mean" in arrays:
        print(f"normalization: x_std [{arrays['x_std'].min():.3g}, "
              f"{arrays['x_std'].max():.3g}], y_std [{arrays['y_std'].min():.3g}, "
              f"{arrays['y_std'].max():.3g}]")
    print("tree: " + ("embedded" if header.get("tree_text") else "absent"))
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="gaitgen",
                     description="Physics-consistent gait generation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[], help="generate synthetic gait data")
    g.add_argument("--out", required=True)
    g.add_argument("--minutes", type=float, default=20.0)
    g.add_argument("--episode-seconds", type=float, default=60.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--profile", choices=("forward", "mixed"), default="mixed")
    g.add_argument("--step-length", type=float, default=0.20)
    g.add_argument("--joints", type=int, default=6)
    g.add_argument("--tree", default=None, help="kinematic model file")
    g.add_argument("--mirror", action="store_true",
                   help="also write mirrored episodes (doubles the data)")
    g.add_argument("--lateral-bias", type=float, default=0.0)
    g.add_argument("--yaw-bias", type=float, default=0.0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train models on generated data")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--w", type=float, default=0.0, help="constraint loss weight")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--weight-decay", type=float, default=1e-2)
    t.add_argument("--test-fraction", type=float, default=0.1)
    t.add_argument("--experts", type=int, default=4)
    t.add_argument("--gating-hidden", type=int, default=16)
    t.add_argument("--prediction-hidden", type=int, default=64)
    t.add_argument("--mirror", action=argparse.BooleanOptionalAction, default=True,
                   help="mirror-augment the dataset (doubles samples)")
    t.add_argument("--sweep", default=None, help="comma list of weights")
    t.add_argument("--seeds", type=int, default=5, help="seeds per sweep weight")
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--resume", action="store_true")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("rollout", help="autoregressive trajectory generation")
    r.add_argument("--checkpoint", default=None)
    r.add_argument("--manifest", default=None, help="sweep manifest to roll out")
    r.add_argument("--out", required=True)
    r.add_argument("--steps", type=int, default=500)
    r.add_argument("--k0", type=float, default=1.0)
    r.add_argument("--k1", type=float, default=1.0)
    r.add_argument("--no-correction", action="store_true")
    r.add_argument("--speed", type=float, default=0.5,
                   help="desired-path advance rate, m/s")
    r.add_argument("--waypoints", default=None, help="waypoint schedule CSV")
    r.add_argument("--seed-traj", default=None,
                   help="trajectory CSV used to seed the history buffer")
    r.set_defaults(func=cmd_rollout)

    e = sub.add_parser("eval", help="aggregate sweep rollouts into reports")
    e.add_argument("--sweep-dir", required=True)
    e.add_argument("--rollout-dir", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="summarize a checkpoint")
    i.add_argument("--checkpoint", required=True)
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"gaitgen: missing input: {err}", file=sys.stderr)
        return EXIT_MISSING
    except NonFiniteGradientError as err:
        print(f"gaitgen: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as err:
        print(f"gaitgen: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"gaitgen: invalid parameters: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
