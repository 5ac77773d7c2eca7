"""Command-line entry point.

Subcommands: train, eval, gradcheck, regime-map, stats, bin-data.
Exit codes: 0 success, 1 runtime failure (including a failed gradient
check), 2 invalid configuration or input.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from adsnn import analysis, data, gradcheck as gc
from adsnn.network import load_checkpoint
from adsnn.run import ConfigError, build_run_config, run_training
from adsnn.training import evaluate

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adsnn",
        description="Train and analyse spiking networks with adaptive "
                    "neurons and trainable synaptic delays.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a full training loop")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--preset", choices=("shd", "ssc", "gsc"),
                   help="hyperparameter preset")
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override any config key")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))

    p = sub.add_parser("gradcheck",
                       help="verify the backward pass against finite differences")
    p.add_argument("--seeds", type=int, default=20, help="number of random nets")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--inputs", type=int, default=6)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--timesteps", type=int, default=12)
    p.add_argument("--tol", type=float, default=gc.DEFAULT_TOL)

    p = sub.add_parser("regime-map",
                       help="spike-count map over the adaptation parameters")
    p.add_argument("--spec", help="TOML spec file (default: canonical)")
    p.add_argument("--out", default="regime_map.csv", help="output CSV path")

    p = sub.add_parser("stats",
                       help="spike statistics and parameter distributions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--split", default="train", choices=("train", "valid", "test"))
    p.add_argument("--out", default="stats", help="output directory")

    p = sub.add_parser("bin-data", help="bin an event file into a tensor file")
    p.add_argument("--events", required=True, help="input event file")
    p.add_argument("--out", required=True, help="output .snnb path")
    p.add_argument("--channel-factor", type=int, default=5)
    p.add_argument("--bin-width", type=float, default=0.01)
    p.add_argument("--timesteps", type=int, default=100)
    p.add_argument("--binarize", action="store_true",
                   help="saturate bins at 1 instead of keeping counts")
    return parser


def cmd_train(args) -> int:
    overrides = list(args.overrides)
    if args.data:
        overrides.append(f"data={args.data}")
    if args.out:
        overrides.append(f"out_dir={args.out}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    run = build_run_config(args.config, args.preset, overrides)
    summary = run_training(run)
    print(f"done: best valid accuracy {summary.get('best_valid_accuracy', 0):.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    manifest = data.load_manifest(args.data)
    values, labels = data.load_split(manifest, args.split)
    metrics = evaluate(model, values, labels)
    print(f"{args.split} accuracy: {metrics['accuracy']:.4f} "
          f"(loss {metrics['loss']:.4f}, "
          f"{metrics['spikes_per_neuron']:.2f} spikes/neuron)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seeds = range(args.base_seed, args.base_seed + args.seeds)
    worst, passed = gc.gradcheck_many(
        seeds, tol=args.tol, num_inputs=args.inputs, num_hidden=args.hidden,
        num_classes=args.classes, num_timesteps=args.timesteps)
    for name in gc.PARAM_CLASSES:
        status = "ok" if worst[name] < args.tol else "FAIL"
        print(f"{name:8s} max err {worst[name]:.3e}  {status}")
    print("gradcheck " + ("passed" if passed else "FAILED"))
    return EXIT_OK if passed else EXIT_RUNTIME


def cmd_regime_map(args) -> int:
    spec = (analysis.RegimeMapSpec.from_toml(args.spec) if args.spec
            else analysis.RegimeMapSpec())
    a_values, b_values, counts = analysis.regime_map(spec)
    analysis.write_regime_csv(args.out, a_values, b_values, counts)
    print(f"wrote {counts.size} grid points to {args.out} "
          f"(max count {int(counts.max())})")
    return EXIT_OK


def cmd_stats(args) -> int:
    model = load_checkpoint(args.checkpoint)
    manifest = data.load_manifest(args.data)
    values, _ = data.load_split(manifest, args.split)
    stats = analysis.spike_stats(model, values)
    os.makedirs(args.out, exist_ok=True)
    analysis.write_spike_stats_csv(os.path.join(args.out, "spike_stats.csv"), stats)
    analysis.export_distributions(model, args.out)
    per = stats.spikes_per_neuron
    print(f"spikes/neuron: hidden1 {per[0]:.2f}, hidden2 {per[1]:.2f} "
          f"(exports in {args.out})")
    return EXIT_OK


def cmd_bin_data(args) -> int:
    events = data.parse_events(args.events)
    manifest = data.DatasetManifest(
        train=args.events, num_classes=events.num_classes,
        raw_channels=events.raw_channels, channel_factor=args.channel_factor,
        bin_width=args.bin_width, timesteps=args.timesteps)
    values, labels = data.bin_events(events, manifest, binarize=args.binarize)
    data.save_binned(args.out, values, labels)
    print(f"wrote {len(values)} samples "
          f"({manifest.timesteps}x{manifest.channels}) to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "regime-map": cmd_regime_map,
    "stats": cmd_stats,
    "bin-data": cmd_bin_data,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, data.DataFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except (FloatingPointError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
