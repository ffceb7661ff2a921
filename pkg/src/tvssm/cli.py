"""Command-line entry points for dataset generation, training, and grids."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import datagen, experiments, network as net, serialize, training

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvssm",
                                     description="Time-varying deep SSM experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset file")
    p.add_argument("--task", choices=("four_mode", "denoise"), required=True)
    p.add_argument("--out", required=True, help="output dataset file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--data-code", default="ooo", help="four_mode switch code, e.g. oxx")
    p.add_argument("--fixed-modes", default="1,1,1",
                   help="mode indices for non-switching roles, e.g. 1,2,3")
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--seq-len", type=int, default=128)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-val", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--snr-db", type=float, default=5.0)
    p.add_argument("--clean-source", default="synthetic",
                   help="'synthetic' or a path to 16-bit mono wav file(s)")

    p = sub.add_parser("train", help="run one experiment config")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--n-seeds", type=int, default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("grid", help="reproduce one of the experiment grids")
    p.add_argument("--name", choices=("table1", "table4", "table5"), required=True)
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-seeds", type=int, default=None)

    p = sub.add_parser("audit", help="parameter and MAC accounting for a config")
    p.add_argument("--config", required=True)

    p = sub.add_parser("fd-check", help="finite-difference gradient check")
    p.add_argument("--h", type=int, default=2)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--t", type=int, default=8)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--activation", choices=net.ACTIVATIONS, default="gelu")
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="aggregate results under a directory")
    p.add_argument("--results", required=True)
    return parser


def _cmd_gen_data(args) -> int:
    if args.task == "four_mode":
        fixed = tuple(int(x) for x in args.fixed_modes.split(","))
        switch = datagen.SwitchConfig.from_code(args.data_code, fixed)
        ds = datagen.build_four_mode_dataset(switch, n_samples=args.n_samples,
                                             n=args.seq_len, seed=args.seed)
    else:
        ds = datagen.build_denoise_dataset(
            n_train=args.n_train, n_val=args.n_val, n_test=args.n_test,
            seed=args.seed, snr_db=args.snr_db, clean_source=args.clean_source)
    serialize.dataset_save(args.out, ds)
    print(f"wrote {ds.n_samples} samples to {args.out} "
          f"(splits: {', '.join(f'{k}={hi - lo}' for k, (lo, hi) in ds.splits.items())})")
    return 0


def _cmd_train(args) -> int:
    cfg = experiments.ExperimentConfig.from_json(Path(args.config).read_text())
    if args.seed is not None:
        cfg = experiments.replace(cfg, seed=args.seed)
    if args.n_seeds is not None:
        cfg = experiments.replace(cfg, n_seeds=args.n_seeds)
    report, _ = experiments.run_experiment(cfg, out_dir=args.out)
    print(f"{cfg.run_id()}: mse={report.mse_mean:.4e} +- {report.mse_std:.1e}, "
          f"si_snr={report.si_snr_db_mean:.2f} +- {report.si_snr_db_std:.2f} dB "
          f"({report.n_seeds} seeds)")
    return 0


def _cmd_eval(args) -> int:
    params = serialize.checkpoint_load(args.checkpoint)
    ds = serialize.dataset_load(args.data)
    if ds.provenance.get("task") == "denoise":
        row = experiments.evaluate_denoise(params, ds, split=args.split)
    else:
        row = experiments.evaluate_four_mode(params, ds, split=args.split)
    print(f"split={args.split} mse={row['mse']:.6e} snr_db={row['snr_db']:.3f} "
          f"si_snr_db={row['si_snr_db']:.3f}")
    return 0


def _cmd_grid(args) -> int:
    cells = experiments.reproduce_grid(args.name, args.scale, args.out,
                                       seed=args.seed, n_seeds=args.n_seeds)
    print(f"{args.name} ({args.scale}): {len(cells)} cells written under {args.out}")
    return 0


def _cmd_audit(args) -> int:
    cfg = experiments.ExperimentConfig.from_json(Path(args.config).read_text())
    spec = cfg.network_spec()
    pc = net.count_parameters(spec)
    mc = net.count_macs(spec, spec.t)
    print("trainable parameters")
    for name, count in pc.items:
        print(f"  {name:<24s} {count:>10d}")
    print(f"  {'total':<24s} {pc.total:>10d}")
    for li, p in enumerate(pc.per_neuron):
        print(f"  per-neuron (layer {li}): {p}")
    print(f"inference MACs over t={spec.t}")
    for name, count in mc.items:
        print(f"  {name:<24s} {count:>10d}")
    print(f"  {'total':<24s} {mc.total:>10d}")
    return 0


def _cmd_fd_check(args) -> int:
    layer = net.LayerSpec(h=args.h, n=args.n, k_a=args.k, k_b=args.k, k_c=args.k,
                          tv_a=True, tv_b=True, tv_c=True, activation=args.activation)
    spec = net.NetworkSpec(1, 1, (layer,) * args.layers, t=args.t)
    rng = np.random.default_rng(args.seed)
    params = net.init_network(spec, rng)
    inputs = rng.standard_normal((args.batch, 1, args.t))
    targets = rng.standard_normal((args.batch, 1, args.t))
    report = training.fd_check(params, inputs, targets,
                               step=args.step, tolerance=args.tolerance)
    print(report.summary())
    print("PASS" if report.ok else "FAIL")
    return 0 if report.ok else 1


def _cmd_report(args) -> int:
    print(experiments.emit_report(args.results))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "gen-data": _cmd_gen_data,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "grid": _cmd_grid,
        "audit": _cmd_audit,
        "fd-check": _cmd_fd_check,
        "report": _cmd_report,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
