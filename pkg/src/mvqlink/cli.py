"""Command-line surface: train a codebook bank, build distortion tables,
compute transmission plans and lookup tables, run SNR sweeps and verify BER
targets. Every subcommand accepts --config with a flat key=value file; any
flag given on the command line overrides its config key."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .allocator import LinkBudget, build_lut, load_lut, save_lut
from .dataset import SynthSpec, read_dataset, synthesize, write_dataset
from .distortion import build_table, load_table, save_table
from .simulate import SweepConfig, save_report, sweep, verify_ber
from .training import TrainConfig, train_sequential
from .vq import load_bank, save_bank


def read_config(path) -> dict[str, str]:
    """Flat key=value text file; blank lines and #-comments are ignored."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _merge(args: argparse.Namespace, sub: argparse.ArgumentParser) -> argparse.Namespace:
    """Fill argument defaults from the config file; explicit flags win."""
    config_path = getattr(args, "config", None)
    if not config_path:
        return args
    cfg = read_config(config_path)
    for key, raw in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest == "config":
            continue
        default = sub.get_default(dest)
        if getattr(args, dest) != default:
            continue  # explicitly set on the command line
        if isinstance(default, bool):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int) and not isinstance(default, bool):
            value = int(raw)
        elif isinstance(default, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, dest, value)
    return args


def _load_features(args) -> tuple[np.ndarray, int, int]:
    if args.dataset:
        return read_dataset(args.dataset)
    spec = SynthSpec(args.synth_n, args.synth_d, args.synth_count,
                     kind=args.synth_kind, seed=args.seed)
    return synthesize(spec), spec.n_subvectors, spec.subvector_dim


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default="", help="flat key=value config file")
    sub.add_argument("--seed", type=int, default=0, help="master random seed")


def _add_dataset_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--dataset", default="", help="feature corpus file")
    sub.add_argument("--synth-n", type=int, default=16, help="synthetic sub-vector count")
    sub.add_argument("--synth-d", type=int, default=4, help="synthetic sub-vector dimension")
    sub.add_argument("--synth-count", type=int, default=2000, help="synthetic corpus size")
    sub.add_argument("--synth-kind", default="gaussian", choices=("gaussian", "mixture"))


def _add_budget_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--p-tot", type=float, default=0.0, help="total power budget")
    sub.add_argument("--snr-db", type=float, default=None,
                     help="normalized SNR; alternative way to set the budget")
    sub.add_argument("--rate", type=int, default=4, help="bits per symbol R")
    sub.add_argument("--m-max", type=int, default=6, help="largest modulation order")


def _budget(args, n_bits: int) -> LinkBudget:
    p_tot = args.p_tot
    if args.snr_db is not None:
        p_tot = n_bits * 10.0 ** (args.snr_db / 10.0)
    if p_tot <= 0:
        raise SystemExit("either --p-tot > 0 or --snr-db is required")
    return LinkBudget(p_tot, args.rate, args.m_max, n_bits)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="mvqlink",
        description="Multi-codebook vector quantization link toolkit",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="train a codebook bank from a feature corpus")
    _add_common(p)
    _add_dataset_args(p)
    p.add_argument("--bank", required=True, help="output bank JSON")
    p.add_argument("--log", default="", help="optional training log CSV")
    p.add_argument("--n-codebooks", type=int, default=5)
    p.add_argument("--index-bits", type=int, default=9)
    p.add_argument("--subvector-dim", type=int, default=4)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--init", default="splitting", choices=("splitting", "random-sample"))
    p.add_argument("--profile-mode", default="fixed", choices=("fixed", "refined"))
    p.add_argument("--save-dataset", default="", help="also persist the features used")

    p = subs.add_parser("table", help="build the distortion table for a bank")
    _add_common(p)
    _add_dataset_args(p)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True, help="output distortion CSV")

    p = subs.add_parser("plan", help="compute one transmission plan")
    _add_common(p)
    _add_budget_args(p)
    p.add_argument("--bank", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True, help="output plan JSON")
    p.add_argument("--method", default="jcamp", choices=("jcamp", "jcap", "baseline"))
    p.add_argument("--gamma", type=float, default=None,
                   help="channel gain-to-noise ratio; derived from --snr-db if omitted")

    p = subs.add_parser("lut", help="precompute a quantized-SNR plan lookup table")
    _add_common(p)
    _add_budget_args(p)
    p.add_argument("--bank", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True, help="output lookup JSON")
    p.add_argument("--method", default="jcamp", choices=("jcamp", "jcap", "baseline"))
    p.add_argument("--lo-db", type=float, default=0.77)
    p.add_argument("--hi-db", type=float, default=11.01)
    p.add_argument("--bits", type=int, default=8)

    p = subs.add_parser("sweep", help="Monte Carlo SNR sweep to a report CSV")
    _add_common(p)
    p.add_argument("--bank", default="")
    p.add_argument("--table", default="")
    p.add_argument("--dataset", default="")
    p.add_argument("--lut", default="", help="lookup JSON, required when method=lut")
    p.add_argument("--out", required=True, help="output report CSV")
    p.add_argument("--snr-grid", default="0,2,4,6,8,10,12",
                   help="comma-separated SNR grid in dB")
    p.add_argument("--channel", default="rayleigh", choices=("awgn", "rayleigh"))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--method", default="jcamp", choices=("jcamp", "jcap", "baseline", "lut"))
    p.add_argument("--rate", type=int, default=4)
    p.add_argument("--m-max", type=int, default=6)

    p = subs.add_parser("verify-ber", help="empirical vs target BER per symbol group")
    _add_common(p)
    _add_budget_args(p)
    p.add_argument("--bank", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out", default="", help="output CSV; stdout when omitted")
    p.add_argument("--method", default="jcamp", choices=("jcamp", "jcap", "baseline"))
    p.add_argument("--gammas", default="1.0", help="comma-separated gamma values")
    p.add_argument("--min-bits", type=int, default=10**6, help="bits per symbol group")
    return parser, dict(subs.choices)


def _cmd_train(args) -> int:
    data, n_sub, dim = _load_features(args)
    if dim != args.subvector_dim:
        raise SystemExit(
            f"dataset sub-vector dimension {dim} does not match --subvector-dim {args.subvector_dim}"
        )
    config = TrainConfig(
        n_codebooks=args.n_codebooks,
        subvector_dim=dim,
        index_bits=args.index_bits,
        n_subvectors=n_sub,
        max_iters=args.max_iters,
        convergence_tol=args.tol,
        init=args.init,
        profile_mode=args.profile_mode,
        master_seed=args.seed,
    )
    history: list = []
    bank = train_sequential(data, config, history)
    save_bank(args.bank, bank)
    if args.log:
        with open(args.log, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "iteration", "objective"])
            writer.writerows(history)
    if args.save_dataset:
        write_dataset(args.save_dataset, data, n_sub, dim)
    print(f"wrote bank with V={bank.V}, N={bank.N}, D={bank.D}, B={bank.B} to {args.bank}")
    return 0


def _cmd_table(args) -> int:
    bank = load_bank(args.bank)
    data, n_sub, dim = _load_features(args)
    if (n_sub, dim) != (bank.N, bank.D):
        raise SystemExit(
            f"dataset dimensions ({n_sub}, {dim}) do not match bank ({bank.N}, {bank.D})"
        )
    table = build_table(data, bank)
    save_table(args.out, table)
    print(f"wrote {bank.V}x{bank.N} distortion table to {args.out}")
    return 0


def _cmd_plan(args) -> int:
    from .allocator import PLAN_METHODS

    bank = load_bank(args.bank)
    table = load_table(args.table)
    budget = _budget(args, bank.N * bank.B)
    gamma = args.gamma
    if gamma is None:
        if args.snr_db is None:
            raise SystemExit("either --gamma or --snr-db is required")
        gamma = 1.0  # budget already encodes the SNR; mean channel gain is 1
    plan = PLAN_METHODS[args.method](table, bank, gamma, budget)
    with open(args.out, "w") as fh:
        json.dump(plan.to_dict(), fh)
    print(
        f"wrote {args.method} plan: {len(plan.symbols)} symbols, "
        f"total power {plan.total_power:.6g}, scaled={plan.scaled}"
    )
    return 0


def _cmd_lut(args) -> int:
    bank = load_bank(args.bank)
    table = load_table(args.table)
    budget = _budget(args, bank.N * bank.B)
    lut = build_lut(table, bank, budget, args.lo_db, args.hi_db, args.bits, args.method)
    save_lut(args.out, lut)
    print(f"wrote {1 << args.bits}-entry lookup table to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    config = SweepConfig(
        snr_db_grid=tuple(float(x) for x in args.snr_grid.split(",")),
        channel=args.channel,
        trials_per_point=args.trials,
        method=args.method,
        master_seed=args.seed,
        rate=args.rate,
        m_max=args.m_max,
        bank_path=args.bank,
        table_path=args.table,
        dataset_path=args.dataset,
        lut_path=args.lut,
    )
    lut = load_lut(args.lut) if args.lut else None
    report = sweep(config, lut=lut)
    save_report(args.out, report)
    print(f"wrote sweep report over {len(config.snr_db_grid)} points to {args.out}")
    return 0


def _cmd_verify_ber(args) -> int:
    bank = load_bank(args.bank)
    table = load_table(args.table)
    budget = _budget(args, bank.N * bank.B)
    gammas = [float(x) for x in args.gammas.split(",")]
    rows = verify_ber(bank, table, budget, gammas, method=args.method,
                      min_bits_per_group=args.min_bits, seed=args.seed)
    header = ["gamma", "group", "m", "target_ber", "empirical_ber", "bits"]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows([row[k] for k in header] for row in rows)
        print(f"wrote {len(rows)} BER comparisons to {args.out}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows([row[k] for k in header] for row in rows)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "table": _cmd_table,
    "plan": _cmd_plan,
    "lut": _cmd_lut,
    "sweep": _cmd_sweep,
    "verify-ber": _cmd_verify_ber,
}


def main(argv=None) -> int:
    parser, subcommands = build_parser()
    args = parser.parse_args(argv)
    args = _merge(args, subcommands[args.command])
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
