"""Command-line front end: generate data, run streams, evaluate, reproduce.

Every run is driven by a JSON config file plus a handful of override flags;
all randomness flows from the seed.  Exit status is 0 only when every
requested output file was written.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import StreamHmmError
from .experiments import DEFAULT_SEEDS, REPRODUCIBLE, reproduce, write_table
from .io import (
    read_features_csv,
    read_labels_csv,
    write_features_csv,
    write_labels_csv,
)
from .metrics import evaluate, render_strip
from .rates import RateConfig
from .runner import BatchPlan, run_online
from .state import HdpHyperparams, LabeledSequence
from .synth import SynthConfig, gen_combined, gen_newclass, gen_shifting, gen_stationary

_GENERATORS = {
    "stationary": gen_stationary,
    "shifting": gen_shifting,
    "newclass": gen_newclass,
    "combined": gen_combined,
}

_GEN_KEYS = {"regime", "means", "sigma", "trans_conc", "n_frames", "drift",
             "new_mean", "onset", "seed"}
_RUN_KEYS = {"n_states", "gamma", "alpha", "kappa", "batch_size", "sweeps",
             "burn_in", "bootstrap_sweeps", "tau", "scale_stat", "rate_shape",
             "rate_rate", "seed"}


class CliError(StreamHmmError):
    pass


def _load_config(path, allowed: set, what: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliError(f"config {path} must be a JSON object")
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise CliError(f"unknown {what} config keys {unknown}; allowed: {sorted(allowed)}")
    return cfg


def _out_dir(arg) -> Path:
    out = Path(arg)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pick_seed(args, cfg: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    return int(cfg.get("seed", 0))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _load_config(args.config, _GEN_KEYS, "gen")
    regime = cfg.get("regime", "stationary")
    if regime not in _GENERATORS:
        raise CliError(f"unknown regime {regime!r}; pick one of {sorted(_GENERATORS)}")
    synth_kwargs = {k: v for k, v in cfg.items() if k not in ("regime", "seed")}
    seq = _GENERATORS[regime](SynthConfig(**synth_kwargs),
                              np.random.default_rng(_pick_seed(args, cfg)))
    out = _out_dir(args.out)
    write_features_csv(out / "features.csv", seq.features)
    write_labels_csv(out / "labels.csv", seq.labels)
    print(f"wrote {out / 'features.csv'} and {out / 'labels.csv'} "
          f"({len(seq)} frames, {len(np.unique(seq.labels))} classes)")
    return 0


def _run_config(args) -> tuple[HdpHyperparams, BatchPlan, RateConfig, int]:
    cfg = _load_config(args.config, _RUN_KEYS, "run") if args.config else {}
    hyper = HdpHyperparams(
        gamma=cfg.get("gamma", 1.0), alpha=cfg.get("alpha", 2.0),
        kappa=cfg.get("kappa", 2.0), n_states=cfg.get("n_states", 20),
    )
    batch_size = cfg.get("batch_size", 16)
    if args.batch_size is not None:
        batch_size = args.batch_size
    if args.offline:
        batch_size = None
    plan = BatchPlan(
        batch_size=batch_size, sweeps=cfg.get("sweeps", 1000),
        burn_in=cfg.get("burn_in", 500),
        bootstrap_sweeps=cfg.get("bootstrap_sweeps", 200),
    )
    tau = args.tau if args.tau is not None else cfg.get("tau", "adaptive")
    if tau not in ("adaptive", "fixed"):
        raise CliError(f"tau must be 'adaptive' or 'fixed', got {tau!r}")
    rate_config = RateConfig(
        adapt=(tau == "adaptive"), scale_stat=cfg.get("scale_stat", "eigen"),
        prior_shape=cfg.get("rate_shape", 2.0), prior_rate=cfg.get("rate_rate", 2.0),
    )
    return hyper, plan, rate_config, _pick_seed(args, cfg)


def cmd_run(args) -> int:
    hyper, plan, rate_config, seed = _run_config(args)
    bootstrap = []
    for feat_path, label_path in args.bootstrap:
        bootstrap.append(LabeledSequence(read_features_csv(feat_path),
                                         read_labels_csv(label_path)))
    out = _out_dir(args.out)
    trace_path = out / "trace.csv" if args.trace else None
    result = run_online(bootstrap, args.stream, hyper, plan, rate_config,
                        np.random.default_rng(seed), trace_path)
    write_labels_csv(out / "decoded.csv", result.labels)
    with open(out / "diagnostics.csv", "w") as fh:
        fh.write("batch,n_frames,mean_loglik,applied_tau_mu,applied_tau_sigma,"
                 "applied_tau_beta,applied_tau_pi,n_active_states\n")
        for diag in result.diagnostics:
            kept = diag.logliks[plan.burn_in:]
            mean_ll = float(np.mean(kept)) if kept.size else float("nan")
            r = diag.applied_rates
            fh.write(f"{diag.index},{diag.n_frames},{mean_ll!r},"
                     f"{r['tau_mu']!r},{r['tau_sigma']!r},{r['tau_beta']!r},"
                     f"{r['tau_pi']!r},{diag.decoded_states.size}\n")
    result.state.save(out / "model.snapshot")
    written = ["decoded.csv", "diagnostics.csv", "model.snapshot"]
    if args.trace:
        written.append("trace.csv")
    if args.truth is not None:
        truth = read_labels_csv(args.truth)
        report = evaluate(result.labels, truth)
        (out / "report.txt").write_text(report.to_text())
        (out / "report.csv").write_text(report.csv_header() + "\n" + report.csv_row() + "\n")
        render_strip(result.labels, truth, report.matching, out / "strip.svg")
        written += ["report.txt", "report.csv", "strip.svg"]
    print(f"wrote {', '.join(written)} in {out} "
          f"({len(result.labels)} frames, {len(result.diagnostics)} batches)")
    return 0


def cmd_eval(args) -> int:
    decoded = read_labels_csv(args.decoded)
    truth = read_labels_csv(args.truth)
    report = evaluate(decoded, truth)
    out = _out_dir(args.out)
    (out / "report.txt").write_text(report.to_text())
    (out / "report.csv").write_text(report.csv_header() + "\n" + report.csv_row() + "\n")
    render_strip(decoded, truth, report.matching, out / "strip.svg")
    print(report.to_text(), end="")
    print(f"wrote report.txt, report.csv, strip.svg in {out}")
    return 0


def cmd_reproduce(args) -> int:
    names = list(dict.fromkeys(args.experiments)) if args.experiments else list(REPRODUCIBLE)
    if args.tau == "adaptive":
        modes = ("ada",)
    elif args.tau == "fixed":
        modes = ("fixed",)
    else:
        modes = ("ada", "fixed")
    plan_kwargs = {}
    if args.sweeps is not None:
        plan_kwargs["sweeps"] = args.sweeps
    if args.burn_in is not None:
        plan_kwargs["burn_in"] = args.burn_in
    if args.batch_size is not None:
        plan_kwargs["batch_size"] = args.batch_size
    seeds = args.seeds if args.seeds else list(DEFAULT_SEEDS)
    _, rows = reproduce(names, modes, seeds, jobs=args.jobs,
                        plan_kwargs=plan_kwargs or None)
    out = _out_dir(args.out)
    write_table(rows, out / "table.csv")
    for row in rows:
        print(f"{row['experiment']:>18} tau={row['tau']:<6} "
              f"acc={row['frame_accuracy']:.3f} rec={row['boundary_recall']:.3f} "
              f"prec={row['boundary_precision']:.3f} card={row['cardinality']:.2f}")
    print(f"wrote {out / 'table.csv'}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamhmm",
        description="Online segmentation and classification of streaming sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic labeled sequence")
    p_gen.add_argument("--config", required=True, help="JSON generator config")
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=cmd_gen)

    p_run = sub.add_parser("run", help="bootstrap, then decode a stream online")
    p_run.add_argument("--config", default=None, help="JSON run config")
    p_run.add_argument("--bootstrap", nargs=2, action="append", required=True,
                       metavar=("FEATURES", "LABELS"),
                       help="labeled bootstrap sequence (repeatable)")
    p_run.add_argument("--stream", required=True, help="feature CSV to decode")
    p_run.add_argument("--truth", default=None,
                       help="label CSV; adds report and strip outputs")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--tau", choices=("adaptive", "fixed"), default=None)
    p_run.add_argument("--batch-size", type=int, default=None)
    p_run.add_argument("--offline", action="store_true",
                       help="single batch spanning the whole stream")
    p_run.add_argument("--trace", action="store_true",
                       help="write the per-sweep diagnostics CSV")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score a decoded labeling against truth")
    p_eval.add_argument("decoded", help="decoded label CSV")
    p_eval.add_argument("truth", help="ground-truth label CSV")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_rep = sub.add_parser("reproduce", help="rerun the synthetic result table")
    p_rep.add_argument("experiments", nargs="*",
                       help=f"subset of {list(REPRODUCIBLE)} (default: all)")
    p_rep.add_argument("--seeds", type=int, nargs="+", default=None)
    p_rep.add_argument("--tau", choices=("adaptive", "fixed", "both"), default="both")
    p_rep.add_argument("--jobs", type=int, default=1)
    p_rep.add_argument("--sweeps", type=int, default=None)
    p_rep.add_argument("--burn-in", type=int, default=None, dest="burn_in")
    p_rep.add_argument("--batch-size", type=int, default=None)
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StreamHmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
