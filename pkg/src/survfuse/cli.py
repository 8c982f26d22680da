"""Command-line interface.

Commands: synth, train, cv, ablate, eval, plot-km, plot-gates,
export-embeddings, gradcheck.  Exit codes: 0 success, 2 usage/validation
error, 1 internal error.  ``--config`` points at a key=value text file whose
entries provide defaults; explicit flags override it.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields, replace

import numpy as np
import torch

from . import plots, survival
from .data import SynthConfig, assign_time_bins, generate_synthetic_cohort, load_cohort, save_cohort
from .errors import ConfigurationError, DataError, SchemaError, SurvfuseError, UndefinedMetricError
from .pipeline import ABLATIONS, TrainConfig, build_model
from .stats import RiskRecord, kaplan_meier, logrank_test, stratify_by_median
from .train import (
    CvResult,
    cross_validate,
    gradient_check,
    load_checkpoint,
    predict_risks,
    run_ablation,
    save_checkpoint,
    train_model,
)

METRIC_COLUMNS = ["fold", "c_index", "chi2", "p", "variant", "seed"]


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _coerce(value: str, target_type):
    if target_type is bool:
        return value.lower() in ("1", "true", "yes")
    if target_type is tuple:
        return tuple(int(v) for v in value.split(",") if v)
    return target_type(value)


_TRAIN_FIELD_TYPES = {
    "c0": int, "c1": int, "c2": int, "n_bins": int, "n_experts": int,
    "segment_set": tuple, "alpha": float, "learning_rate": float,
    "weight_decay": float, "epochs": int, "batch_size": int, "seed": int,
    "distance_metric": str, "ablation": str, "rca_scale_logits": bool,
    "eval_segment": int,
}

_SYNTH_FIELD_TYPES = {
    "n_patients": int, "k_shared": int, "k_spec": int, "i1": int, "i2": int,
    "c0": int, "w_shared": float, "w_spec1": float, "w_spec2": float,
    "w_interact": float, "noise_sigma": float, "censor_horizon": float,
    "seed": int,
}


def _build_train_config(args, file_values: dict[str, str]) -> TrainConfig:
    cfg = TrainConfig()
    for f in fields(TrainConfig):
        if f.name in file_values:
            cfg = replace(cfg, **{f.name: _coerce(file_values[f.name], _TRAIN_FIELD_TYPES[f.name])})
        flag = getattr(args, f.name, None)
        if flag is not None:
            cfg = replace(cfg, **{f.name: flag})
    return cfg


def _build_synth_config(args, file_values: dict[str, str]) -> SynthConfig:
    cfg = SynthConfig()
    for f in fields(SynthConfig):
        if f.name in file_values:
            cfg = replace(cfg, **{f.name: _coerce(file_values[f.name], _SYNTH_FIELD_TYPES[f.name])})
        flag = getattr(args, f.name, None)
        if flag is not None:
            cfg = replace(cfg, **{f.name: flag})
    return cfg


def _write_metrics_csv(path: str, result: CvResult) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRIC_COLUMNS)
        for m in result.folds:
            writer.writerow(
                [
                    m.fold,
                    "" if m.c_index is None else repr(m.c_index),
                    "" if m.chi2 is None else repr(m.chi2),
                    "" if m.p is None else repr(m.p),
                    result.variant,
                    result.seed,
                ]
            )


def _summary_line(result: CvResult) -> str:
    if result.mean_c_index is None:
        return f"[{result.variant}] C-index undefined (all folds flagged)"
    return (
        f"[{result.variant}] C-index "
        f"{result.mean_c_index:.3f} ± {result.std_c_index:.3f}"
    )


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    file_values = _read_config_file(args.config) if args.config else {}
    cfg = _build_synth_config(args, file_values)
    cohort = generate_synthetic_cohort(cfg)
    cohort = assign_time_bins(cohort, args.bins)
    save_cohort(cohort, args.out)
    rate = cohort.events().mean()
    edges = ", ".join(f"{e:.4f}" for e in cohort.bin_edges)
    print(f"patients: {len(cohort)}")
    print(f"event rate: {rate:.4f}")
    print(f"bin edges: [{edges}]")
    return 0


def cmd_train(args) -> int:
    file_values = _read_config_file(args.config) if args.config else {}
    cfg = _build_train_config(args, file_values)
    cohort = load_cohort(args.cohort)
    if cohort.token_dim != cfg.c0:
        cfg = replace(cfg, c0=cohort.token_dim)
    model, history = train_model(cohort, cfg)
    save_checkpoint(model, args.out)
    if args.history:
        with open(args.history, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "surv_loss", "dis_loss", "total_loss"])
            for row in history.rows():
                writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
    print(f"final loss: {history.total_loss[-1]:.6f}")
    return 0


def _cv_common(args) -> CvResult:
    file_values = _read_config_file(args.config) if args.config else {}
    cfg = _build_train_config(args, file_values)
    cohort = load_cohort(args.cohort)
    if cohort.token_dim != cfg.c0:
        cfg = replace(cfg, c0=cohort.token_dim)
    variant = getattr(args, "ablate", None)
    if variant:
        return run_ablation(cohort, variant.replace("-", "_"), cfg, k=args.k)
    return cross_validate(cohort, args.k, cfg)


def cmd_cv(args) -> int:
    result = _cv_common(args)
    if args.metrics_out:
        _write_metrics_csv(args.metrics_out, result)
    for m in result.folds:
        if m.flagged:
            print(f"warning: fold {m.fold} had no comparable pairs", file=sys.stderr)
    print(_summary_line(result))
    return 0


def cmd_ablate(args) -> int:
    file_values = _read_config_file(args.config) if args.config else {}
    cfg = _build_train_config(args, file_values)
    cohort = load_cohort(args.cohort)
    if cohort.token_dim != cfg.c0:
        cfg = replace(cfg, c0=cohort.token_dim)
    variants = ["full", "no_explore", "no_rca", "no_rfr", "no_moe"]
    rows = []
    for variant in variants:
        result = run_ablation(cohort, variant, cfg, k=args.k)
        rows.append(result)
        print(_summary_line(result))
    if args.metrics_out:
        with open(args.metrics_out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["variant", "mean_c_index", "std_c_index", "seed"])
            for r in rows:
                writer.writerow(
                    [
                        r.variant,
                        "" if r.mean_c_index is None else repr(r.mean_c_index),
                        "" if r.std_c_index is None else repr(r.std_c_index),
                        r.seed,
                    ]
                )
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    cohort = load_cohort(args.cohort)
    if cohort.token_dim != model.cfg.c0:
        raise ConfigurationError(
            f"cohort token dim {cohort.token_dim} does not match checkpoint c0 {model.cfg.c0}"
        )
    risks = predict_risks(model, cohort)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "risk", "time", "event"])
        for p, r in zip(cohort.patients, risks):
            writer.writerow([p.id, repr(float(r)), repr(p.time), p.event])
    from .stats import concordance_index

    c = concordance_index(risks, cohort.times(), cohort.events())
    print(f"C-index {c:.3f}")
    return 0


def _read_risk_csv(path: str) -> list[RiskRecord]:
    records = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            records.append(
                RiskRecord(risk=float(row["risk"]), time=float(row["time"]), event=int(row["event"]))
            )
    if not records:
        raise DataError(f"{path}: no records")
    return records


def cmd_plot_km(args) -> int:
    records = _read_risk_csv(args.risks)
    high, low = stratify_by_median(records)

    def arr(group, attr):
        return np.array([getattr(r, attr) for r in group])

    km_low = kaplan_meier(arr(low, "time"), arr(low, "event"))
    km_high = kaplan_meier(arr(high, "time"), arr(high, "event"))
    res = logrank_test(arr(low, "time"), arr(low, "event"), arr(high, "time"), arr(high, "event"))
    with open(args.out, "w") as f:
        f.write(plots.km_svg(km_low, km_high, res.p))
    if args.curves_out:
        with open(args.curves_out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["group", "time", "survival", "at_risk"])
            for name, curve in (("low", km_low), ("high", km_high)):
                for t, s, n in zip(curve.times, curve.survival, curve.at_risk):
                    writer.writerow([name, repr(float(t)), repr(float(s)), int(n)])
    print(f"log-rank p = {res.p:.4g}")
    return 0


def cmd_plot_gates(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if model.cfg.ablation == "no_moe":
        raise ConfigurationError("checkpoint was trained without the MoE module; no gate weights")
    cohort = load_cohort(args.cohort)
    if cohort.token_dim != model.cfg.c0:
        raise ConfigurationError(
            f"cohort token dim {cohort.token_dim} does not match checkpoint c0 {model.cfg.c0}"
        )
    t1 = torch.from_numpy(np.stack([p.tokens_m1 for p in cohort.patients])).double()
    t2 = torch.from_numpy(np.stack([p.tokens_m2 for p in cohort.patients])).double()
    model.eval()
    with torch.no_grad():
        out = model(t1, t2)
    mean_gates = out["gate_weights"].mean(dim=0).numpy()
    with open(args.out, "w") as f:
        f.write(plots.gate_bars_svg(mean_gates))
    print("gate weights:", " ".join(f"{w:.4f}" for w in mean_gates))
    return 0


def cmd_export_embeddings(args) -> int:
    model = load_checkpoint(args.checkpoint)
    cohort = load_cohort(args.cohort)
    if cohort.token_dim != model.cfg.c0:
        raise ConfigurationError(
            f"cohort token dim {cohort.token_dim} does not match checkpoint c0 {model.cfg.c0}"
        )
    t1 = torch.from_numpy(np.stack([p.tokens_m1 for p in cohort.patients])).double()
    t2 = torch.from_numpy(np.stack([p.tokens_m2 for p in cohort.patients])).double()
    model.eval()
    with torch.no_grad():
        bundle = model.decouple(t1, t2)
    names = ["sp1", "sp2", "share"] + ([] if bundle.explore is None else ["explore"])
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "feature"] + [f"v{i}" for i in range(model.cfg.c2)])
        for i, p in enumerate(cohort.patients):
            for name, feat in zip(names, bundle.features()):
                writer.writerow([p.id, name] + [repr(float(x)) for x in feat[i]])
    print(f"wrote {len(cohort) * len(names)} rows")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = TrainConfig(
        c0=5, c1=8, c2=8, n_bins=4, n_experts=4, segment_set=(1, 2, 4, 8), seed=args.seed
    )
    scfg = SynthConfig(n_patients=8, i1=3, i2=3, c0=5, seed=args.seed)
    cohort = assign_time_bins(generate_synthetic_cohort(scfg), cfg.n_bins)
    model = build_model(cfg)
    t1 = torch.from_numpy(np.stack([p.tokens_m1 for p in cohort.patients[:2]])).double()
    t2 = torch.from_numpy(np.stack([p.tokens_m2 for p in cohort.patients[:2]])).double()
    bins = torch.tensor([p.bin for p in cohort.patients[:2]])
    censored = torch.tensor([1 - p.event for p in cohort.patients[:2]], dtype=torch.float64)
    report = gradient_check(
        model, t1, t2, bins, censored, segment_length=args.segment,
        max_entries_per_path=args.max_entries,
    )
    for name in sorted(report.errors):
        print(f"{name}: {report.errors[name]:.3e}")
    print(f"worst relative error: {report.worst:.3e}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--c1", type=int, default=None)
    p.add_argument("--c2", type=int, default=None)
    p.add_argument("--n-bins", dest="n_bins", type=int, default=None)
    p.add_argument("--n-experts", dest="n_experts", type=int, default=None)
    p.add_argument("--segment-set", dest="segment_set",
                   type=lambda s: tuple(int(v) for v in s.split(",")), default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--distance-metric", dest="distance_metric",
                   choices=["mse", "l1", "kl", "cos"], default=None)
    p.add_argument("--ablation", dest="ablation",
                   choices=[a for a in ABLATIONS], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survfuse",
        description="Multimodal survival fusion: synthetic cohorts, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort file")
    p.add_argument("--config")
    p.add_argument("--n", dest="n_patients", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--censor-horizon", dest="censor_horizon", type=float, default=None)
    p.add_argument("--w-shared", dest="w_shared", type=float, default=None)
    p.add_argument("--w-spec1", dest="w_spec1", type=float, default=None)
    p.add_argument("--w-spec2", dest="w_spec2", type=float, default=None)
    p.add_argument("--w-interact", dest="w_interact", type=float, default=None)
    p.add_argument("--bins", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a full cohort, write a checkpoint")
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    p.add_argument("--cohort", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--metrics-out", dest="metrics_out")
    p.add_argument("--ablate", choices=["no-explore", "no-rca", "no-rfr", "no-moe", "full"])
    _add_train_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("ablate", help="run all five variants (full + four ablations)")
    p.add_argument("--cohort", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--metrics-out", dest="metrics_out")
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="score a cohort with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot-km", help="KM curves + log-rank p from a risk CSV")
    p.add_argument("--risks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--curves-out", dest="curves_out")
    p.set_defaults(func=cmd_plot_km)

    p = sub.add_parser("plot-gates", help="bar chart of cohort-averaged gate weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_gates)

    p = sub.add_parser("export-embeddings", help="per-patient decoupled feature CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradient report")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--segment", type=int, default=4)
    p.add_argument("--max-entries", dest="max_entries", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigurationError, DataError, SchemaError, UndefinedMetricError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SurvfuseError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
