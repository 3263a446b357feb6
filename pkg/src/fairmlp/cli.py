"""Command-line entry point: train / crossval / sweep / audit / bounds /
counterexample.

Run configuration lives in a JSON file; command-line flags override
individual keys. All outputs are deterministic given the seed, with
wall-clock data confined to a separate metadata field.

Exit codes: 0 success, 2 config/parameter/io, 3 schema/data,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import audit, data, lagrange, model
from .errors import (DataError, DegenerateBatchError, NumericError,
                     ParameterError, SchemaError)
from .fairloss import ConstraintKind

REPORT_FORMAT = "fairmlp-report/1"

CONSTRAINT_FLAGS = {
    "dp": ConstraintKind.dp,
    "eo-sum": ConstraintKind.eo_sum,
    "eo-max": ConstraintKind.eo_max,
    "di": ConstraintKind.di,
    "dp-multi": ConstraintKind.dp_multi,
}

# which MetricsReport field tracks each constraint in the tradeoff CSV
CONSTRAINT_METRIC = {
    "dp": "dp_soft",
    "dp-multi": "dp_soft",
    "eo-sum": "eo_sum_soft",
    "eo-max": "eo_max_soft",
    "di": "p_percent",
}


@dataclass
class RunConfig:
    """One training/evaluation run as described by a config JSON."""

    data: str
    schema: str
    out_dir: str = "runs/out"
    folds: int = 5
    holdout_fraction: float = 0.2
    constraint: str = "dp"
    epsilon: float | None = 0.05
    p_percent: float | None = None
    objective: str = "ce"
    h1: int = 100
    h2: int = 50
    lr_theta: float = 0.001
    lr_lambda: float | None = None
    batch_size: int = 500
    max_epochs: int = 5000
    seed: int = 0
    lambda_init: float = 0.0
    lambda_zero: bool = False
    lambda_optimizer: str = "adam"
    convergence_window: int = 50
    convergence_tol: float = 1e-5
    sweep: list = field(default_factory=list)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ParameterError(f"bad config {path}: {exc}")

    def constraint_kind(self, value: float | None = None) -> ConstraintKind:
        if self.constraint not in CONSTRAINT_FLAGS:
            raise ParameterError(f"unknown constraint {self.constraint!r}")
        if self.constraint == "di":
            p = self.p_percent if value is None else value
            if p is None:
                raise ParameterError("DI constraint requires p_percent")
            return ConstraintKind.di(p)
        eps = self.epsilon if value is None else value
        if eps is None:
            raise ParameterError(f"{self.constraint} requires epsilon")
        return CONSTRAINT_FLAGS[self.constraint](eps)

    def train_config(self, sweep_value: float | None = None,
                     seed: int | None = None) -> lagrange.TrainConfig:
        return lagrange.TrainConfig(
            constraint=self.constraint_kind(sweep_value),
            h1=self.h1, h2=self.h2,
            lr_theta=self.lr_theta, lr_lambda=self.lr_lambda,
            batch_size=self.batch_size, max_epochs=self.max_epochs,
            objective=self.objective,
            seed=self.seed if seed is None else seed,
            lambda_init=self.lambda_init, lambda_zero=self.lambda_zero,
            lambda_optimizer=self.lambda_optimizer,
            convergence_window=self.convergence_window,
            convergence_tol=self.convergence_tol,
        )


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    for key in ("seed", "constraint", "epsilon", "p_percent", "objective",
                "batch_size", "max_epochs", "folds"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    if getattr(args, "lambda_zero", False):
        cfg.lambda_zero = True
    return cfg


def _log_rows(log) -> list[dict]:
    # wall_ms stays out of the report payload so reruns are byte-identical
    return [{"epoch": r.epoch, "objective": r.objective,
             "constraint_value": r.constraint_value, "lambda": r.lam}
            for r in log]


def _aggregate(reports: list[audit.MetricsReport]) -> dict:
    scalar_fields = ["accuracy", "dp_soft", "dp_hard", "eo_sum_soft",
                     "eo_max_soft", "di_ratio", "p_percent", "q_mean"]
    mean, stddev = {}, {}
    for name in scalar_fields:
        vals = np.asarray([getattr(r, name) for r in reports])
        mean[name] = float(vals.mean())
        stddev[name] = float(vals.std())
    for name in ("fpr_by_group", "fnr_by_group"):
        mean[name], stddev[name] = {}, {}
        for g in ("0", "1"):
            vals = np.asarray([getattr(r, name)[int(g)] for r in reports])
            mean[name][g] = float(vals.mean())
            stddev[name][g] = float(vals.std())
    return {"mean": mean, "stddev": stddev}


def _write_report(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def _report_payload(cfg: RunConfig, mode: str,
                    fold_reports: list[audit.MetricsReport],
                    training_logs: list, wall_ms: float) -> dict:
    return {
        "format": REPORT_FORMAT,
        "mode": mode,
        "baseline": bool(cfg.lambda_zero),
        "config": asdict(cfg),
        "folds": [r.to_dict() for r in fold_reports],
        "aggregate": _aggregate(fold_reports),
        "training": [_log_rows(log) for log in training_logs],
        "metadata": {
            "created_utc": datetime.now(timezone.utc).isoformat(),
            "wall_ms_total": wall_ms,
        },
    }


def _write_raw_table(path, table: data.RawTable) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.header)
        writer.writerows(table.rows)


def _subset_table(table: data.RawTable, idx) -> data.RawTable:
    return data.RawTable(header=table.header,
                         rows=[table.rows[int(i)] for i in idx],
                         n_dropped=0)


def cmd_train(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    schema = data.resolve_schema(cfg.schema)
    table = data.load_csv(cfg.data, schema)
    labels = data.extract_labels(table, schema)
    train_idx, test_idx = data.holdout_split(None, cfg.holdout_fraction,
                                             cfg.seed, labels=labels)
    train_table = _subset_table(table, train_idx)
    test_table = _subset_table(table, test_idx)
    encoder = data.fit_encoder(train_table, schema)
    ds_train = data.encode(train_table, schema, encoder)
    ds_test = data.encode(test_table, schema, encoder)

    tc = cfg.train_config()
    params, log = lagrange.fit(ds_train, tc)
    report = audit.evaluate(params, ds_test, tc.batch_size, seed=cfg.seed)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.save_checkpoint(out / "model.json", params, cfg.seed)
    lagrange.write_training_log(out / "training_log.csv", log)
    encoder.to_json(out / "encoder.json")
    _write_raw_table(out / "test_split.csv", test_table)
    wall = (time.perf_counter() - t0) * 1000.0
    payload = _report_payload(cfg, "train", [report], [log], wall)
    _write_report(out / "report.json", payload)
    print(json.dumps(payload["aggregate"]["mean"], sort_keys=True))
    return 0


def _crossval_reports(cfg: RunConfig, sweep_value: float | None = None):
    schema = data.resolve_schema(cfg.schema)
    table = data.load_csv(cfg.data, schema)
    dataset = data.encode(table, schema)
    folds = data.kfold(dataset, cfg.folds, cfg.seed)
    fold_reports, logs = [], []
    for i, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(dataset.n), test_idx)
        tc = cfg.train_config(sweep_value, seed=cfg.seed + i)
        params, log = lagrange.fit(dataset.subset(train_idx), tc)
        fold_reports.append(audit.evaluate(params, dataset.subset(test_idx),
                                           tc.batch_size, seed=cfg.seed))
        logs.append(log)
    return fold_reports, logs


def cmd_crossval(cfg: RunConfig) -> int:
    if cfg.folds < 2:
        raise ParameterError("crossval requires folds >= 2")
    t0 = time.perf_counter()
    fold_reports, logs = _crossval_reports(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, log in enumerate(logs):
        lagrange.write_training_log(out / f"training_log_fold{i}.csv", log)
    wall = (time.perf_counter() - t0) * 1000.0
    payload = _report_payload(cfg, "crossval", fold_reports, logs, wall)
    _write_report(out / "report.json", payload)
    print(json.dumps(payload["aggregate"]["mean"], sort_keys=True))
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    if not cfg.sweep:
        raise ParameterError("sweep requires a nonempty 'sweep' list in config")
    if cfg.folds < 2:
        raise ParameterError("sweep requires folds >= 2")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metric = CONSTRAINT_METRIC[cfg.constraint]
    rows = []
    for value in cfg.sweep:
        fold_reports, _ = _crossval_reports(cfg, sweep_value=value)
        agg = _aggregate(fold_reports)
        rows.append({
            "epsilon_or_p": value,
            "mean_accuracy": agg["mean"]["accuracy"],
            "stddev_accuracy": agg["stddev"]["accuracy"],
            "mean_constraint_value": agg["mean"][metric],
            "stddev_constraint_value": agg["stddev"][metric],
        })
    path = out / "tradeoff.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon_or_p", "mean_accuracy", "stddev_accuracy",
                         "mean_constraint_value", "stddev_constraint_value"])
        for row in rows:
            writer.writerow([repr(float(row["epsilon_or_p"])),
                             repr(row["mean_accuracy"]),
                             repr(row["stddev_accuracy"]),
                             repr(row["mean_constraint_value"]),
                             repr(row["stddev_constraint_value"])])
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_audit(args) -> int:
    params, meta = model.load_checkpoint(args.model)
    schema = data.resolve_schema(args.schema)
    table = data.load_csv(args.data, schema)
    encoder = data.Encoder.from_json(args.encoder) if args.encoder else None
    dataset = data.encode(table, schema, encoder)
    d = meta["dims"][0]
    if dataset.d != d:
        raise SchemaError(
            f"checkpoint expects {d} features but the dataset encodes to {dataset.d}")
    report = audit.evaluate(params, dataset, args.batch_size, seed=args.seed)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return 0


def _parse_b_values(args) -> list[int]:
    if args.b_values:
        return [int(float(v)) for v in args.b_values.split(",")]
    lo, hi = (float(v) for v in args.b_range.split(":"))
    lo_e, hi_e = math.log10(lo), math.log10(hi)
    if abs(lo_e - round(lo_e)) > 1e-9 or abs(hi_e - round(hi_e)) > 1e-9:
        raise ParameterError("--b-range endpoints must be powers of 10")
    return [10 ** e for e in range(int(round(lo_e)), int(round(hi_e)) + 1)]


def cmd_bounds(args) -> int:
    inputs = audit.BoundInputs(R=args.r, D=args.d, W=args.w, L=args.l,
                               S=args.s, B=1, delta=args.delta, C=args.c,
                               radius_divisor=args.radius_divisor)
    rows = audit.bound_sweep(inputs, _parse_b_values(args),
                             empirical_mean=args.empirical_mean)
    writer = csv.writer(sys.stdout if args.out is None
                        else open(args.out, "w", encoding="utf-8", newline=""))
    writer.writerow(["B", "omega_closed", "omega_grid", "full_bound"])
    for row in rows:
        writer.writerow([row["B"], repr(row["omega_closed"]),
                         repr(row["omega_grid"]), repr(row["full_bound"])])
    return 0


def cmd_counterexample(args) -> int:
    print("mu,sup_distance,const_h,const_h_hat,gap")
    for mu in args.mu:
        pair = audit.di_counterexample(mu)
        print(f"{mu!r},{pair.sup_distance!r},{pair.const_h!r},"
              f"{pair.const_h_hat!r},{pair.gap!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairmlp",
        description="Fairness-constrained MLP training, auditing, and bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--lambda-zero", action="store_true", dest="lambda_zero",
                       help="freeze lambda at 0 (unconstrained baseline)")
        p.add_argument("--constraint", choices=sorted(CONSTRAINT_FLAGS))
        p.add_argument("--epsilon", type=float)
        p.add_argument("--p-percent", type=float, dest="p_percent")
        p.add_argument("--objective", choices=["ce", "qmean"])
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--max-epochs", type=int, dest="max_epochs")
        p.add_argument("--folds", type=int)

    for name in ("train", "crossval", "sweep"):
        add_run_flags(sub.add_parser(name))

    p_audit = sub.add_parser("audit")
    p_audit.add_argument("--model", required=True)
    p_audit.add_argument("--data", required=True)
    p_audit.add_argument("--schema", required=True)
    p_audit.add_argument("--encoder", help="encoder JSON from training")
    p_audit.add_argument("--batch-size", type=int, default=500, dest="batch_size")
    p_audit.add_argument("--seed", type=int, default=0)

    p_bounds = sub.add_parser("bounds")
    p_bounds.add_argument("--r", type=int, default=2)
    p_bounds.add_argument("--d", type=int, required=True)
    p_bounds.add_argument("--w", type=float, required=True)
    p_bounds.add_argument("--l", type=float, required=True)
    p_bounds.add_argument("--s", type=int, required=True)
    p_bounds.add_argument("--b-range", default="1e2:1e6", dest="b_range",
                          help="decades MIN:MAX, e.g. 1e2:1e6")
    p_bounds.add_argument("--b-values", dest="b_values",
                          help="explicit comma list of B values")
    p_bounds.add_argument("--delta", type=float, default=0.1)
    p_bounds.add_argument("--c", type=float, default=4.0)
    p_bounds.add_argument("--radius-divisor", choices=["S", "2S"], default="S",
                          dest="radius_divisor")
    p_bounds.add_argument("--empirical-mean", type=float, default=0.0,
                          dest="empirical_mean")
    p_bounds.add_argument("--out")

    p_ce = sub.add_parser("counterexample")
    p_ce.add_argument("mu", type=float, nargs="+")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("train", "crossval", "sweep"):
            cfg = _apply_overrides(RunConfig.from_json(args.config), args)
            if args.command == "train":
                return cmd_train(cfg)
            if args.command == "crossval":
                return cmd_crossval(cfg)
            return cmd_sweep(cfg)
        if args.command == "audit":
            return cmd_audit(args)
        if args.command == "bounds":
            return cmd_bounds(args)
        if args.command == "counterexample":
            return cmd_counterexample(args)
        parser.error(f"unknown command {args.command}")
    except (ParameterError, FileNotFoundError, IsADirectoryError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, DataError, DegenerateBatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
