"""Command-line driver: ``parsel run | oracle | pgs | compare``."""

import argparse
import csv
import io
import json
import os
import sys

import numpy as np
from scipy.stats import binomtest

from . import __version__
from .config import SPEC_KEYS, build_procedure_config, load_config_file, parse_model
from .engine import EXECUTORS, make_executor
from .errors import ConfigError, InvalidParameter, NumericalFailure, ParselError
from .io import atomic_write
from .models import enumerate_flowline_array
from .models.flowline import _exact_mean
from .procedures import PROCEDURES, run_procedure

EXIT_OK, EXIT_ERROR, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
ORACLE_SCHEMA_VERSION = 1
PGS_SCHEMA_VERSION = 1
COMPARE_SCHEMA_VERSION = 1
ORACLE_DELTAS = (0.01, 0.1, 1.0)

_PARAM_FLAGS = (
    ("alpha1", float), ("alpha2", float), ("delta", float), ("n0", int), ("n1", int),
    ("beta", int), ("r_bar", int), ("workers", int), ("share_count", int), ("eta_mode", str),
)


def _add_spec_args(p, with_model=True):
    if with_model:
        p.add_argument("--model", help="model selector, e.g. flowline:R=20,B=20 or slippage:k=100,delta=0.1")
    p.add_argument("--procedure", choices=PROCEDURES, help="procedure (default gsp)")
    p.add_argument("--executor", choices=EXECUTORS, help="executor (default serial)")
    p.add_argument("--clock", choices=("virtual", "measured"), help="time accounting (default virtual)")
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--seed", type=int, help="root seed")
    for name, kind in _PARAM_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="parsel", description="Parallel ranking and selection.")
    parser.add_argument("--version", action="version", version=f"parsel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one procedure and write its report")
    _add_spec_args(p)
    p.add_argument("--out", default="parsel-out", help="output directory")
    p.add_argument("--trace", help="write the event trace as NDJSON to this path")

    p = sub.add_parser("oracle", help="exact flow-line means via the Markov chain")
    p.add_argument("R", type=int)
    p.add_argument("B", type=int)
    p.add_argument("--out", help="CSV path (stdout when omitted)")

    p = sub.add_parser("pgs", help="estimate the probability of good selection")
    _add_spec_args(p)
    p.add_argument("--macro-reps", dest="macro_reps", type=int, default=100)
    p.add_argument("--out", default="parsel-pgs", help="output directory")

    p = sub.add_parser("compare", help="compare two run specifications")
    p.add_argument("spec_a", help="config file of the first run")
    p.add_argument("spec_b", help="config file of the second run")
    _add_spec_args(p)
    p.add_argument("--out", default="parsel-compare", help="output directory")
    return parser


def _thread_cap():
    raw = os.environ.get("PARSEL_THREADS", "").strip()
    if not raw:
        return None
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError("PARSEL_THREADS", f"not an integer: {raw!r}") from None
    if cap < 1:
        raise ConfigError("PARSEL_THREADS", "must be at least 1")
    return cap


def resolve_spec(args, config_path=None):
    """Merge config file values with command-line flags (flags win)."""
    values = {}
    path = config_path or getattr(args, "config", None)
    if path:
        values.update(load_config_file(path))
    for key in SPEC_KEYS:
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    for name, _ in _PARAM_FLAGS:
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    cfg = build_procedure_config(values)
    cap = _thread_cap()
    if cap is not None and cfg.workers > cap:
        cfg = cfg.with_(workers=cap)
    procedure = values.get("procedure", "gsp")
    executor = values.get("executor", "serial")
    clock = values.get("clock", "virtual")
    if procedure not in PROCEDURES:
        raise ConfigError("procedure", f"must be one of {PROCEDURES}")
    if executor not in EXECUTORS:
        raise ConfigError("executor", f"must be one of {EXECUTORS}")
    if clock not in ("virtual", "measured"):
        raise ConfigError("clock", "must be 'virtual' or 'measured'")
    return {
        "model_spec": values.get("model"),
        "procedure": procedure,
        "executor": executor,
        "clock": clock,
        "config": cfg,
    }


def _execute(spec, model=None, seed=None, record_trace=False):
    model = model or parse_model(spec["model_spec"])
    cfg = spec["config"] if seed is None else spec["config"].with_(seed=seed)
    ex = make_executor(spec["executor"], model, cfg.workers, cfg.seed, clock=spec["clock"],
                       record_trace=record_trace)
    try:
        report = run_procedure(spec["procedure"], model, cfg, ex)
    finally:
        if hasattr(ex, "close"):
            ex.close()
    return report, ex


def _summary(report):
    r, m = report.replications, report.metrics
    rows = [
        ("procedure", f"{report.procedure} ({report.executor})"),
        ("selected system", str(report.selected_system)),
        ("selected mean", f"{report.selected_mean:.6g}"),
        ("replications stage 0/1/2/3", f"{r['stage0']}/{r['stage1']}/{r['stage2']}/{r['stage3']}"),
        ("replications total", str(r["total"])),
        ("survivors after stage 1/2", f"{report.survivors['stage1']}/{report.survivors['stage2']}"),
        ("wall clock [s]", f"{m['wall_clock']:.6g} ({m['clock']})"),
        ("utilization", f"{m['utilization']:.4f}"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def cmd_run(args):
    spec = resolve_spec(args)
    report, ex = _execute(spec, record_trace=bool(args.trace))
    atomic_write(os.path.join(args.out, "report.json"), report.to_json())
    atomic_write(os.path.join(args.out, "report.csv"), report.to_csv())
    if args.trace:
        ex.trace.write_ndjson(args.trace)
    print(_summary(report))
    return EXIT_OK


def oracle_table(R, B):
    """CSV text with exact means of every feasible ``(R, B)`` system."""
    if R < 0 or B < 0:
        raise InvalidParameter("R and B must be non-negative")
    systems = enumerate_flowline_array(R, B)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", "system_id", "r1", "r2", "r3", "b2", "b3", "exact_mean"])
    means = np.array([_exact_mean(tuple(int(v) for v in s)) for s in systems])
    for i, (s, mu) in enumerate(zip(systems, means)):
        w.writerow([ORACLE_SCHEMA_VERSION, i, *(int(v) for v in s), repr(float(mu))])
    if len(means):
        best = means.max()
        buf.write(f"# max_mean={float(best)!r}\n")
        for d in ORACLE_DELTAS:
            buf.write(f"# within_{d:g}={int(np.sum(means >= best - d))}\n")
    return buf.getvalue(), means


def cmd_oracle(args):
    text, means = oracle_table(args.R, args.B)
    if args.out:
        atomic_write(args.out, text)
        if len(means):
            print(f"{len(means)} systems, max mean {means.max():.6g}")
        else:
            print("no feasible systems")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def macro_seed(root, rep):
    """Seed of macro-replication ``rep`` derived from the root seed."""
    return int(np.random.SeedSequence([int(root), int(rep)]).generate_state(1, np.uint64)[0])


def pgs_campaign(model, spec, macro_reps, true_means=None, progress=None):
    """Run ``macro_reps`` independent procedures; returns a summary and the reports."""
    if macro_reps < 1:
        raise ConfigError("macro_reps", "must be at least 1")
    cfg = spec["config"]
    mu = np.asarray(model.true_means() if true_means is None else true_means)
    threshold = mu.max() - cfg.delta
    good, reports = 0, []
    for rep in range(macro_reps):
        report, _ = _execute(spec, model=model, seed=macro_seed(cfg.seed, rep))
        hit = bool(mu[report.selected_system] >= threshold)
        good += hit
        reports.append(report)
        if progress:
            progress(rep, report, hit)
    ci = binomtest(good, macro_reps).proportion_ci(confidence_level=0.99, method="exact")
    summary = {
        "schema_version": PGS_SCHEMA_VERSION,
        "procedure": spec["procedure"],
        "executor": spec["executor"],
        "model": model.describe(),
        "delta": cfg.delta,
        "macro_reps": macro_reps,
        "good_selections": good,
        "pgs": good / macro_reps,
        "ci99": [float(ci.low), float(ci.high)],
        "mean_replications": float(np.mean([r.replications["total"] for r in reports])),
        "root_seed": cfg.seed,
    }
    return summary, reports


def cmd_pgs(args):
    if args.macro_reps < 1:
        raise ConfigError("macro_reps", "must be at least 1")
    spec = resolve_spec(args)
    model = parse_model(spec["model_spec"])
    summary, reports = pgs_campaign(model, spec, args.macro_reps)
    atomic_write(os.path.join(args.out, "pgs.json"), json.dumps(summary, sort_keys=True, indent=2) + "\n")
    rows = "".join(r.to_csv(header=(i == 0)) for i, r in enumerate(reports))
    atomic_write(os.path.join(args.out, "runs.csv"), rows)
    lo, hi = summary["ci99"]
    print(f"PGS {summary['pgs']:.4f} ({summary['good_selections']}/{args.macro_reps}), 99% CI [{lo:.4f}, {hi:.4f}]")
    return EXIT_OK


def _ratio(a, b):
    if b == 0:
        return 1.0 if a == 0 else float("inf")
    return a / b


def compare_rows(a, b):
    """Ratio rows ``(metric, value_a, value_b, a / b)``."""
    return [
        ("replications", a.replications["total"], b.replications["total"],
         _ratio(a.replications["total"], b.replications["total"])),
        ("wall_clock", a.metrics["wall_clock"], b.metrics["wall_clock"],
         _ratio(a.metrics["wall_clock"], b.metrics["wall_clock"])),
        ("utilization", a.metrics["utilization"], b.metrics["utilization"],
         _ratio(a.metrics["utilization"], b.metrics["utilization"])),
    ]


def cmd_compare(args):
    spec_a = resolve_spec(args, args.spec_a)
    spec_b = resolve_spec(args, args.spec_b)
    if spec_a["model_spec"] != spec_b["model_spec"]:
        raise ConfigError("model", f"specs target different models: {spec_a['model_spec']!r} vs {spec_b['model_spec']!r}")
    if spec_a["config"].delta != spec_b["config"].delta:
        raise ConfigError("delta", "specs use different delta values")
    model = parse_model(spec_a["model_spec"])
    report_a, _ = _execute(spec_a, model=model)
    report_b, _ = _execute(spec_b, model=model)
    rows = compare_rows(report_a, report_b)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", "metric", "a", "b", "ratio_a_over_b"])
    for name, va, vb, ratio in rows:
        w.writerow([COMPARE_SCHEMA_VERSION, name, repr(va), repr(vb), repr(ratio)])
    atomic_write(os.path.join(args.out, "report_a.json"), report_a.to_json())
    atomic_write(os.path.join(args.out, "report_b.json"), report_b.to_json())
    atomic_write(os.path.join(args.out, "compare.csv"), buf.getvalue())
    print("A:\n" + _summary(report_a))
    print("B:\n" + _summary(report_b))
    print(f"{'metric':<14}{'a':>16}{'b':>16}{'a/b':>10}")
    for name, va, vb, ratio in rows:
        print(f"{name:<14}{va:>16.6g}{vb:>16.6g}{ratio:>10.4f}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "oracle": cmd_oracle, "pgs": cmd_pgs, "compare": cmd_compare}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidParameter) as exc:
        print(f"parsel: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"parsel: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ParselError as exc:
        print(f"parsel: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
