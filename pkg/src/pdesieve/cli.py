"""Command-line front end.

Each pipeline stage is independently invocable on saved artifacts:

    pdesieve simulate --equation burgers --noise 20 --out work/burgers
    pdesieve library  --field work/burgers --n-domains 2000 --out work/lib
    pdesieve screen   --library work/lib --out work/screen.json
    pdesieve rfe      --library work/lib --screen work/screen.json --out work/rfe.json
    pdesieve select   --library work/lib --support work/rfe.json --out-dir work
    pdesieve run      --config config.json --out-dir work
    pdesieve metrics  --report work/report.json --truth truth.json

``run`` accepts dotted overrides after its named flags, e.g.
``--screen.q0 0.4 --library.n_domains 1000``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 empty discovery.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    EmptyDiscoveryError,
    NumericalError,
    PdesieveError,
)
from .fields import Axis, NoiseSpec, add_noise, denoise, export_csv, load_field, save_field, simulate_pde
from .pipeline import (
    BUILTIN_GRIDS,
    DiscoveryReport,
    compute_metrics,
    run_pipeline,
    validate_config,
)
from .rfe import rfe
from .screen import ScreenConfig, adaptive_filter
from .select import (
    SelectConfig,
    build_decision_matrix,
    enumerate_alternatives,
    ic_select,
    mcdm_select,
)
from .weaklib import (
    build_library,
    export_library,
    load_library,
    sample_subdomains,
    structural_complexity,
)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_simulate(args):
    name = args.equation.lower()
    space_default, t_default = BUILTIN_GRIDS[name]
    space = Axis(args.nx or space_default[0], *(args.x_range or space_default[1:]))
    taxis = Axis(args.nt or t_default[0], *(args.t_range or t_default[1:]))
    field = simulate_pde(name, space, taxis, args.initial_condition)
    if args.noise > 0:
        field = add_noise(field, NoiseSpec(args.noise, seed=args.seed))
    if args.denoise_window:
        field = denoise(field, args.denoise_window, args.denoise_polyorder)
    base = save_field(field, args.out)
    if args.csv:
        export_csv(field, args.csv)
    print(f"wrote {base}.bin / {base}.json ({field.values.shape})")
    return 0


def _cmd_library(args):
    fields = [load_field(p) for p in args.field]
    half_widths = [int(h) for h in args.half_widths.split(",")]
    sds = sample_subdomains(fields[0], args.n_domains, half_widths, seed=args.seed)
    lib = build_library(
        fields, args.max_poly, args.max_deriv, sds, subdomain_seed=args.seed
    )
    out = Path(args.out)
    export_library(lib, out.with_suffix(".csv"), out.with_suffix(".json"))
    print(f"wrote {out.with_suffix('.csv')} ({lib.n_rows} x {lib.n_terms}) and manifest")
    return 0


def _load_library_arg(path):
    base = Path(path)
    if base.suffix in {".csv", ".json"}:
        base = base.with_suffix("")
    return load_library(base.with_suffix(".csv"), base.with_suffix(".json"))


def _cmd_screen(args):
    lib = _load_library_arg(args.library)
    cfg = ScreenConfig(
        q0=args.q0,
        q_max=args.q_max,
        dq=args.dq,
        s_min=args.s_min,
        s_max=args.s_max,
        K=args.K,
        seed=args.seed,
        statistic=args.statistic,
        workers=args.workers,
    )
    result = adaptive_filter(lib, cfg)
    _write_json(args.out, result.report(labels=lib.labels))
    print(
        f"screen: |S|={len(result.support)} at q={result.tuned_q} "
        f"({result.support.estimator})"
    )
    return 0


def _cmd_rfe(args):
    lib = _load_library_arg(args.library)
    with open(args.screen) as fh:
        screen_report = json.load(fh)
    support = [int(j) for j in screen_report["support_indices"]]
    result = rfe(lib, support=support, alpha=args.alpha, K=args.K, seed=args.seed)
    payload = {
        "support_indices": list(result.support.indices),
        "support_labels": [lib.labels[j] for j in result.support.indices],
        "alpha": args.alpha,
        "trace": result.trace,
    }
    _write_json(args.out, payload)
    print(f"rfe: kept {len(result.support)} of {len(support)} terms")
    return 0


def _export_decision_matrix(matrix, labels, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["size", "support"]
        header += list(matrix.criteria)
        header += [f"{c}_normalised" for c in matrix.criteria]
        writer.writerow(header)
        for i, alt in enumerate(matrix.alternatives):
            row = [alt.size, " + ".join(labels[j] for j in alt.support)]
            row += [f"{v:.10g}" for v in matrix.raw[i]]
            row += [f"{v:.10g}" for v in matrix.transformed[i]]
            writer.writerow(row)


def _export_preferences(matrix, selection, path):
    names = sorted(selection.preferences)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size"] + names + ["mean"])
        norm = {}
        for name in names:
            scores, higher = selection.preferences[name]
            scores = np.asarray(scores, dtype=float)
            rng = scores.max() - scores.min()
            unit = np.full_like(scores, 0.5) if rng <= 0 else (scores - scores.min()) / rng
            norm[name] = unit if higher else 1.0 - unit
        mean = np.mean([norm[n] for n in names], axis=0)
        for i, alt in enumerate(matrix.alternatives):
            writer.writerow(
                [alt.size]
                + [f"{norm[n][i]:.10g}" for n in names]
                + [f"{mean[i]:.10g}"]
            )


def _cmd_select(args):
    lib = _load_library_arg(args.library)
    with open(args.support) as fh:
        support_doc = json.load(fh)
    cols = [int(j) for j in support_doc["support_indices"]]
    X = lib.design[:, cols]
    y = lib.responses[args.response]
    alternatives = enumerate_alternatives(X, y)
    if len(alternatives) < 2:
        raise ConfigurationError("need at least two alternatives; support too small")
    complexities = [structural_complexity(lib.terms[j]) for j in cols]
    cfg = SelectConfig(
        n_keep=args.n_keep, miscoverage=args.miscoverage, repeats=args.repeats,
        seed=args.seed,
    )
    matrix = build_decision_matrix(alternatives, X, y, complexities, cfg)
    selection = mcdm_select(matrix)
    ics = ic_select(matrix.alternatives, X, y)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    local_labels = {i: lib.labels[j] for i, j in enumerate(cols)}
    _export_decision_matrix(matrix, local_labels, out_dir / "decision_matrix.csv")
    _export_preferences(matrix, selection, out_dir / "preferences.csv")
    winner_cols = [cols[j] for j in selection.winner.support]
    payload = {
        "winner_labels": sorted(lib.labels[j] for j in winner_cols),
        "winner_indices": sorted(winner_cols),
        "ordering_sizes": [matrix.alternatives[i].size for i in selection.ordering],
        "aic_size": ics["aic"].size,
        "ebic_size": ics["ebic"].size,
    }
    _write_json(out_dir / "selection.json", payload)
    print(f"select: winner = {payload['winner_labels']}")
    return 0


def _apply_overrides(config, tokens):
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigurationError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigurationError(f"override {tok!r} misses a value")
            value = tokens[i + 1]
            i += 2
        parts = key.split(".")
        node = config
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"cannot override inside scalar {part!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node[parts[-1]] = parsed
    return config


def _cmd_run(args, overrides):
    with open(args.config) as fh:
        config = json.load(fh)
    config = _apply_overrides(config, overrides)
    validate_config(config)
    report, artifacts = run_pipeline(config, collect_artifacts=True)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w") as fh:
        fh.write(report.to_json())
    lib = artifacts["library"]
    _write_json(out_dir / "screen_report.json", artifacts["screening"].report(lib.labels))
    _write_json(
        out_dir / "rfe_trace.json",
        {
            "support_indices": list(artifacts["rfe"].support.indices),
            "support_labels": [lib.labels[j] for j in artifacts["rfe"].support.indices],
            "trace": artifacts["rfe"].trace,
        },
    )
    if artifacts["matrix"] is not None:
        rfe_cols = list(artifacts["rfe"].support.indices)
        local_labels = {i: lib.labels[j] for i, j in enumerate(rfe_cols)}
        _export_decision_matrix(
            artifacts["matrix"], local_labels, out_dir / "decision_matrix.csv"
        )
        _export_preferences(
            artifacts["matrix"], artifacts["selection"], out_dir / "preferences.csv"
        )
    print(f"run: winner = {report.payload['winner']['support']}")
    if "metrics" in report.payload:
        m = report.payload["metrics"]
        print(f"     eFDR={m['eFDR']:.3f} ePOWER={m['ePOWER']:.3f}")
    return 0


def _cmd_metrics(args):
    report = DiscoveryReport.from_json(Path(args.report).read_text())
    with open(args.truth) as fh:
        truth = json.load(fh)
    metrics = compute_metrics(report.payload["coefficients"], truth)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    if args.out:
        _write_json(args.out, metrics)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="pdesieve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a benchmark field file")
    p.add_argument("--equation", required=True, choices=sorted(BUILTIN_GRIDS))
    p.add_argument("--nx", type=int)
    p.add_argument("--x-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--nt", type=int)
    p.add_argument("--t-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--initial-condition", default="default")
    p.add_argument("--noise", type=float, default=0.0, help="noise level percent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--denoise-window", type=int)
    p.add_argument("--denoise-polyorder", type=int, default=3)
    p.add_argument("--csv", help="also export x,t,value rows")
    p.add_argument("--out", required=True)

    p = sub.add_parser("library", help="build the weak-form candidate library")
    p.add_argument("--field", action="append", required=True)
    p.add_argument("--max-poly", type=int, default=6)
    p.add_argument("--max-deriv", type=int, default=6)
    p.add_argument("--n-domains", type=int, default=2000)
    p.add_argument("--half-widths", default="20,8", help="per-axis cells, comma separated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("screen", help="aggregated knockoff screening")
    p.add_argument("--library", required=True)
    p.add_argument("--q0", type=float, default=0.5)
    p.add_argument("--q-max", dest="q_max", type=float, default=1.0)
    p.add_argument("--dq", type=float, default=0.01)
    p.add_argument("--s-min", dest="s_min", type=int, default=2)
    p.add_argument("--s-max", dest="s_max", type=int)
    p.add_argument("--K", type=int, default=100)
    p.add_argument("--statistic", default="shap_ds", choices=["shap_ds", "swap", "swap_int"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rfe", help="recursive feature elimination")
    p.add_argument("--library", required=True)
    p.add_argument("--screen", required=True, help="screen report JSON")
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--K", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select", help="multi-criteria model selection")
    p.add_argument("--library", required=True)
    p.add_argument("--support", required=True, help="RFE output JSON")
    p.add_argument("--response", type=int, default=0)
    p.add_argument("--n-keep", dest="n_keep", type=int, default=5)
    p.add_argument("--miscoverage", type=float, default=0.1)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("metrics", help="evaluate a report against ground truth")
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True, help="JSON label -> coefficient map")
    p.add_argument("--out")

    return parser


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] == "run":
        args, overrides = parser.parse_known_args(argv)
    else:
        args, overrides = parser.parse_args(argv), []
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "library":
            return _cmd_library(args)
        if args.command == "screen":
            return _cmd_screen(args)
        if args.command == "rfe":
            return _cmd_rfe(args)
        if args.command == "select":
            return _cmd_select(args)
        if args.command == "run":
            return _cmd_run(args, overrides)
        if args.command == "metrics":
            return _cmd_metrics(args)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EmptyDiscoveryError as exc:
        print(f"empty discovery: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except PdesieveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
