"""Command-line pipeline: synth, ingest, fit, trace, signatures, compare,
severity, report.

Every command takes --out and writes a config.lock.json capturing its
resolved arguments; re-running with --config <lock> reproduces the outputs
byte for byte. Exit codes: 0 success, 1 error, 2 success with advisory
flags. Files are written atomically and removed again if a command fails
partway.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _io, _kernels
from .channel import channel_from_counts
from .cost_fit import (FitResult, OptimizerSettings, PriorConfig,
                       fit_cost_matrix, laplace_stderr)
from .costs import CostMatrix, generic_labels, random_cost_matrix
from .ingest import (BlockRef, ConfusionCounts, IngestError, LabelSet,
                     aggregate_counts, load_counts, load_labels, load_trials,
                     write_counts_csv)
from .signatures import (DegenerateCurveError, extract_signature,
                         normalize_signatures, severity_beta)
from .solver import BASettings, RDCurve, RDPoint, lambda_grid, trace_curve
from .stats import (DegenerateTestError, assign_q, fe_regression,
                    log10_magnitude, nested_interaction_test, paired_compare)
from .synth import make_observer, sample_counts

SIGNATURE_COLUMNS = ["system", "family", "experiment", "condition", "accuracy",
                     "beta_median", "beta_mean", "kappa", "auc",
                     "beta_n", "kappa_n", "flags"]
COMPARE_COLUMNS = ["contrast", "metric", "n_blocks", "delta_median", "fold",
                   "w_plus", "w_minus", "p", "q", "r_rb", "excluded_blocks"]

# metric name -> (signatures column, transform or None); transformed metrics
# are log10-scaled, so compare reports fold = 10**delta for them
METRICS = {
    "accuracy": ("accuracy", None),
    "beta": ("beta_median", log10_magnitude),
    "kappa": ("kappa", log10_magnitude),
    "auc": ("auc", None),
}

POOLED = "pooled"


class CliError(Exception):
    pass


class OutputSession:
    """Tracks written files so a failing command leaves nothing behind."""

    def __init__(self):
        self.paths = []

    def csv(self, path, header, rows):
        _io.write_csv(path, header, rows)
        self.paths.append(path)

    def json(self, path, obj):
        _io.write_json(path, obj)
        self.paths.append(path)

    def text(self, path, content):
        _io._atomic_write(path, content)
        self.paths.append(path)

    def cleanup(self):
        for path in self.paths:
            try:
                os.unlink(path)
            except OSError:
                pass


def _slug(*parts):
    keep = []
    for part in parts:
        keep.append("".join(c if c.isalnum() or c in "-_." else "-" for c in part))
    return "__".join(keep)


def _lock(args, command):
    payload = {k: v for k, v in vars(args).items()
               if k not in ("func", "config", "command") and not k.startswith("_")}
    return {"command": command, "backend": _kernels.active_backend(),
            "args": payload}


def _ba_settings(args):
    return BASettings(max_iters=args.ba_max_iters, tol=args.ba_tol)


def _load_blocks(args, labels):
    records = []
    for path in args.counts or []:
        with open(path, encoding="utf-8") as fh:
            records.extend(load_counts(fh, labels))
    for path in args.trials or []:
        with open(path, encoding="utf-8") as fh:
            records.extend(load_trials(fh, labels))
    if not records:
        raise CliError("no input data: pass --counts and/or --trials")
    return aggregate_counts(records, labels)


def _group_units(blocks, grouping):
    """Fit units: per (system, family, experiment[, condition])."""
    if grouping == "condition":
        return list(blocks)
    units = {}
    for blk in blocks:
        key = (blk.key.system, blk.key.family, blk.key.experiment)
        if key in units:
            units[key] = ConfusionCounts(
                units[key].key, units[key].counts + blk.counts, blk.label_set)
        else:
            pooled_key = BlockRef(blk.key.system, blk.key.family,
                                  blk.key.experiment, POOLED)
            units[key] = ConfusionCounts(pooled_key, blk.counts.copy(),
                                         blk.label_set)
    return [units[k] for k in sorted(units)]


# ---------------------------------------------------------------- synth

def cmd_synth(args):
    session = OutputSession()
    k = args.k
    labels = generic_labels(k)
    prior = np.full(k, 1.0 / k)
    # system temperatures and per-condition compression multipliers chosen
    # so every observer stays in the informative (full-support) regime
    temps = np.logspace(np.log10(3.0), np.log10(9.0), args.systems)
    multipliers = np.linspace(1.0, 0.55, args.conditions)
    blocks, truth_units = [], []
    for e in range(args.experiments):
        rho = random_cost_matrix(labels, seed=args.seed * 7919 + e)
        for i in range(args.systems):
            for c in range(args.conditions):
                lam = float(temps[i] * multipliers[c])
                sample_seed = ((args.seed * 1_000_003 + e) * 10_007 + i) * 101 + c
                obs = make_observer(rho, lam, prior, sample_seed)
                key = BlockRef(system=f"sys{i:02d}",
                               family="famA" if i % 2 == 0 else "famB",
                               experiment=f"exp{e:02d}",
                               condition=f"lvl{c:02d}")
                blocks.append(sample_counts(obs, args.trials_per_class, key))
                truth_units.append({
                    "system": key.system, "family": key.family,
                    "experiment": key.experiment, "condition": key.condition,
                    "lambda_true": lam, "seed": sample_seed,
                    "rho_true": rho.rho, "generator": "numpy-pcg64",
                })
    buf = io.StringIO()
    write_counts_csv(blocks, buf)
    session.text(os.path.join(args.out, "counts.csv"), buf.getvalue())
    session.text(os.path.join(args.out, "labels.txt"),
                 "\n".join(labels.labels) + "\n")
    session.json(os.path.join(args.out, "truth.json"),
                 {"kind": "synthetic_truth", "units": truth_units,
                  "trials_per_class": args.trials_per_class})
    session.json(os.path.join(args.out, "config.lock.json"), _lock(args, "synth"))
    return 0


# ---------------------------------------------------------------- ingest

def cmd_ingest(args):
    session = OutputSession()
    labels = load_labels(args.labels)
    blocks = _load_blocks(args, labels)
    buf = io.StringIO()
    write_counts_csv(blocks, buf)
    session.text(os.path.join(args.out, "counts.csv"), buf.getvalue())
    session.json(os.path.join(args.out, "config.lock.json"), _lock(args, "ingest"))
    return 0


# ---------------------------------------------------------------- fit

def _fit_unit(unit, args, labels):
    prior_cfg = PriorConfig(tau_sym=args.tau_sym, tau_asym=args.tau_asym)
    fit = fit_cost_matrix(unit, prior_cfg, OptimizerSettings())
    if args.stderr:
        laplace_stderr(fit, unit, prior_cfg)
    emp = channel_from_counts(unit, args.prior_mode)
    grid = lambda_grid(args.grid_lo, args.grid_hi, args.grid_n)
    curve = trace_curve(fit.rho_map, emp.prior, grid, _ba_settings(args))
    return fit, emp, curve


def _write_unit(session, out_dir, unit, fit, emp, curve, args):
    meta = {"system": unit.key.system, "family": unit.key.family,
            "experiment": unit.key.experiment, "condition": unit.key.condition}
    flags = list(fit.flags)
    if not fit.converged:
        flags.append("not_converged")
    session.json(os.path.join(out_dir, "rho.json"), {
        "kind": "cost_fit", **meta,
        "labels": list(unit.label_set.labels),
        "prior": emp.prior, "prior_mode": args.prior_mode,
        "empirical_channel": emp.cond,
        "accuracy": emp.accuracy(),
        "rho": fit.rho_map.rho, "scale": fit.scale,
        "stderr": fit.stderr,
        "log_posterior": fit.log_posterior, "converged": fit.converged,
        "iters": fit.iters, "flags": flags,
        "objective_trace": fit.objective_trace,
        "prior_config": {"tau_sym": args.tau_sym, "tau_asym": args.tau_asym,
                         "tau_diag": 0.0},
        "counts_total": unit.total,
    })
    _write_curve(session, out_dir, meta, unit.label_set, curve, args)
    return flags


def _write_curve(session, out_dir, meta, label_set, curve, args):
    rows = [[p.lam, p.distortion, p.rate] for p in curve.points]
    session.csv(os.path.join(out_dir, "curve.csv"),
                ["lambda", "distortion", "rate_bits"], rows)
    session.json(os.path.join(out_dir, "curve.json"), {
        "kind": "rd_curve", **meta,
        "labels": list(label_set.labels),
        "prior": curve.prior,
        "rho": getattr(curve.rho, "rho", curve.rho),
        "grid": {"lo": args.grid_lo, "hi": args.grid_hi, "n": args.grid_n},
        "points": [{"lambda": p.lam, "distortion": p.distortion,
                    "rate_bits": p.rate, "converged": p.converged,
                    "iters": p.iters} for p in curve.points],
    })


def cmd_fit(args):
    session = OutputSession()
    try:
        labels = load_labels(args.labels)
        blocks = _load_blocks(args, labels)
        units = _group_units(blocks, args.grouping)
        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                results = list(pool.map(lambda u: _fit_unit(u, args, labels), units))
        else:
            results = [_fit_unit(u, args, labels) for u in units]
        any_flags = False
        for unit, (fit, emp, curve) in zip(units, results):
            out_dir = os.path.join(args.out, "units",
                                   _slug(unit.key.system, unit.key.family,
                                         unit.key.experiment, unit.key.condition))
            flags = _write_unit(session, out_dir, unit, fit, emp, curve, args)
            any_flags = any_flags or bool(flags)
        session.json(os.path.join(args.out, "config.lock.json"), _lock(args, "fit"))
        return 2 if any_flags else 0
    except BaseException:
        session.cleanup()
        raise


# ---------------------------------------------------------------- trace

def cmd_trace(args):
    session = OutputSession()
    doc = _io.read_json(args.rho)
    labels = LabelSet(doc["labels"])
    rho = CostMatrix(np.array(doc["rho"], dtype=float), labels)
    prior = np.array(doc["prior"], dtype=float)
    grid = lambda_grid(args.grid_lo, args.grid_hi, args.grid_n)
    curve = trace_curve(rho, prior, grid, _ba_settings(args))
    meta = {key: doc.get(key, "") for key in
            ("system", "family", "experiment", "condition")}
    try:
        _write_curve(session, args.out, meta, labels, curve, args)
        session.json(os.path.join(args.out, "config.lock.json"), _lock(args, "trace"))
    except BaseException:
        session.cleanup()
        raise
    return 0


# ---------------------------------------------------------------- signatures

def _load_units(fit_dir):
    units_dir = os.path.join(fit_dir, "units")
    if not os.path.isdir(units_dir):
        raise CliError(f"no fit units found under {fit_dir!r}")
    units = []
    for name in sorted(os.listdir(units_dir)):
        unit_dir = os.path.join(units_dir, name)
        rho_path = os.path.join(unit_dir, "rho.json")
        curve_path = os.path.join(unit_dir, "curve.json")
        if not (os.path.isfile(rho_path) and os.path.isfile(curve_path)):
            raise CliError(f"unit {name!r} is missing rho.json or curve.json")
        units.append((_io.read_json(rho_path), _io.read_json(curve_path)))
    if not units:
        raise CliError(f"no fit units found under {fit_dir!r}")
    return units


def _curve_from_json(doc):
    points = [RDPoint(lam=p["lambda"], rate=p["rate_bits"],
                      distortion=p["distortion"], channel=None,
                      converged=p["converged"], iters=p["iters"])
              for p in doc["points"]]
    return RDCurve(points=points, rho=None, prior=np.array(doc["prior"]))


def cmd_signatures(args):
    session = OutputSession()
    units = _load_units(args.fit_dir)
    rows, sigs, groups, flagged = [], [], [], []
    for rho_doc, curve_doc in units:
        meta = [rho_doc["system"], rho_doc["family"], rho_doc["experiment"],
                rho_doc["condition"]]
        flags = [f for f in rho_doc.get("flags", [])]
        try:
            sig = extract_signature(_curve_from_json(curve_doc),
                                    rho_doc["accuracy"])
        except DegenerateCurveError:
            flags.append("degenerate_frontier")
            sig = None
        rows.append((meta, sig, flags))
        if sig is not None:
            sigs.append(sig)
            groups.append(rho_doc["experiment"] if args.norm_grouping == "experiment"
                          else ("all" if args.norm_grouping == "global"
                                else (rho_doc["experiment"], rho_doc["condition"])))
    normalized = normalize_signatures(sigs, groups) if sigs else []
    norm_iter = iter(normalized)
    out_rows = []
    any_flags = False
    for meta, sig, flags in rows:
        if sig is None:
            out_rows.append(meta + [None] * 7 + [";".join(flags)])
            any_flags = True
            continue
        norm = next(norm_iter)
        flags = flags + list(norm.flags)
        any_flags = any_flags or bool(flags)
        out_rows.append(meta + [sig.accuracy, sig.beta_median, sig.beta_mean,
                                sig.kappa, sig.auc, norm.beta_n, norm.kappa_n,
                                ";".join(flags)])
    try:
        session.csv(os.path.join(args.out, "signatures.csv"),
                    SIGNATURE_COLUMNS, out_rows)
        session.json(os.path.join(args.out, "config.lock.json"),
                     _lock(args, "signatures"))
    except BaseException:
        session.cleanup()
        raise
    return 2 if any_flags else 0


# ---------------------------------------------------------------- compare

def _read_signature_rows(path):
    import csv as _csv
    with open(path, encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        rows = []
        for rec in reader:
            row = dict(rec)
            for col in ("accuracy", "beta_median", "beta_mean", "kappa", "auc",
                        "beta_n", "kappa_n"):
                row[col] = float(rec[col]) if rec.get(col) else None
            rows.append(row)
    if not rows:
        raise CliError(f"signatures table {path!r} is empty")
    return rows


def cmd_compare(args):
    session = OutputSession()
    rows = _read_signature_rows(args.signatures)
    plan = _io.read_json(args.contrasts)
    known_systems = {r["system"] for r in rows}
    known_families = {r["family"] for r in rows}

    results, order = {}, []
    for comp in plan.get("comparisons", []):
        by = "system" if int(comp.get("level", 1)) == 1 else "family"
        known = known_systems if by == "system" else known_families
        for ident in (comp["a"], comp["b"]):
            if ident not in known:
                raise CliError(f"contrast id {ident!r} not present in table "
                               f"(level {comp.get('level', 1)})")
        fdr_set = comp.get("fdr_set", "default")
        for metric in comp.get("metrics", list(METRICS)):
            column, transform = METRICS[metric]
            name = comp.get("name", f"{comp['a']}_vs_{comp['b']}")
            order.append((name, metric))
            try:
                res = paired_compare(comp["a"], comp["b"], column, rows,
                                     by=by, transform=transform)
                results[(name, metric)] = (fdr_set, res, transform is not None)
            except DegenerateTestError as exc:
                results[(name, metric)] = (fdr_set, str(exc), False)

    by_family = {}
    for key, (fdr_set, res, is_log) in results.items():
        if not isinstance(res, str):
            by_family.setdefault((fdr_set, key[1]), []).append(key)
    for fam_keys in by_family.values():
        tests = [results[k][1] for k in fam_keys]
        for key, adjusted in zip(fam_keys, assign_q(tests)):
            fdr_set, _, is_log = results[key]
            results[key] = (fdr_set, adjusted, is_log)

    out_rows = []
    any_flags = False
    for name, metric in order:
        _, res, is_log = results[(name, metric)]
        if isinstance(res, str):
            out_rows.append([name, metric, None, None, None, None, None,
                             None, None, None, "degenerate: " + res])
            any_flags = True
            continue
        fold = 10.0 ** res.delta_median if is_log else None
        out_rows.append([name, metric, res.n_blocks, res.delta_median, fold,
                         res.w_plus, res.w_minus, res.p_value, res.q_value,
                         res.r_rb, res.excluded_blocks])

    regressions = []
    for reg in plan.get("regressions", []):
        metric = reg.get("outcome", "beta")
        column, transform = METRICS[metric]
        reg_rows = []
        for r in rows:
            if r.get("flags") or r[column] is None:
                continue
            val = float(transform(np.array([r[column]]))[0]) if transform else r[column]
            reg_rows.append(dict(r, _outcome=val))
        res = fe_regression(reg_rows, "_outcome", ("accuracy", "family"),
                            reference_family=reg["reference_family"])
        entry = {"outcome": metric, "log10_scale": transform is not None,
                 "reference_family": reg["reference_family"],
                 "coef": dict(zip(res.names, res.coef)),
                 "stderr": dict(zip(res.names, res.stderr)),
                 "p": dict(zip(res.names, res.p)),
                 "rss": res.rss, "df_resid": res.df_resid, "n": res.n,
                 "n_blocks": res.n_blocks}
        if reg.get("interaction"):
            f_stat, p, df1, df2 = nested_interaction_test(
                reg_rows, "_outcome", reg["reference_family"])
            entry["interaction_test"] = {"f": f_stat, "p": p,
                                         "df_num": df1, "df_den": df2}
        regressions.append(entry)

    try:
        session.csv(os.path.join(args.out, "compare.csv"),
                    COMPARE_COLUMNS, out_rows)
        if regressions:
            session.json(os.path.join(args.out, "regressions.json"),
                         {"kind": "fe_regressions", "models": regressions})
        session.json(os.path.join(args.out, "config.lock.json"),
                     _lock(args, "compare"))
    except BaseException:
        session.cleanup()
        raise
    return 2 if any_flags else 0


# ---------------------------------------------------------------- severity

def cmd_severity(args):
    session = OutputSession()
    labels = load_labels(args.labels)
    blocks = _load_blocks(args, labels)
    exp_blocks = [b for b in blocks if b.key.experiment == args.experiment]
    if not exp_blocks:
        raise CliError(f"experiment {args.experiment!r} not present in counts")
    conditions = sorted({b.key.condition for b in exp_blocks})
    if args.levels:
        wanted = [lvl.strip() for lvl in args.levels.split(",")]
        unknown = [lvl for lvl in wanted if lvl not in conditions]
        if unknown:
            raise CliError(f"unknown severity level(s) {unknown} in "
                           f"experiment {args.experiment!r}")
        conditions = wanted

    units = _load_units(args.fit_dir)
    rho_by_system = {}
    for rho_doc, _ in units:
        if rho_doc["experiment"] == args.experiment:
            rho_by_system.setdefault(rho_doc["system"], []).append(rho_doc)

    table_rows, plot_rows, series = [], [], {}
    any_flags = False
    systems = sorted({b.key.system for b in exp_blocks})
    for system in systems:
        docs = rho_by_system.get(system)
        if not docs:
            raise CliError(f"no fit unit for system {system!r} in experiment "
                           f"{args.experiment!r}; run fit with per-experiment grouping")
        if len(docs) > 1:
            raise CliError(f"multiple fit units for system {system!r}; severity "
                           "requires per-experiment (pooled) fits")
        doc = docs[0]
        rho = np.array(doc["rho"], dtype=float)
        per_level = []
        for lvl in conditions:
            match = [b for b in exp_blocks
                     if b.key.system == system and b.key.condition == lvl]
            if match:
                per_level.append(match[0])
        betas = severity_beta(per_level, rho, alpha=args.alpha)
        flag = ""
        if args.alpha == 0:
            flag = "alpha_zero_unsmoothed"
            any_flags = True
        family = per_level[0].key.family if per_level else ""
        pts = []
        for idx, (lvl, beta) in enumerate(betas):
            table_rows.append([system, family, args.experiment, lvl, beta, flag])
            plot_rows.append([system, lvl, beta])
            pts.append((float(idx), beta))
        series[system] = pts

    try:
        session.csv(os.path.join(args.out, "severity.csv"),
                    ["system", "family", "experiment", "level", "beta", "flags"],
                    table_rows)
        session.csv(os.path.join(args.out, "severity_plot.csv"),
                    ["system", "level", "beta"], plot_rows)
        if args.svg:
            session.text(os.path.join(args.out, "severity.svg"),
                         _io.svg_line_chart(series, x_label="severity level index",
                                            y_label="beta (log-prob per cost unit)"))
        session.json(os.path.join(args.out, "config.lock.json"),
                     _lock(args, "severity"))
    except BaseException:
        session.cleanup()
        raise
    return 2 if any_flags else 0


# ---------------------------------------------------------------- report

def cmd_report(args):
    fit_args = argparse.Namespace(**vars(args))
    fit_args.out = os.path.join(args.out, "fit")
    code_fit = cmd_fit(fit_args)

    sig_args = argparse.Namespace(**vars(args))
    sig_args.fit_dir = fit_args.out
    sig_args.out = os.path.join(args.out, "signatures")
    code_sig = cmd_signatures(sig_args)

    codes = [code_fit, code_sig]
    summary = {"kind": "report", "steps": {"fit": code_fit, "signatures": code_sig}}

    if args.contrasts:
        cmp_args = argparse.Namespace(**vars(args))
        cmp_args.signatures = os.path.join(sig_args.out, "signatures.csv")
        cmp_args.out = os.path.join(args.out, "compare")
        code_cmp = cmd_compare(cmp_args)
        codes.append(code_cmp)
        summary["steps"]["compare"] = code_cmp

    if args.severity_experiment:
        sev_args = argparse.Namespace(**vars(args))
        sev_args.fit_dir = fit_args.out
        sev_args.experiment = args.severity_experiment
        sev_args.out = os.path.join(args.out, "severity")
        code_sev = cmd_severity(sev_args)
        codes.append(code_sev)
        summary["steps"]["severity"] = code_sev

    _io.write_json(os.path.join(args.out, "report.json"), summary)
    _io.write_json(os.path.join(args.out, "config.lock.json"),
                   _io.to_jsonable(_lock(args, "report")))
    return max(codes)


# ---------------------------------------------------------------- parser

def _add_common(sub):
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--config", default=None,
                     help="JSON config (e.g. an emitted config.lock.json); "
                          "explicit flags override its values")


def _add_grid(sub):
    sub.add_argument("--grid-lo", type=float, default=1e-2)
    sub.add_argument("--grid-hi", type=float, default=1e3)
    sub.add_argument("--grid-n", type=int, default=64)
    sub.add_argument("--ba-tol", type=float, default=1e-10)
    sub.add_argument("--ba-max-iters", type=int, default=5000)


def _add_inputs(sub):
    sub.add_argument("--labels", required=True, help="labels file, one per line")
    sub.add_argument("--counts", action="append", default=None,
                     help="counts CSV (repeatable)")
    sub.add_argument("--trials", action="append", default=None,
                     help="trial CSV (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rdsig",
        description="Behavioral channels, frontier tracing, signatures, and "
                    "block-paired comparison from confusion data.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--systems", type=int, default=3)
    p.add_argument("--experiments", type=int, default=2)
    p.add_argument("--conditions", type=int, default=3)
    p.add_argument("--trials-per-class", type=int, default=2000)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("ingest", help="aggregate trial/count CSVs")
    _add_inputs(p)
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = subs.add_parser("fit", help="infer cost matrices and trace curves")
    _add_inputs(p)
    p.add_argument("--grouping", choices=["experiment", "condition"],
                   default="experiment")
    p.add_argument("--prior-mode", choices=["empirical", "uniform"],
                   default="empirical")
    p.add_argument("--tau-sym", type=float, default=1.0)
    p.add_argument("--tau-asym", type=float, default=10.0)
    p.add_argument("--stderr", action="store_true",
                   help="also compute Laplace standard errors")
    _add_grid(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("trace", help="re-trace a curve from a rho.json")
    p.add_argument("--rho", required=True)
    _add_grid(p)
    _add_common(p)
    p.set_defaults(func=cmd_trace)

    p = subs.add_parser("signatures", help="signature table from fit artifacts")
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--norm-grouping", choices=["experiment", "global", "condition"],
                   default="experiment")
    _add_common(p)
    p.set_defaults(func=cmd_signatures)

    p = subs.add_parser("compare", help="paired tests and regressions")
    p.add_argument("--signatures", required=True)
    p.add_argument("--contrasts", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = subs.add_parser("severity", help="per-level beta table")
    _add_inputs(p)
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--experiment", required=True)
    p.add_argument("--levels", default=None,
                   help="comma-separated condition ordering")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--svg", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_severity)

    p = subs.add_parser("report", help="fit + signatures (+compare, +severity)")
    _add_inputs(p)
    p.add_argument("--grouping", choices=["experiment", "condition"],
                   default="experiment")
    p.add_argument("--prior-mode", choices=["empirical", "uniform"],
                   default="empirical")
    p.add_argument("--tau-sym", type=float, default=1.0)
    p.add_argument("--tau-asym", type=float, default=10.0)
    p.add_argument("--stderr", action="store_true")
    p.add_argument("--norm-grouping", choices=["experiment", "global", "condition"],
                   default="experiment")
    p.add_argument("--contrasts", default=None)
    p.add_argument("--severity-experiment", default=None)
    p.add_argument("--levels", default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--svg", action="store_true")
    _add_grid(p)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def _apply_config(argv):
    """Load --config JSON as defaults; explicit flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    doc = _io.read_json(path)
    stored = doc.get("args", {})
    command = argv[0]
    if doc.get("command") and doc["command"] != command:
        raise CliError(f"config was written by {doc['command']!r}, "
                       f"not {command!r}")
    out = list(argv)
    given = {a.split("=")[0] for a in argv if a.startswith("--")}
    for key, value in stored.items():
        flag = "--" + key.replace("_", "-")
        if flag in given or value is None or isinstance(value, bool) and not value:
            continue
        if isinstance(value, bool):
            out.append(flag)
        elif isinstance(value, list):
            for item in value:
                out.extend([flag, str(item)])
        else:
            out.extend([flag, str(value)])
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and not argv[0].startswith("-"):
            argv = _apply_config(argv)
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, IngestError, DegenerateTestError, ValueError,
            OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
