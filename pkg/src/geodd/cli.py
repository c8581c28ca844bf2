"""Command-line front end.

    geodd simulate  [--config PATH] [--out PATH] [--seed N] [--key value ...]
    geodd sweep     [--config PATH] [--out PATH] [--key value ...]
    geodd fit INPUT --model {gate-error,envelope,power-law,dips}
    geodd dips INPUT
    geodd reproduce {fig2a,fig2b,fig3a,fig3c} [--out DIR]

Unrecognized ``--key value`` pairs override configuration entries, either by
dotted path (``--drive.detuning_khz 0``) or by unique leaf name
(``--detuning-khz 0``); a leaf shared by two sections goes to the command's
own section (``sequence`` for simulate, ``sweep`` for sweep).  Errors go to stderr as one JSON line and give a
nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, figures
from .config import (
    ConfigError,
    RunConfig,
    apply_override,
    dump_json,
    load_config,
    resolve_key,
    validate_config,
)
from .ensemble import THREADS_ENV, default_threads, sweep_leakage_map, tau_scan
from .qutrit import basis_state

SIMULATE_COLUMNS = ("tau_us", "n_gates", "p_plus", "p_zero", "p_minus", "fidelity", "stderr")
SWEEP_COLUMNS = ("splitting_mhz", "tau_us", "n_gates", "p_plus")
FIT_COLUMNS = {
    "gate-error": ("n_gates", "fidelity"),
    "envelope": ("total_time_ms", "amplitude"),
    "power-law": ("n_gates", "t2_pure_ms"),
    "dips": ("tau_us", "fidelity"),
}


class CliError(Exception):
    def __init__(self, kind: str, message: str, key: Optional[str] = None, code: int = 1):
        super().__init__(message)
        self.kind, self.message, self.key, self.code = kind, message, key, code


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def table_text(columns, rows, fmt_name: str) -> str:
    if fmt_name == "json":
        return json.dumps({"columns": list(columns), "rows": [list(r) for r in rows]}) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as err:
        raise CliError("io", f"cannot write {path}: {err.strerror}", str(path)) from None


def sidecar_path(out: Path) -> Path:
    return out.with_name(out.stem + ".config.json")


# --- configuration plumbing ---------------------------------------------------------

def parse_overrides(extras: list[str], prefer: Optional[str] = None) -> list[tuple[tuple[str, ...], str]]:
    pairs = []
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--"):
            raise ConfigError(token, "unexpected argument")
        if "=" in token:
            key, value = token.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extras):
                raise ConfigError(token.lstrip("-"), "missing value")
            key, value = token, extras[i + 1]
            i += 2
        pairs.append((resolve_key(key, prefer), value))
    return pairs


def resolve_config(args, extras, prefer: Optional[str] = None) -> RunConfig:
    data = load_config(args.config)
    for path, value in parse_overrides(extras, prefer):
        apply_override(data, path, value)
    if args.seed is not None:
        apply_override(data, ("ensemble", "seed"), args.seed)
    if args.out is not None:
        apply_override(data, ("output", "path"), args.out)
    if args.format is not None:
        apply_override(data, ("output", "format"), args.format)
    return validate_config(data)


def threads_for(args) -> int:
    return args.threads if args.threads else default_threads()


# --- commands --------------------------------------------------------------------------

def simulate_rows(cfg: RunConfig, threads: int = 1) -> list[tuple]:
    drive = cfg.drive.params()
    spec = cfg.ensemble_spec()
    dissipator = cfg.noise.dissipator()
    initial = basis_state(cfg.sequence.initial_state)
    taus = cfg.sequence.taus()
    counts = cfg.sequence.gate_counts()
    scans = [tau_scan(initial, n, taus, drive, spec, dissipator, cfg.sequence.edge_convention,
                      cfg.sequence.dt_us, threads) for n in counts]
    rows = []
    for i, tau in enumerate(taus):
        for n, scan in zip(counts, scans):
            p_plus, p_zero, p_minus, fid = scan.mean[i]
            rows.append((float(tau), n, p_plus, p_zero, p_minus, fid, scan.stderr[i, 3]))
    return rows


def cmd_simulate(args, extras) -> int:
    cfg = resolve_config(args, extras, prefer="sequence")
    rows = simulate_rows(cfg, threads_for(args))
    out = Path(cfg.output.path)
    write_text(out, table_text(SIMULATE_COLUMNS, rows, cfg.output.format))
    write_text(sidecar_path(out), dump_json(cfg.to_dict()))
    return 0


def cmd_sweep(args, extras) -> int:
    cfg = resolve_config(args, extras, prefer="sweep")
    if cfg.sweep is None:
        raise ConfigError("sweep", "sweep section missing")
    sw = cfg.sweep
    splittings, taus = sw.splittings(), sw.taus()
    if splittings.size == 0 or taus.size == 0 or not sw.n_list:
        raise ConfigError("sweep", "empty sweep grid")
    result = sweep_leakage_map(splittings, taus, sw.n_list, cfg.drive.params(),
                               basis_state(cfg.sequence.initial_state), cfg.sequence.edge_convention,
                               threads_for(args))
    out = Path(cfg.output.path)
    write_text(out, table_text(SWEEP_COLUMNS, list(result.rows()), cfg.output.format))
    write_text(sidecar_path(out), dump_json(cfg.to_dict()))
    return 0


def read_columns(path: str, needed, n_gates: Optional[int] = None) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            for col in needed:
                if col not in fields:
                    raise CliError("input", f"missing column {col!r} in {path}", col, 2)
            rows = list(reader)
    except OSError as err:
        raise CliError("io", f"cannot read {path}: {err.strerror}", path) from None
    if n_gates is not None:
        if "n_gates" not in (fields or []):
            raise CliError("input", f"missing column 'n_gates' in {path}", "n_gates", 2)
        rows = [r for r in rows if int(float(r["n_gates"])) == n_gates]
    try:
        return {c: np.array([float(r[c]) for r in rows]) for c in needed}
    except ValueError as err:
        raise CliError("input", f"non-numeric value in {path}: {err}") from None


def fit_report(model: str, data: dict[str, np.ndarray], args) -> dict:
    cols = FIT_COLUMNS[model]
    x, y = data[cols[0]], data[cols[1]]
    try:
        if model == "dips":
            rep = analysis.find_dips(x, y, args.prominence, args.window)
            return {"model": model, "dip_positions_us": rep.dip_positions, "dip_widths_us": rep.widths,
                    "dip_depths": rep.depths, "mean_spacing_us": rep.mean_spacing,
                    "estimated_detuning_khz": rep.estimated_detuning}
        if model == "gate-error":
            fitter = analysis.fit_gate_error
        elif model == "envelope":
            plateau = args.plateau

            def fitter(t, a):
                return analysis.fit_coherence_envelope(t, a, plateau=plateau)

            fitter.predict = lambda t, r: analysis.envelope_model(t, r["t2"], r["p"], r["plateau"])
        else:
            fitter = analysis.fit_power_law
        res = fitter(x, y)
        errors = res.standard_errors
        if args.bootstrap:
            errors = analysis.bootstrap_standard_errors(fitter, x, y, args.bootstrap, args.seed or 0)
    except analysis.FitError as err:
        raise CliError("fit", str(err), code=2) from None
    return {"model": model, "parameters": res.parameters, "standard_errors": errors,
            "residual_norm": res.residual_norm, "converged": res.converged,
            "error_method": "bootstrap" if args.bootstrap else "covariance"}


def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def cmd_fit(args, extras) -> int:
    if extras:
        raise ConfigError(extras[0].lstrip("-"), "unexpected argument for fit")
    model = args.model
    data = read_columns(args.input, FIT_COLUMNS[model], args.n_gates)
    text = dump_json(_nan_to_none(fit_report(model, data, args)))
    if args.out:
        write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_dips(args, extras) -> int:
    args.model = "dips"
    return cmd_fit(args, extras)


def _write_map(outdir: Path, result, manifest: dict, name: str) -> None:
    write_text(outdir / "sweep.csv", table_text(SWEEP_COLUMNS, list(result.rows()), "csv"))
    write_text(outdir / "manifest.json", dump_json({"figure": name, **manifest}))


def cmd_reproduce(args, extras) -> int:
    if extras:
        raise ConfigError(extras[0].lstrip("-"), "unexpected argument for reproduce")
    name = args.figure
    if name not in figures.FIGURES:
        raise CliError("usage", f"unknown figure {name!r}; valid: {', '.join(figures.FIGURES)}",
                       "figure", 2)
    outdir = Path(args.out or f"reproduce_{name}")
    seed = args.seed if args.seed is not None else 0
    threads = threads_for(args)
    if name in ("fig2a", "fig2b"):
        detuning = 0.0 if name == "fig2a" else figures.DETUNING_KHZ
        result, manifest = figures.leakage_map(detuning, threads)
        _write_map(outdir, result, manifest, name)
    elif name == "fig3a":
        n, fid, err, fit, manifest = figures.fidelity_vs_gate_count(seed, threads=threads)
        rows = list(zip(n.tolist(), fid.tolist(), err.tolist()))
        write_text(outdir / "fidelity_vs_n.csv", table_text(("n_gates", "fidelity", "stderr"), rows, "csv"))
        write_text(outdir / "fit.json", dump_json({"model": "gate-error", "parameters": fit.parameters,
                                                   "standard_errors": fit.standard_errors,
                                                   "residual_norm": fit.residual_norm,
                                                   "converged": fit.converged}))
        write_text(outdir / "manifest.json", dump_json({"figure": name, **manifest}))
    else:
        curves, table, power, manifest = figures.coherence_times(seed, threads=threads)
        decay_rows = [(n, t, a, e) for n, (ts, amp, err) in curves.items() for t, a, e in zip(ts, amp, err)]
        write_text(outdir / "decay.csv",
                   table_text(("n_gates", "total_time_ms", "amplitude", "stderr"), decay_rows, "csv"))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("n_gates", "t2_ms", "t2_err_ms", "t2_pure_ms", "t2_pure_err_ms"))
        for row in table:
            w.writerow(["" if v is None else fmt(v) for v in row])
        write_text(outdir / "coherence_times.csv", buf.getvalue())
        report = {"model": "power-law", "t1_ms": figures.T1_MS}
        if power is not None:
            report.update(parameters=power.parameters, standard_errors=power.standard_errors,
                          residual_norm=power.residual_norm)
        write_text(outdir / "fit.json", dump_json(report))
        write_text(outdir / "manifest.json", dump_json({"figure": name, **manifest}))
    return 0


# --- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--out", help="output file (directory for reproduce)")
    common.add_argument("--seed", type=int, help="master seed of the ensemble")
    common.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    common.add_argument("--format", choices=("csv", "json"), help="tabular output format")

    parser = argparse.ArgumentParser(prog="geodd", parents=[common],
                                     description="Dynamical decoupling of a geometric spin-1 qubit.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="ensemble tau scan").set_defaults(func=cmd_simulate)
    sub.add_parser("sweep", parents=[common], help="leakage map over splitting, tau, N").set_defaults(
        func=cmd_sweep)

    def fit_options(p):
        p.add_argument("input", help="CSV with the model's columns")
        p.add_argument("--prominence", type=float, default=0.05, help="dip depth below rolling median")
        p.add_argument("--window", type=int, default=None, help="rolling-median window (samples)")
        p.add_argument("--plateau", type=float, default=None, help="fix the envelope plateau")
        p.add_argument("--n-gates", type=int, default=None, help="use only rows with this gate count")
        p.add_argument("--bootstrap", type=int, default=0, metavar="N",
                       help="standard errors from N residual-bootstrap refits")

    fit = sub.add_parser("fit", parents=[common], help="fit a model to a CSV")
    fit_options(fit)
    fit.add_argument("--model", required=True, choices=sorted(FIT_COLUMNS))
    fit.set_defaults(func=cmd_fit)
    dips = sub.add_parser("dips", parents=[common], help="alias of fit --model dips")
    fit_options(dips)
    dips.set_defaults(func=cmd_dips)

    rep = sub.add_parser("reproduce", parents=[common], help="write data behind a figure analog")
    rep.add_argument("figure", help=f"one of {', '.join(figures.FIGURES)}")
    rep.set_defaults(func=cmd_reproduce)
    return parser


def _emit_error(kind: str, message: str, key: Optional[str] = None) -> None:
    payload = {"error": kind, "message": message}
    if key is not None:
        payload["key"] = key
    sys.stderr.write(json.dumps(payload) + "\n")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    # parents=[common] on the subparsers resets globals given before the command
    pre, _ = build_parser_globals().parse_known_args(argv)
    for name in ("config", "out", "seed", "threads", "format"):
        if getattr(args, name, None) is None:
            setattr(args, name, getattr(pre, name))
    try:
        return args.func(args, extras)
    except ConfigError as err:
        _emit_error("config", err.message, err.key)
        return 2
    except CliError as err:
        _emit_error(err.kind, err.message, err.key)
        return err.code
    except (ValueError, RuntimeError) as err:
        _emit_error("runtime", str(err))
        return 1


def build_parser_globals() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--format")
    return p


if __name__ == "__main__":
    sys.exit(main())
