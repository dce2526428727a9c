"""Command line entry point: ``schrodinger-lab {solve,scan,bounds,restriction,verify}``.

Every command reads one configuration file (see :mod:`schrodinger_lab.config`),
validates it completely, runs the requested operation and writes its tables
and a ``summary.json`` into the output directory.  Numeric outputs depend on
the configuration alone; wall-clock data goes to ``run_meta.json``.

Exit status: 0 success, 1 invalid configuration, 2 numerical failure,
3 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .birman_schwinger import scan_plane
from .bounds import (
    BoundReport,
    accumulation_sum,
    davies_report,
    empirical_constant,
    flls_sum,
    thm11_report,
    thm12_report,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .eigensolver import EigensolverError, discrete_eigenvalues_offaxis
from .lattice import PotentialSpec, SingularResolventError, sample_potential
from .restriction import (
    AliasingError,
    ParameterError,
    build_gamma,
    gamma_norm_profile,
    holder_modulus,
    nyquist_cap,
    shell_decomposition,
    trace_constant_estimate,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3


@dataclass
class RunRecord:
    """Outputs of one command; ``summary()`` is the deterministic part."""

    command: str
    config: dict
    version: str = __version__
    started: float = 0.0
    finished: float = 0.0
    outputs: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "config": self.config,
            "outputs": self.outputs,
            "warnings": self.warnings,
            "files": sorted(self.files),
        }


class _Writer:
    """Writes tables into ``out`` with a metadata comment line on top."""

    def __init__(self, out: Path, record: RunRecord, formats):
        self.out = out
        self.record = record
        self.formats = formats
        out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, header, rows):
        if "csv" not in self.formats:
            return
        path = self.out / name
        meta = json.dumps({"version": self.record.version, "config": self.record.config},
                          sort_keys=True, separators=(",", ":"))
        with open(path, "w", newline="") as fh:
            fh.write(f"# {meta}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.record.files.append(name)

    def finish(self, threads):
        rec = self.record
        if "json" in self.formats:
            _dump(self.out / "summary.json", rec.summary())
            rec.files.append("summary.json")
        meta = {
            "version": rec.version,
            "command": rec.command,
            "started": rec.started,
            "finished": rec.finished,
            "elapsed_seconds": rec.finished - rec.started,
            "threads": threads,
        }
        _dump(self.out / "run_meta.json", meta)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def _spec_echo(spec: PotentialSpec) -> dict:
    out = {"family": spec.family}
    for k, v in spec.params:
        if isinstance(v, np.ndarray):
            out[k] = f"table[{v.size}]"
        else:
            out[k] = v
    return out


def _members(cfg: ExperimentConfig):
    """``(suffix, spec, V)`` per potential; the suffix is empty for a single run."""
    grid = cfg.grid()
    specs = cfg.potentials()
    out = []
    for i, spec in enumerate(specs):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            V = sample_potential(spec, grid)
        out.append(("" if len(specs) == 1 else f"_{i:03d}", spec, V))
    return out


def _solve(cfg: ExperimentConfig, V):
    s = cfg["solver"]
    return discrete_eigenvalues_offaxis(
        V,
        axis_margin=s["axis_margin"],
        shifts=s["shifts"] or None,
        k=s["k"],
        dense_limit=s["dense_limit"],
        tol=s["residual_tol"],
    )


def cmd_solve(cfg: ExperimentConfig, out: Path, threads=None) -> RunRecord:
    rec = RunRecord("solve", cfg.echo(), started=time.time())
    w = _Writer(out, rec, cfg["output"]["formats"])
    members = []
    for suffix, spec, V in _members(cfg):
        spectrum = _solve(cfg, V)
        w.table(f"eigenvalues{suffix}.csv", ["re", "im", "residual"],
                [(z.real, z.imag, r) for z, r in zip(spectrum.eigenvalues, spectrum.residuals)])
        if spectrum.discarded_near_axis.size:
            rec.warnings.append(
                f"potential{suffix or '_000'}: {spectrum.discarded_near_axis.size} eigenvalues within "
                f"{spectrum.axis_margin:.6g} of [0, inf) discarded"
            )
        members.append({
            "potential": _spec_echo(spec),
            "count": len(spectrum),
            "discarded": int(spectrum.discarded_near_axis.size),
            "axis_margin": spectrum.axis_margin,
            "max_residual": spectrum.max_residual(),
            "method": spectrum.method,
        })
    rec.outputs["solve"] = members
    rec.finished = time.time()
    w.finish(threads)
    return rec


def cmd_scan(cfg: ExperimentConfig, out: Path, threads=None) -> RunRecord:
    rec = RunRecord("scan", cfg.echo(), started=time.time())
    w = _Writer(out, rec, cfg["output"]["formats"])
    sc = cfg["scan"]
    region = (sc["re_min"], sc["re_max"], sc["im_min"], sc["im_max"])
    members = []
    for suffix, spec, V in _members(cfg):
        res = scan_plane(V, region, (sc["n_re"], sc["n_im"]), threads=threads,
                         support_threshold=cfg["solver"]["support_threshold"])
        rows = [(x, y, res.field[i, j]) for i, y in enumerate(res.im) for j, x in enumerate(res.re)]
        w.table(f"indicator{suffix}.csv", ["re", "im", "indicator"], rows)
        minima = res.local_minima()
        w.table(f"minima{suffix}.csv", ["re", "im", "indicator"],
                [(z.real, z.imag, v) for z, v in minima])
        rec.warnings.extend(f"potential{suffix or '_000'}: {e}" for e in res.errors)
        members.append({
            "potential": _spec_echo(spec),
            "points": int(res.field.size),
            "failed_points": len(res.errors),
            "minimum": list(res.minimum()) if np.isfinite(res.field).any() else None,
            "local_minima": len(minima),
        })
    rec.outputs["scan"] = members
    rec.finished = time.time()
    w.finish(threads)
    return rec


def _report_rows(report: BoundReport, member: int):
    for r in report.rows:
        ratio = r.lhs / r.rhs if r.rhs > 0 else math.inf
        yield (member, r.lam.real, r.lam.imag, r.lhs, r.rhs, ratio, r.uncertainty, r.passed, r.marginal)


def cmd_bounds(cfg: ExperimentConfig, out: Path, threads=None) -> RunRecord:
    rec = RunRecord("bounds", cfg.echo(), started=time.time())
    w = _Writer(out, rec, cfg["output"]["formats"])
    b = cfg["bounds"]
    params = cfg.bound_params()
    solved = [(spec, V, _solve(cfg, V)) for _, spec, V in _members(cfg)]
    header = ["member", "re", "im", "lhs", "rhs", "ratio", "uncertainty", "passed", "marginal"]
    summary = {}
    evaluators = b["evaluators"]

    def tabulate(name, reports):
        rows = [row for i, rep in enumerate(reports) for row in _report_rows(rep, i)]
        w.table(f"bounds_{name}.csv", header, rows)
        summary[name] = [rep.summary() for rep in reports]
        for i, rep in enumerate(reports):
            if rep.marginal_count:
                rec.warnings.append(f"{name}[{i}]: {rep.marginal_count} marginal passes")
            if rep.violations:
                rec.warnings.append(f"{name}[{i}]: {rep.violations} violations")

    if "davies" in evaluators:
        tabulate("davies", [davies_report(s, V) for _, V, s in solved])
    if "thm12" in evaluators:
        tabulate("thm12", [thm12_report(s, V, b["thm12_p"], b["thm12_C"]) for _, V, s in solved])
    if "flls" in evaluators:
        rows = []
        for i, (_, V, s) in enumerate(solved):
            total, integral, ratio = flls_sum(s, V, b["t"], b["gamma"])
            rows.append((i, b["t"], b["gamma"], total, integral, ratio))
        w.table("bounds_flls.csv", ["member", "t", "gamma", "sum", "integral", "ratio"], rows)
        summary["flls"] = [dict(zip(["member", "t", "gamma", "sum", "integral", "ratio"], r)) for r in rows]
    if "accumulation" in evaluators:
        rows = [(i, b["a"], b["b"], b["gamma"], accumulation_sum(s, b["a"], b["b"], b["gamma"]))
                for i, (_, _, s) in enumerate(solved)]
        w.table("bounds_accumulation.csv", ["member", "a", "b", "gamma", "sum"], rows)
        summary["accumulation"] = [dict(zip(["member", "a", "b", "gamma", "sum"], r)) for r in rows]
    if "thm11" in evaluators:
        fit = None
        if params.C is None:
            fit = empirical_constant([(s, params) for _, _, s in solved])
            if fit.vacuous:
                rec.warnings.append("thm11: no eigenvalue with Re > 0 and |lam| > 1; fitted C is vacuous")
            params = params.with_constant(fit.C if not fit.vacuous else 1.0)
        tabulate("thm11", [thm11_report(s, params) for _, _, s in solved])
        if fit is not None:
            summary["thm11_fit"] = dataclasses.asdict(fit)
    rec.outputs["bounds"] = summary
    rec.outputs["spectra"] = [
        {"potential": _spec_echo(spec), "count": len(s), "max_abs": float(np.max(np.abs(s.eigenvalues))) if len(s) else 0.0}
        for spec, _, s in solved
    ]
    rec.finished = time.time()
    w.finish(threads)
    return rec


def cmd_restriction(cfg: ExperimentConfig, out: Path, threads=None) -> RunRecord:
    rec = RunRecord("restriction", cfg.echo(), started=time.time())
    w = _Writer(out, rec, cfg["output"]["formats"])
    r = cfg["restriction"]
    grid = cfg.grid()
    cap = nyquist_cap(grid)
    members = []
    for suffix, spec, V in _members(cfg):
        tag = f"potential{suffix or '_000'}"
        W = V.modulus_root()
        item = {"potential": _spec_echo(spec), "nyquist_cap": cap}

        rhos = np.linspace(r["rho_min"], r["rho_max"], r["rho_count"])
        rows, ok = [], []
        for rho in rhos:
            if rho > cap:
                rec.warnings.append(f"{tag}: rho={float(rho)!r} exceeds the aliasing cap {cap:.6g}; skipped")
                rows.append((rho, float("nan")))
                continue
            rows.append((rho, build_gamma(W, rho).norm()))
            ok.append(rho)
        w.table(f"profile_gamma{suffix}.csv", ["rho", "norm"], rows)
        item["gamma_slope"] = gamma_norm_profile(W, ok).slope if len(ok) >= 2 else None
        item["gamma_skipped"] = len(rhos) - len(ok)

        if r["holder_pairs"]:
            params = cfg.bound_params()
            rng = np.random.default_rng(r["holder_seed"])
            pairs = [(r["rho_min"], r["rho_min"])]
            pairs += [tuple(p) for p in np.sort(rng.uniform(1.0, r["holder_rho_max"], (r["holder_pairs"], 2)), axis=1)]
            hrows = []
            for a, b in pairs:
                try:
                    h = holder_modulus(W, a, b, params)
                except AliasingError as exc:
                    rec.warnings.append(f"{tag}: holder pair ({float(a)!r}, {float(b)!r}) skipped: {exc}")
                    continue
                hrows.append((a, b, h.y_difference, h.g_difference, h.y_ratio, h.g_ratio))
            w.table(f"profile_holder{suffix}.csv",
                    ["rho", "rho_prime", "y_difference", "g_difference", "y_ratio", "g_ratio"], hrows)
            item["holder_sup_g_ratio"] = max((row[5] for row in hrows), default=None)
            item["holder_params"] = params.echo()

        srows = []
        for bins in r["shell_bins"]:
            rep = shell_decomposition(V, r["shell_lambda"], bins, cfg["solver"]["support_threshold"])
            srows.append((bins, rep.exact_error, rep.binned_error, len(rep.flagged_bins)))
        w.table(f"profile_shells{suffix}.csv", ["bins", "exact_error", "binned_error", "flagged_bins"], srows)

        trows = [(l, trace_constant_estimate(l, grid)) for l in r["trace_l"]]
        w.table(f"profile_trace{suffix}.csv", ["l", "constant"], trows)
        members.append(item)
    rec.outputs["restriction"] = members
    rec.finished = time.time()
    w.finish(threads)
    return rec


COMMANDS = {
    "solve": cmd_solve,
    "scan": cmd_scan,
    "bounds": cmd_bounds,
    "restriction": cmd_restriction,
}


def apply_seed(cfg: ExperimentConfig, seed) -> ExperimentConfig:
    """Override the seed of a ``random_steps`` block (and the Hölder pair seed)."""
    if seed is None:
        return cfg
    sections = {k: dict(v) for k, v in cfg.sections.items()}
    if sections["potential"]["family"] == "random_steps":
        sections["potential"]["seed"] = [int(seed)]
    sections["restriction"]["holder_seed"] = int(seed)
    return ExperimentConfig(sections, cfg.source, cfg.base_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schrodinger-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None, help="output directory (default: output.directory)")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None, help="seed for random potential families")
    p = sub.add_parser("verify")
    p.add_argument("--config", type=Path, default=None, help="optional [verify] tolerance overrides")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="accepted for symmetry; the suite is fixed")
    p.add_argument("--only", type=int, nargs="+", default=None, metavar="N", help="criterion numbers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "verify":
        from .verification import run_verify

        try:
            cfg = load_config(args.config) if args.config else parse_config("")
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run_verify(cfg, out=args.out, only=args.only, threads=threads)
    try:
        cfg = apply_seed(load_config(args.config), args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(cfg["output"]["directory"])
    try:
        rec = COMMANDS[args.command](cfg, out, threads)
    except (EigensolverError, SingularResolventError, ArithmeticError, ParameterError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for msg in rec.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"{args.command}: wrote {len(rec.files)} files to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
