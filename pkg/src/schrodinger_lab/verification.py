"""Acceptance suite behind ``schrodinger-lab verify``.

Each criterion is a function of :class:`Tolerances` returning a
:class:`CriterionResult`.  The printed report contains only quantities that
are functions of the fixed inputs (numbers at six significant digits and
pass flags), so two runs produce the same bytes; wall-clock times are kept
apart in ``run_meta.json`` and on stderr.
"""

from __future__ import annotations

import filecmp
import math
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .birman_schwinger import bs_indicator, locate_eigenvalue, scan_plane, tau_split_bound
from .bounds import (
    BoundParams,
    davies_row,
    empirical_constant,
    exclusion_region,
    is_excluded,
    thm12_check,
    thm12_report,
)
from .config import VERIFY_DEFAULTS, ConfigError, ExperimentConfig, parse_config
from .eigensolver import discrete_eigenvalues_offaxis, match_spectra
from .lattice import Grid, PotentialSpec, sample_potential
from .restriction import gamma_norm_profile, holder_modulus, shell_decomposition


@dataclass(frozen=True)
class Tolerances:
    c1_indicator: float = VERIFY_DEFAULTS["c1_indicator"]
    c1_match: float = VERIFY_DEFAULTS["c1_match"]
    c1_runtime: float = VERIFY_DEFAULTS["c1_runtime"]
    c2_final: float = VERIFY_DEFAULTS["c2_final"]
    c2_runtime: float = VERIFY_DEFAULTS["c2_runtime"]
    c3_runtime: float = VERIFY_DEFAULTS["c3_runtime"]
    c4_relative: float = VERIFY_DEFAULTS["c4_relative"]
    c4_slope: float = VERIFY_DEFAULTS["c4_slope"]
    c4_runtime: float = VERIFY_DEFAULTS["c4_runtime"]
    c5_stability: float = VERIFY_DEFAULTS["c5_stability"]
    c5_runtime: float = VERIFY_DEFAULTS["c5_runtime"]
    c6_exact: float = VERIFY_DEFAULTS["c6_exact"]
    c6_runtime: float = VERIFY_DEFAULTS["c6_runtime"]
    c7_stability: float = VERIFY_DEFAULTS["c7_stability"]
    c7_runtime: float = VERIFY_DEFAULTS["c7_runtime"]
    c8_runtime: float = VERIFY_DEFAULTS["c8_runtime"]

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Tolerances":
        return cls(**{f.name: float(cfg["verify"][f.name]) for f in fields(cls)})


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    message: str
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0
    runtime_limit: float = math.inf

    @property
    def within_time(self) -> bool:
        return self.elapsed < self.runtime_limit

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] criterion {self.number}: {self.name}: {self.message}"


def _g(x) -> str:
    return f"{x:.6g}"


def _timed(fn):
    def run(tol: Tolerances, **kw) -> CriterionResult:
        t0 = time.perf_counter()
        res = fn(tol, **kw)
        res.elapsed = time.perf_counter() - t0
        if not res.within_time:
            res.passed = False
            res.message += f"; runtime limit {res.runtime_limit:g} s exceeded"
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _dedupe(points, tol):
    out = []
    for z in points:
        if all(abs(z - w) > tol for w in out):
            out.append(z)
    return out


@_timed
def criterion_1(tol: Tolerances) -> CriterionResult:
    """Birman-Schwinger indicator vanishes on eigenvalues; indicator roots are eigenvalues."""
    g = Grid(1, 256, 20.0)
    V = sample_potential(PotentialSpec.well(-(1 + 0.5j), 1.0), g)
    spec = discrete_eigenvalues_offaxis(V, axis_margin=1e-2)
    worst = max(bs_indicator(V, z) for z in spec.eigenvalues)
    scan = scan_plane(V, (-2.0, 3.0, -1.0, 0.5), (51, 16), threads=1)
    roots = []
    for lam0, _ in scan.local_minima(below=0.5):
        r = locate_eigenvalue(V, lam0, radius=0.5)
        if r.converged:
            roots.append(r.lam)
    roots = _dedupe(roots, 1e-9)
    every = np.concatenate([spec.eigenvalues, spec.discarded_near_axis])
    _, _, dist = match_spectra(np.array(roots), every)
    match = float(np.max(dist)) if len(roots) else math.inf
    ok = worst < tol.c1_indicator and len(roots) > 0 and match < tol.c1_match
    msg = (f"{len(spec)} eigenvalues off the axis, max indicator {_g(worst)} (< {_g(tol.c1_indicator)}); "
           f"{len(roots)} refined roots, max matched distance {_g(match)} (< {_g(tol.c1_match)})")
    return CriterionResult(1, "Birman-Schwinger exactness", ok, msg,
                           {"max_indicator": worst, "roots": len(roots), "max_match": match}, runtime_limit=tol.c1_runtime)


@_timed
def criterion_2(tol: Tolerances) -> CriterionResult:
    """Narrow wells with depth * width = -2 approach the Davies disc radius."""
    ratios = []
    for w in (0.2, 0.1, 0.05):
        h = w / 11
        R = 6.0
        n = int(round(2 * R / h))
        n += n % 2
        V = sample_potential(PotentialSpec.well(-2.0 / w, w / 2), Grid(1, n, R))
        spec = discrete_eigenvalues_offaxis(V, axis_margin=1e-2, shifts=[-1.0], k=1)
        radius = 0.25 * V.integral() ** 2
        ratios.append(float(np.max(np.abs(spec.eigenvalues))) / radius)
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    final = abs(1.0 - ratios[-1])
    ok = increasing and final < tol.c2_final
    msg = f"ratios {', '.join(_g(r) for r in ratios)}; increasing={increasing}; |1 - last| = {_g(final)} (< {_g(tol.c2_final)})"
    return CriterionResult(2, "Davies saturation", ok, msg, {"ratios": ratios}, runtime_limit=tol.c2_runtime)


def _criterion3_potentials():
    rng = np.random.default_rng(2024)
    g = Grid(1, 512, 32.0)
    out = []
    for _ in range(20):
        hw = float(rng.uniform(0.3, 1.5))
        seed = int(rng.integers(2**31))
        out.append(sample_potential(PotentialSpec.random_steps(seed, hw), g))
    return out


@_timed
def criterion_3(tol: Tolerances) -> CriterionResult:
    """L^1 estimate with constant 1/2 on random potentials; equivalence with the Davies disc."""
    pots = _criterion3_potentials()
    rows = violations = 0
    for V in pots:
        rep = thm12_report(discrete_eigenvalues_offaxis(V), V, 1.0)
        rows += len(rep.rows)
        violations += rep.violations
    rng = np.random.default_rng(2025)
    mismatches = 0
    for _ in range(1000):
        V = pots[int(rng.integers(len(pots)))]
        radius = 0.25 * V.integral() ** 2
        r = radius * math.exp(rng.uniform(-1.0, 1.0))
        phi = rng.uniform(-0.49 * math.pi, 0.49 * math.pi)
        lam = r * complex(math.cos(phi), math.sin(phi))
        if thm12_check(lam, V, 1.0).passed != davies_row(lam, V).passed:
            mismatches += 1
    ok = rows > 0 and violations == 0 and mismatches == 0
    msg = f"{rows} eigenvalues with Re > 0, {violations} violations; {mismatches}/1000 predicate mismatches"
    return CriterionResult(3, "L^1 estimate at p = d = 1", ok, msg,
                           {"rows": rows, "violations": violations, "mismatches": mismatches}, runtime_limit=tol.c3_runtime)


def _decay_weight(n: int, R: float = 20.0):
    g = Grid(1, n, R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return sample_potential(PotentialSpec.power_decay(1.0, 1.5), g).modulus_root()


@_timed
def criterion_4(tol: Tolerances) -> CriterionResult:
    """Restriction norms against the two-point Gram matrix, and their growth rate."""
    W = _decay_weight(2048)
    rho = np.linspace(1.0, 50.0, 50)
    prof = gamma_norm_profile(W, rho)
    g = W.grid
    w2 = np.abs(W.flat) ** 2
    x = g.axis()
    # the Gram matrix of the two point evaluations at +-rho is [[a, b], [b*, a]]
    a = g.h * w2.sum() / (2 * math.pi)
    b = np.abs(g.h * (w2[None, :] * np.exp(2j * rho[:, None] * x[None, :])).sum(axis=1)) / (2 * math.pi)
    oracle = np.sqrt(a + b)
    rel = float(np.max(np.abs(prof.norms - oracle) / oracle))
    ok = rel < tol.c4_relative and prof.slope <= tol.c4_slope
    msg = f"max relative deviation {_g(rel)} (< {_g(tol.c4_relative)}); log-log slope {_g(prof.slope)} (<= {_g(tol.c4_slope)})"
    return CriterionResult(4, "restriction norm growth", ok, msg, {"relative": rel, "slope": prof.slope}, runtime_limit=tol.c4_runtime)


@_timed
def criterion_5(tol: Tolerances) -> CriterionResult:
    """Finite, grid-stable sup of the normalized Hölder ratio of the shell operators."""
    params = BoundParams(L=1.0, p=1.5, alpha=0.2)
    rng = np.random.default_rng(0)
    pairs = np.sort(rng.uniform(1.0, 20.0, (100, 2)), axis=1)
    sups = []
    for n in (512, 1024):
        W = _decay_weight(n)
        sups.append(max(holder_modulus(W, a, b, params).g_ratio for a, b in pairs))
    finite = all(math.isfinite(s) for s in sups)
    change = abs(sups[1] / sups[0] - 1.0) if finite and sups[0] > 0 else math.inf
    ok = finite and change <= tol.c5_stability
    msg = f"sup ratio {_g(sups[0])} (n=512), {_g(sups[1])} (n=1024); relative change {_g(change)} (<= {_g(tol.c5_stability)})"
    return CriterionResult(5, "Hölder modulus", ok, msg, {"sups": sups, "change": change}, runtime_limit=tol.c5_runtime)


@_timed
def criterion_6(tol: Tolerances) -> CriterionResult:
    """Exact shell regrouping equals the dense operator; binned sums converge monotonically."""
    cases = [
        ("1D", Grid(1, 256, 20.0), PotentialSpec.well(-1.0, 1.0), -1.0, (16, 32, 64, 128, 256)),
        ("2D", Grid(2, 16, 4.0), PotentialSpec.well(-1.0 - 0.3j, 1.0), -1.0, (8, 16, 32, 64, 128)),
    ]
    ok = True
    parts = []
    details = {}
    for label, g, spec, lam, bins in cases:
        V = sample_potential(spec, g)
        reps = [shell_decomposition(V, lam, b) for b in bins]
        exact = max(r.exact_error for r in reps)
        errs = [r.binned_error for r in reps]
        mono = all(b < a for a, b in zip(errs, errs[1:]))
        ok &= exact < tol.c6_exact and mono
        parts.append(f"{label}: exact {_g(exact)}, binned {' > '.join(_g(e) for e in errs)} monotone={mono}")
        details[label] = {"exact": exact, "binned": errs}
    return CriterionResult(6, "shell representation", ok, "; ".join(parts), details, runtime_limit=tol.c6_runtime)


def _criterion7_spectra(n: int):
    rng = np.random.default_rng(7)
    thetas = rng.uniform(0.0, 2 * math.pi, 10)
    g = Grid(1, n, 32.0)
    out = []
    for th in thetas:
        V = sample_potential(PotentialSpec.power_decay(1.0, 2.0, th), g)
        out.append(discrete_eigenvalues_offaxis(V))
    return out


@_timed
def criterion_7(tol: Tolerances) -> CriterionResult:
    """Disc confinement for the admissible family L = 1, p = 2."""
    params = BoundParams(L=1.0, p=2.0)
    fits, radii = [], []
    for n in (512, 1024):
        spectra = _criterion7_spectra(n)
        radii.append(max((float(np.max(np.abs(s.eigenvalues))) for s in spectra if len(s)), default=0.0))
        fits.append(empirical_constant([(s, params) for s in spectra]))
        last = spectra
    coarse, fine = fits
    if coarse.vacuous and fine.vacuous:
        stable, change = True, 0.0
    elif coarse.vacuous or fine.vacuous or coarse.C == 0:
        stable, change = False, math.inf
    else:
        change = abs(fine.C / coarse.C - 1.0)
        stable = change <= tol.c7_stability
    used = params.with_constant(fine.C if not fine.vacuous else 1.0)
    eig = np.concatenate([s.eigenvalues for s in last])
    inside = sum(is_excluded(z, used) for z in eig)
    top = max(radii) + 1.0
    axis = np.linspace(-top, top, 81)
    mask = exclusion_region(used, axis, axis)
    step = axis[1] - axis[0]
    cells = [(int(round((z.imag + top) / step)), int(round((z.real + top) / step))) for z in eig]
    inside_mask = sum(bool(mask.excluded[i, j]) for i, j in cells)
    finite = all(math.isfinite(r) for r in radii)
    ok = finite and stable and inside == 0 and inside_mask == 0
    note = "vacuous (no eigenvalue with Re > 0 and |lam| > 1)" if fine.vacuous else f"argmax {fine.argmax}"
    msg = (f"max |lam| {_g(radii[0])} (n=512), {_g(radii[1])} (n=1024); fitted C {_g(coarse.C)} -> {_g(fine.C)}, "
           f"{note}; change {_g(change)}; {inside} eigenvalues excluded, {inside_mask} in masked cells")
    return CriterionResult(7, "disc confinement", ok, msg,
                           {"radii": radii, "C": [coarse.C, fine.C], "vacuous": fine.vacuous}, runtime_limit=tol.c7_runtime)


@_timed
def criterion_8(tol: Tolerances) -> CriterionResult:
    """Norm of X against the three-term split around tau = (Re lam)^(1/2)."""
    rng = np.random.default_rng(8)
    g = Grid(1, 256, 20.0)
    held, worst, findings = 0, math.inf, []
    for i in range(20):
        L, p, th = rng.uniform(0.5, 2.0), rng.uniform(1.2, 2.8), rng.uniform(0, 2 * math.pi)
        lam = complex(rng.uniform(1.2, 10.0), rng.uniform(-5.0, 5.0))
        while abs(lam) <= 2:
            lam = complex(rng.uniform(1.2, 10.0), rng.uniform(-5.0, 5.0))
        V = sample_potential(PotentialSpec.power_decay(L, p, th), g)
        rep = tau_split_bound(V, lam)
        margin = rep.total + rep.quad_error - rep.bs_norm
        worst = min(worst, margin / rep.bs_norm)
        if rep.holds:
            held += 1
        else:
            findings.append({"sample": i, "L": L, "p": p, "theta": th, "lam": lam, "bs_norm": rep.bs_norm,
                             "terms": [rep.holder_term, rep.middle_term, rep.low_term], "quad_error": rep.quad_error})
    ok = held == 20
    msg = f"{held}/20 samples satisfy the split bound; smallest relative margin {_g(worst)}"
    return CriterionResult(8, "tau-split upper bound", ok, msg, {"held": held, "findings": findings}, runtime_limit=tol.c8_runtime)


REFERENCE_CONFIG = """\
[grid]
d = 1
n = 128
R = 16

[potential]
family = power_decay
L = 1
p = 1.5
theta = 2.5

[scan]
re_min = -1
re_max = 1
im_min = -1
im_max = 1
n_re = 9
n_im = 9

[bounds]
evaluators = thm12, flls, accumulation, thm11
thm12_p = 1.5
thm12_C = 1

[restriction]
rho_max = 8
rho_count = 8
holder_pairs = 5
shell_bins = 8, 16
trace_l = 0.75
"""

FAULTS = [
    ("bounds.p", "[bounds]\np = 5\n"),
    ("grid.n", "[grid]\nn = 127\n"),
    ("potential.family", "[potential]\nfamily = yukawa\n"),
    ("solver.residual_tol", "[solver]\nresidual_tol = -1e-8\n"),
    ("solver.tolerance", "[solver]\ntolerance = 1e-8\n"),
]


def _with_override(base: str, patch: str) -> str:
    """Apply ``patch`` (an INI fragment) on top of ``base`` by section and key."""
    import configparser

    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(base)
    extra = configparser.ConfigParser(interpolation=None)
    extra.optionxform = str
    extra.read_string(patch)
    for sec in extra.sections():
        if sec == "potential" and "family" in extra[sec]:
            cp.remove_section(sec)
        if not cp.has_section(sec):
            cp.add_section(sec)
        for k, v in extra[sec].items():
            cp.set(sec, k, v)
    out = []
    for sec in cp.sections():
        out.append(f"[{sec}]")
        out.extend(f"{k} = {v}" for k, v in cp[sec].items())
    return "\n".join(out) + "\n"


def _run_commands(cfg: ExperimentConfig, out: Path):
    from .cli import COMMANDS

    for name, cmd in COMMANDS.items():
        cmd(cfg, out / name, threads=1)


def _same_tree(a: Path, b: Path) -> list:
    diffs = []
    for fa in sorted(a.rglob("*")):
        if fa.is_dir() or fa.name == "run_meta.json":
            continue
        fb = b / fa.relative_to(a)
        if not fb.exists() or not filecmp.cmp(fa, fb, shallow=False):
            diffs.append(str(fa.relative_to(a)))
    return diffs


@_timed
def criterion_9(tol: Tolerances) -> CriterionResult:
    """Byte-identical reruns and fail-fast validation of corrupted configs."""
    cfg = parse_config(REFERENCE_CONFIG)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        _run_commands(cfg, tmp / "a")
        _run_commands(cfg, tmp / "b")
        diffs = _same_tree(tmp / "a", tmp / "b")
    first = report_lines(run_criteria([4, 6], tol))
    second = report_lines(run_criteria([4, 6], tol))
    same_report = first == second
    caught = []
    for key, patch in FAULTS:
        try:
            parse_config(_with_override(REFERENCE_CONFIG, patch))
            caught.append((key, None))
        except ConfigError as exc:
            caught.append((key, exc.key))
    named = sum(k == got for k, got in caught)
    ok = not diffs and same_report and named == len(FAULTS)
    wrong = [f"{k} -> {got}" for k, got in caught if k != got]
    msg = (f"output trees identical={not diffs}; repeated report identical={same_report}; "
           f"{named}/{len(FAULTS)} faults named their key path" + (f" (wrong: {', '.join(wrong)})" if wrong else ""))
    return CriterionResult(9, "determinism and validation", ok, msg,
                           {"differing_files": diffs, "faults": caught}, runtime_limit=math.inf)


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
}


def run_criteria(only=None, tol: Tolerances | None = None) -> list:
    tol = tol or Tolerances()
    numbers = sorted(set(only)) if only else sorted(CRITERIA)
    unknown = [n for n in numbers if n not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}")
    results = []
    for n in numbers:
        try:
            results.append(CRITERIA[n](tol))
        except Exception as exc:  # a crash is a failure of that criterion
            results.append(CriterionResult(n, CRITERIA[n].__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return results


def report_lines(results) -> list:
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} criteria passed")
    return lines


def run_verify(cfg: ExperimentConfig, out=None, only=None, threads=None) -> int:
    """Run the suite, print the report and return the exit status (0 or 3)."""
    from .cli import EXIT_ACCEPTANCE, EXIT_OK, _dump

    tol = Tolerances.from_config(cfg)
    started = time.time()
    try:
        results = run_criteria(only, tol)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    lines = report_lines(results)
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    for r in results:
        print(f"criterion {r.number}: {r.elapsed:.2f} s (limit {r.runtime_limit:g} s)", file=sys.stderr)
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"failed: criterion {r.number} ({r.name})", file=sys.stderr)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        _dump(out / "summary.json", {
            "command": "verify",
            "version": __version__,
            "config": cfg.echo(),
            "tolerances": {f.name: getattr(tol, f.name) for f in fields(tol)},
            "results": [
                {"number": r.number, "name": r.name, "passed": r.passed, "message": r.message}
                for r in results
            ],
        })
        _dump(out / "run_meta.json", {
            "started": started,
            "finished": time.time(),
            "threads": threads,
            "elapsed_seconds": {str(r.number): r.elapsed for r in results},
        })
    return EXIT_ACCEPTANCE if failed else EXIT_OK
