"""Experiment configuration: a sectioned ``key = value`` file with a fixed schema.

Example::

    [grid]
    d = 1
    n = 256
    R = 20

    [potential]
    family = well
    depth = -1-0.5j
    radius = 1

Every key is checked against :data:`SCHEMA`; unknown sections or keys and
out-of-range values raise :class:`ConfigError` naming the ``section.key``
path before any computation starts.  Numeric potential parameters accept a
comma-separated list, which turns the run into a sweep over the Cartesian
product of the listed values (``sweep = zip`` pairs them up instead).
"""

from __future__ import annotations

import configparser
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .bounds import BoundParams, BoundParamsError
from .lattice import Grid, PotentialSpec


class ConfigError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _complex(text):
    return complex(text.replace(" ", "").replace("i", "j"))


def _str(text):
    return text.strip()


def _list(conv):
    def parse(text):
        return [conv(item) for item in text.split(",") if item.strip()]

    return parse


def _auto_or(conv):
    def parse(text):
        return None if text.strip().lower() == "auto" else conv(text)

    return parse


def _fit_or_float(text):
    return None if text.strip().lower() == "fit" else float(text)


# acceptance tolerances; a [verify] section may override them (fault injection)
VERIFY_DEFAULTS = {
    "c1_indicator": 1e-8,
    "c1_match": 1e-8,
    "c1_runtime": 60.0,
    "c2_final": 0.05,
    "c2_runtime": 60.0,
    "c3_runtime": 300.0,
    "c4_relative": 1e-6,
    "c4_slope": 0.1,
    "c4_runtime": 60.0,
    "c5_stability": 0.25,
    "c5_runtime": 300.0,
    "c6_exact": 1e-10,
    "c6_runtime": 120.0,
    "c7_stability": 0.2,
    "c7_runtime": 600.0,
    "c8_runtime": 600.0,
}
SCHEMA = {
    "grid": {"d": _int, "n": _int, "R": _float, "multiplier": _str},
    "potential": {
        "family": _str,
        "sweep": _str,
        "L": _list(_float),
        "p": _list(_float),
        "theta": _list(_float),
        "depth": _list(_complex),
        "radius": _list(_float),
        "amplitude": _list(_complex),
        "width": _list(_float),
        "seed": _list(_int),
        "half_width": _list(_float),
        "segments": _list(_int),
        "max_modulus": _list(_float),
        "table": _str,
    },
    "solver": {
        "dense_limit": _int,
        "residual_tol": _float,
        "axis_margin": _auto_or(_float),
        "support_threshold": _auto_or(_float),
        "shifts": _list(_complex),
        "k": _int,
    },
    "scan": {
        "re_min": _float,
        "re_max": _float,
        "im_min": _float,
        "im_max": _float,
        "n_re": _int,
        "n_im": _int,
    },
    "bounds": {
        "evaluators": _list(_str),
        "p": _auto_or(_float),
        "eps": _auto_or(_float),
        "alpha": _auto_or(_float),
        "L": _auto_or(_float),
        "C": _fit_or_float,
        "t": _float,
        "gamma": _float,
        "a": _float,
        "b": _float,
        "thm12_p": _float,
        "thm12_C": _auto_or(_float),
    },
    "restriction": {
        "rho_min": _float,
        "rho_max": _float,
        "rho_count": _int,
        "holder_pairs": _int,
        "holder_rho_max": _float,
        "holder_seed": _int,
        "shell_lambda": _complex,
        "shell_bins": _list(_int),
        "trace_l": _list(_float),
        "weight_from": _str,
    },
    "output": {"directory": _str, "formats": _list(_str)},
    "verify": {key: _float for key in VERIFY_DEFAULTS},
}

DEFAULTS = {
    "grid": {"d": 1, "n": 256, "R": 20.0, "multiplier": "exact"},
    "potential": {"family": "well", "depth": [-1 + 0j], "radius": [1.0]},
    "solver": {
        "dense_limit": 4096,
        "residual_tol": 1e-8,
        "axis_margin": None,
        "support_threshold": None,
        "shifts": [],
        "k": 4,
    },
    "scan": {"re_min": -2.0, "re_max": 2.0, "im_min": -2.0, "im_max": 2.0, "n_re": 41, "n_im": 41},
    "bounds": {
        "evaluators": ["davies", "thm12", "flls", "accumulation", "thm11"],
        "p": None,
        "eps": None,
        "alpha": None,
        "L": None,
        "C": None,
        "t": 1.0,
        "gamma": 1.0,
        "a": 0.0,
        "b": 10.0,
        "thm12_p": 1.0,
        "thm12_C": None,
    },
    "restriction": {
        "rho_min": 1.0,
        "rho_max": 10.0,
        "rho_count": 10,
        "holder_pairs": 20,
        "holder_rho_max": 10.0,
        "holder_seed": 0,
        "shell_lambda": -1 + 0j,
        "shell_bins": [8, 16, 32, 64, 128],
        "trace_l": [0.6, 0.75, 1.0],
        "weight_from": "potential",
    },
    "output": {"directory": "out", "formats": ["csv", "json"]},
    "verify": dict(VERIFY_DEFAULTS),
}

FAMILY_KEYS = {
    "power_decay": ("L", "p", "theta"),
    "well": ("depth", "radius"),
    "gaussian": ("amplitude", "width"),
    "random_steps": ("seed", "half_width", "segments", "max_modulus"),
    "table": ("table",),
}
FAMILY_DEFAULTS = {
    "power_decay": {"L": [1.0], "p": [2.0], "theta": [0.0]},
    "well": {"depth": [-1 + 0j], "radius": [1.0]},
    "gaussian": {"amplitude": [-1 + 0j], "width": [1.0]},
    "random_steps": {"seed": [0], "half_width": [1.0], "segments": [5], "max_modulus": [2.0]},
    "table": {},
}
EVALUATORS = ("davies", "thm12", "flls", "accumulation", "thm11")


@dataclass
class ExperimentConfig:
    sections: dict
    source: str = ""
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, section):
        return self.sections[section]

    def grid(self) -> Grid:
        g = self.sections["grid"]
        return Grid(g["d"], g["n"], g["R"], g["multiplier"])

    def potentials(self) -> list:
        """Potential specs of the run (one unless the block lists several values)."""
        pot = self.sections["potential"]
        fam = pot["family"]
        if fam == "table":
            import numpy as np

            path = Path(pot["table"])
            if not path.is_absolute():
                path = self.base_dir / path
            return [PotentialSpec.table(np.loadtxt(path, dtype=complex))]
        keys = FAMILY_KEYS[fam]
        lists = [pot[k] for k in keys]
        if pot.get("sweep", "product") == "zip":
            size = max(len(v) for v in lists)
            combos = zip(*(v * size if len(v) == 1 else v for v in lists))
        else:
            combos = itertools.product(*lists)
        ctor = getattr(PotentialSpec, fam)
        return [ctor(*vals) for vals in combos]

    def bound_params(self) -> BoundParams:
        """Parameters of the disc-confinement estimate.

        ``L`` and ``p`` default to the envelope of a ``power_decay`` potential
        block (largest listed ``L``, smallest listed ``p``) and to 1 and 2
        otherwise.
        """
        b = self.sections["bounds"]
        pot = self.sections["potential"]
        decay = pot["family"] == "power_decay"
        L = b["L"] if b["L"] is not None else (max(pot["L"]) if decay else 1.0)
        p = b["p"] if b["p"] is not None else (min(pot["p"]) if decay else 2.0)
        return BoundParams(L=L, p=p, eps=b["eps"], alpha=b["alpha"], C=b["C"])

    def echo(self) -> dict:
        """JSON-ready copy of the validated configuration."""
        out = {}
        for sec, vals in self.sections.items():
            out[sec] = {k: _jsonable(v) for k, v in vals.items()}
        return out

    def digest(self) -> str:
        text = json.dumps(self.echo(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    return v


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", f"malformed file: {exc}") from exc
    sections = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    for sec, vals in sections.items():
        sections[sec] = {k: (list(v) if isinstance(v, list) else v) for k, v in vals.items()}
    family_given = parser.has_option("potential", "family")
    if family_given:
        fam = parser.get("potential", "family").strip()
        if fam not in FAMILY_KEYS:
            raise ConfigError("potential.family", f"unknown family {fam!r}; expected one of {sorted(FAMILY_KEYS)}")
        sections["potential"] = {"family": fam, **{k: list(v) for k, v in FAMILY_DEFAULTS[fam].items()}}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(sec, f"unknown section; expected one of {sorted(SCHEMA)}")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}", "unknown key")
            try:
                value = SCHEMA[sec][key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{sec}.{key}", f"cannot parse {raw!r}: {exc}") from exc
            if sec == "potential" and key != "family":
                fam = sections["potential"]["family"]
                if key not in FAMILY_KEYS[fam] and key != "sweep":
                    raise ConfigError(f"potential.{key}", f"not a parameter of family {fam!r}")
                if isinstance(value, list) and not value:
                    raise ConfigError(f"potential.{key}", "empty list")
            sections[sec][key] = value
    cfg = ExperimentConfig(sections, text, Path(base_dir) if base_dir else Path.cwd())
    validate(cfg)
    return cfg


def _require(cond, key, message):
    if not cond:
        raise ConfigError(key, message)


def validate(cfg: ExperimentConfig):
    """Check every field against the preconditions of the modules it feeds."""
    g = cfg["grid"]
    _require(g["d"] in (1, 2, 3), "grid.d", f"must be 1, 2 or 3, got {g['d']}")
    _require(g["n"] >= 2 and g["n"] % 2 == 0, "grid.n", f"must be a positive even integer, got {g['n']}")
    _require(g["R"] > 0 and math.isfinite(g["R"]), "grid.R", f"must be positive, got {g['R']}")
    _require(g["multiplier"] in ("exact", "fd"), "grid.multiplier", f"must be 'exact' or 'fd', got {g['multiplier']!r}")

    pot = cfg["potential"]
    fam = pot["family"]
    if fam == "power_decay":
        _require(all(v > 0 for v in pot["L"]), "potential.L", "must be positive")
        _require(all(math.isfinite(v) for v in pot["p"]), "potential.p", "must be finite")
    if fam == "well":
        _require(all(v > 0 for v in pot["radius"]), "potential.radius", "must be positive")
    if fam == "gaussian":
        _require(all(v > 0 for v in pot["width"]), "potential.width", "must be positive")
    if fam == "random_steps":
        _require(g["d"] == 1, "potential.family", "random_steps requires grid.d = 1")
        _require(all(v > 0 for v in pot["half_width"]), "potential.half_width", "must be positive")
        _require(all(v >= 1 for v in pot["segments"]), "potential.segments", "must be >= 1")
        _require(all(v > 0 for v in pot["max_modulus"]), "potential.max_modulus", "must be positive")
        _require(all(v < g["R"] for v in pot["half_width"]), "potential.half_width", "must lie inside the box")
    sweep = pot.get("sweep", "product")
    _require(sweep in ("product", "zip"), "potential.sweep", f"must be 'product' or 'zip', got {sweep!r}")
    if sweep == "zip" and fam != "table":
        sizes = {len(pot[k]) for k in FAMILY_KEYS[fam]} - {1}
        _require(len(sizes) <= 1, "potential.sweep", "zip needs lists of equal length (or single values)")
    if fam == "table":
        _require("table" in pot, "potential.table", "a table file is required")

    s = cfg["solver"]
    _require(s["dense_limit"] >= 1, "solver.dense_limit", "must be positive")
    _require(s["residual_tol"] > 0, "solver.residual_tol", f"must be positive, got {s['residual_tol']}")
    _require(s["axis_margin"] is None or s["axis_margin"] >= 0, "solver.axis_margin", "must be nonnegative or auto")
    _require(s["support_threshold"] is None or s["support_threshold"] >= 0, "solver.support_threshold", "must be nonnegative or auto")
    _require(s["k"] >= 1, "solver.k", "must be positive")
    if not s["shifts"]:
        _require(g["n"] ** g["d"] <= s["dense_limit"], "solver.dense_limit",
                 f"grid has {g['n'] ** g['d']} points; raise the limit or give solver.shifts")

    sc = cfg["scan"]
    _require(sc["n_re"] >= 1, "scan.n_re", f"must be >= 1, got {sc['n_re']}")
    _require(sc["n_im"] >= 1, "scan.n_im", f"must be >= 1, got {sc['n_im']}")
    _require(sc["re_min"] <= sc["re_max"], "scan.re_max", "must not be below scan.re_min")
    _require(sc["im_min"] <= sc["im_max"], "scan.im_max", "must not be below scan.im_min")

    b = cfg["bounds"]
    for name in b["evaluators"]:
        _require(name in EVALUATORS, "bounds.evaluators", f"unknown evaluator {name!r}")
    _require(b["t"] > 0, "bounds.t", "must be positive")
    _require(b["gamma"] >= 1, "bounds.gamma", "must be >= 1")
    _require(0 <= b["a"] < b["b"], "bounds.b", "need 0 <= bounds.a < bounds.b")
    _require(b["thm12_p"] >= 1, "bounds.thm12_p", "must be >= 1")
    _require(g["d"] < 3 or b["thm12_p"] >= g["d"] / 2, "bounds.thm12_p", "must be >= d/2 for d >= 3")
    _require(g["d"] != 2 or b["thm12_p"] > 1, "bounds.thm12_p", "must exceed 1 for d = 2")
    if "thm12" in b["evaluators"] and not (b["thm12_p"] == 1 and g["d"] == 1):
        _require(b["thm12_C"] is not None, "bounds.thm12_C", "a constant is required unless p = d = 1")
    if "davies" in b["evaluators"]:
        _require(g["d"] == 1, "bounds.evaluators", "davies is one-dimensional")
    _require(b["thm12_C"] is None or b["thm12_C"] > 0, "bounds.thm12_C", "must be positive")
    try:
        cfg.bound_params()
    except BoundParamsError as exc:
        raise ConfigError(f"bounds.{exc.key}", str(exc).split(": ", 1)[1]) from exc

    r = cfg["restriction"]
    _require(r["rho_min"] >= 1, "restriction.rho_min", "must be >= 1")
    _require(r["rho_max"] >= r["rho_min"], "restriction.rho_max", "must not be below rho_min")
    _require(r["rho_count"] >= 1, "restriction.rho_count", "must be positive")
    _require(r["holder_rho_max"] >= 1, "restriction.holder_rho_max", "must be >= 1")
    _require(r["holder_pairs"] >= 0, "restriction.holder_pairs", "must be nonnegative")
    _require(all(v > 0 for v in r["shell_bins"]), "restriction.shell_bins", "must be positive")
    _require(all(v > 0.5 for v in r["trace_l"]), "restriction.trace_l", "need l > 1/2")
    _require(r["weight_from"] in ("potential",), "restriction.weight_from", "only 'potential' is supported")

    o = cfg["output"]
    for fmt in o["formats"]:
        _require(fmt in ("csv", "json"), "output.formats", f"unknown format {fmt!r}")

    for key, value in cfg["verify"].items():
        _require(value > 0, f"verify.{key}", "tolerances must be positive")
