import numpy as np
import pytest

from schrodinger_lab.config import ConfigError, load_config, parse_config


def _key(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.key


def test_defaults_are_valid():
    cfg = parse_config("")
    assert cfg.grid().n == 256
    assert cfg.potentials()[0].family == "well"
    assert cfg["solver"]["axis_margin"] is None


@pytest.mark.parametrize("text,key", [
    ("[potential]\nfamily = power_decay\np = 1.5\n[bounds]\np = 5\n", "bounds.p"),
    ("[bounds]\np = 5\n", "bounds.p"),
    ("[bounds]\neps = 0.9\n", "bounds.eps"),
    ("[bounds]\nalpha = 0.6\n", "bounds.alpha"),
    ("[bounds]\nC = -1\n", "bounds.C"),
    ("[bounds]\nevaluators = davies, magic\n", "bounds.evaluators"),
    ("[bounds]\nthm12_p = 2\n", "bounds.thm12_C"),
    ("[bounds]\na = 3\nb = 1\n", "bounds.b"),
    ("[grid]\nn = 255\n", "grid.n"),
    ("[grid]\nd = 4\n", "grid.d"),
    ("[grid]\nR = -1\n", "grid.R"),
    ("[grid]\nmultiplier = spline\n", "grid.multiplier"),
    ("[grid]\nn = many\n", "grid.n"),
    ("[grid]\nsize = 3\n", "grid.size"),
    ("[gird]\nn = 4\n", "gird"),
    ("[potential]\nfamily = yukawa\n", "potential.family"),
    ("[potential]\nfamily = well\nL = 1\n", "potential.L"),
    ("[potential]\nfamily = well\nradius = -1\n", "potential.radius"),
    ("[potential]\nfamily = gaussian\nwidth = 0\n", "potential.width"),
    ("[potential]\nfamily = random_steps\nhalf_width = 40\n", "potential.half_width"),
    ("[potential]\nfamily = random_steps\n[grid]\nd = 2\nn = 16\n", "potential.family"),
    ("[potential]\nfamily = table\n", "potential.table"),
    ("[solver]\nresidual_tol = -1e-8\n", "solver.residual_tol"),
    ("[solver]\ntolerance = 1e-8\n", "solver.tolerance"),
    ("[solver]\naxis_margin = -1\n", "solver.axis_margin"),
    ("[solver]\nk = 0\n", "solver.k"),
    ("[grid]\nn = 128\nd = 2\n", "solver.dense_limit"),
    ("[scan]\nn_re = 0\n", "scan.n_re"),
    ("[scan]\nn_im = 0\n", "scan.n_im"),
    ("[scan]\nre_min = 2\nre_max = 1\n", "scan.re_max"),
    ("[restriction]\nrho_min = 0.5\n", "restriction.rho_min"),
    ("[restriction]\ntrace_l = 0.5\n", "restriction.trace_l"),
    ("[output]\nformats = csv, xml\n", "output.formats"),
    ("[verify]\nc1_indicator = 0\n", "verify.c1_indicator"),
    ("[verify]\nc99 = 1\n", "verify.c99"),
    ("this is not a config", "config"),
])
def test_invalid_configs_name_the_key(text, key):
    assert _key(text) == key


def test_message_contains_key_path():
    with pytest.raises(ConfigError, match=r"^bounds\.p: "):
        parse_config("[potential]\nfamily = power_decay\n[bounds]\np = 5\n")


def test_sweep_lists_expand_to_product():
    cfg = parse_config("[potential]\nfamily = power_decay\nL = 1, 2\np = 1.5, 2\ntheta = 0\n")
    specs = cfg.potentials()
    assert [(s["L"], s["p"]) for s in specs] == [(1, 1.5), (1, 2), (2, 1.5), (2, 2)]
    bp = cfg.bound_params()
    assert bp.L == 2 and bp.p == 1.5


def test_complex_values_accept_i_suffix():
    cfg = parse_config("[potential]\nfamily = well\ndepth = -1-0.5i\n")
    assert cfg.potentials()[0]["depth"] == -1 - 0.5j


def test_auto_values_and_shifts():
    cfg = parse_config("[solver]\naxis_margin = auto\nshifts = -1, -0.5+0.2j\n[bounds]\nC = fit\n")
    assert cfg["solver"]["axis_margin"] is None
    assert cfg["solver"]["shifts"] == [-1, -0.5 + 0.2j]
    assert cfg["bounds"]["C"] is None


def test_table_family_reads_file(tmp_path):
    np.savetxt(tmp_path / "v.txt", np.linspace(0, 1, 8))
    (tmp_path / "c.ini").write_text("[grid]\nn = 8\nR = 2\n[potential]\nfamily = table\ntable = v.txt\n")
    cfg = load_config(tmp_path / "c.ini")
    assert np.allclose(cfg.potentials()[0]["values"], np.linspace(0, 1, 8))


def test_missing_file():
    with pytest.raises(ConfigError) as info:
        load_config("/nonexistent/config.ini")
    assert info.value.key == "config"


def test_digest_and_echo_are_stable():
    a = parse_config("[grid]\nn = 64\n")
    b = parse_config("[grid]\nn=64   # same\n")
    assert a.digest() == b.digest()
    assert a.echo()["grid"]["n"] == 64
    assert parse_config("[grid]\nn = 66\n").digest() != a.digest()
