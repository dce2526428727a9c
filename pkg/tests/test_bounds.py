import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import thm11_bracket
from schrodinger_lab.bounds import (
    BoundParams,
    BoundParamsError,
    BoundReport,
    BoundRow,
    accumulation_sum,
    davies_bound,
    davies_report,
    davies_row,
    default_eps,
    empirical_constant,
    exclusion_region,
    flls_sum,
    is_excluded,
    sector_filter,
    thm11_report,
    thm11_rhs,
    thm11_terms,
    thm12_check,
    thm12_report,
)
from schrodinger_lab.eigensolver import SpectrumResult
from schrodinger_lab.lattice import Grid, GridFunction, PotentialSpec, sample_potential


@pytest.fixture(scope="module")
def steps():
    return sample_potential(PotentialSpec.random_steps(3, 1.0), Grid(1, 128, 16.0))


def test_params_defaults_and_identity():
    bp = BoundParams()
    assert bp.l == 1.0 and bp.kappa == 0.5
    assert bp.eps == pytest.approx(default_eps(2.0)) == pytest.approx(0.05)
    assert bp.alpha == pytest.approx(0.4)
    assert bp.kappa == pytest.approx(bp.alpha + bp.delta)
    assert bp.with_constant(2.0).C == 2.0
    assert set(bp.echo()) >= {"L", "p", "eps", "alpha", "delta", "C"}


@pytest.mark.parametrize("kwargs,key", [
    ({"p": 5.0}, "p"),
    ({"p": 1.0}, "p"),
    ({"L": 0.0}, "L"),
    ({"eps": 0.3}, "eps"),
    ({"eps": -0.1}, "eps"),
    ({"p": 1.5, "alpha": 0.25}, "alpha"),
    ({"alpha": -0.1}, "alpha"),
    ({"C": -1.0}, "C"),
])
def test_params_validation_names_key(kwargs, key):
    with pytest.raises(BoundParamsError) as info:
        BoundParams(**kwargs)
    assert info.value.key == key


def test_row_flags():
    r = BoundRow(1.0, 1.0, 0.9, 0.2)
    assert r.passed and r.marginal and r.margin == pytest.approx(-0.1)
    assert not BoundRow(1.0, 1.0, 0.5, 0.1).passed
    assert BoundRow(1.0, 0.1, 1.0).passed and not BoundRow(1.0, 0.1, 1.0).marginal


def test_davies_bound_value(steps):
    assert davies_bound(steps) == pytest.approx(0.25 * steps.integral() ** 2)
    with pytest.raises(ValueError):
        davies_bound(GridFunction(Grid(2, 4, 1.0), np.ones(16)))


def test_thm12_fixed_constant_for_p_d_one(steps):
    row = thm12_check(1 + 1j, steps, 1.0)
    assert row.rhs == pytest.approx(abs(1 + 1j) ** -0.5 * 0.5 * steps.integral())
    with pytest.raises(ValueError):
        thm12_check(1 + 1j, steps, 1.0, C=0.7)
    with pytest.raises(ValueError):
        thm12_check(-1 + 1j, steps, 1.0)
    with pytest.raises(ValueError):
        thm12_check(1 + 1j, steps, 2.0)  # constant required
    assert thm12_check(1 + 1j, steps, 2.0, C=1.0).lhs == pytest.approx(1.0)


def test_thm12_admissible_ranges():
    V2 = GridFunction(Grid(2, 4, 1.0), np.ones(16))
    with pytest.raises(ValueError):
        thm12_check(1 + 1j, V2, 1.0, C=1.0)
    V3 = GridFunction(Grid(3, 4, 1.0), np.ones(64))
    with pytest.raises(ValueError):
        thm12_check(1 + 1j, V3, 1.2, C=1.0)
    assert thm12_check(1 + 1j, V3, 1.5, C=1.0).passed in (True, False)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(-1.55, 1.55))
def test_thm12_and_davies_flags_agree(r, phi):
    # |Im|^0 <= |lam|^{-1/2} int|V| / 2  <=>  |lam| <= (int|V|)^2 / 4
    V = GridFunction(Grid(1, 8, 2.0), [0, 0, 1.5, -2j, 0.3, 0, 0, 0])
    lam = r * complex(math.cos(phi), math.sin(phi))
    if abs(abs(lam) - davies_bound(V)) < 1e-9 * davies_bound(V):
        return
    assert thm12_check(lam, V, 1.0).passed == davies_row(lam, V).passed


def test_residual_widens_uncertainty(steps):
    tight = thm12_check(2 + 1j, steps, 1.0, residual=0.0)
    loose = thm12_check(2 + 1j, steps, 1.0, residual=1e-2)
    assert tight.uncertainty == 0 and loose.uncertainty > 0


def test_sector_flls_and_accumulation(steps):
    spec = SpectrumResult([1 + 0.1j, 1 + 2j, -1 + 0j, 3 - 4j], [0, 0, 0, 0], "dense")
    outside = sector_filter(spec.eigenvalues, 1.0)
    assert set(outside) == {1 + 2j, -1 + 0j, 3 - 4j}
    total, integral, ratio = flls_sum(spec, steps, 1.0, 1.0)
    assert total == pytest.approx(abs(1 + 2j) + 1 + 5)
    assert integral == pytest.approx(steps.integral(1.5))
    assert ratio == pytest.approx(total / integral)
    assert flls_sum(SpectrumResult.empty(), steps, 1.0, 1.0)[2] == 0.0
    with pytest.raises(ValueError):
        flls_sum(spec, steps, 1.0, 0.5)
    with pytest.raises(ValueError):
        flls_sum(spec, steps, 0.0, 1.0)
    assert accumulation_sum(spec, 0.0, 2.0, 2.0) == pytest.approx(0.01 + 4)
    with pytest.raises(ValueError):
        accumulation_sum(spec, 2.0, 1.0, 1.0)


@pytest.mark.parametrize("lam,p", [(4.0, 2.0), (4.0, 1.5), (3 + 5j, 2.5), (1.1 + 0.2j, 1.2)])
def test_thm11_bracket_against_high_precision(lam, p):
    bp = BoundParams(p=p)
    assert thm11_terms(lam, bp) == pytest.approx(thm11_bracket(lam, p, bp.eps), rel=1e-13)
    assert thm11_rhs(lam, bp.with_constant(2.0)) == pytest.approx(2.0 * thm11_bracket(lam, p, bp.eps), rel=1e-13)


def test_thm11_value_at_four():
    # p = 2: kappa = 1/2, eps = 1/20; 4^{-0.2} + 4^{-0.45} + (1 + 4^{0.05}) / 3
    expected = 4**-0.2 + 4**-0.45 + (1 + 4**0.05) / 3
    assert thm11_terms(4.0, BoundParams()) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(1.98434, abs=1e-5)


def test_thm11_domain_and_exclusion():
    bp = BoundParams(C=0.1)
    with pytest.raises(ValueError):
        thm11_terms(0.5 + 0.5j, bp)
    with pytest.raises(ValueError):
        thm11_terms(-2 + 1j, bp)
    with pytest.raises(ValueError):
        thm11_rhs(4.0, BoundParams())
    assert is_excluded(10 + 1j, bp)
    assert not is_excluded(-10 + 1j, bp)
    assert not is_excluded(0.5, bp)
    mask = exclusion_region(bp, np.linspace(-5, 5, 11), np.linspace(-5, 5, 11))
    assert mask.excluded.shape == (11, 11)
    assert not np.any(mask.excluded & ~mask.covered)
    assert mask.excluded[5, 10]  # lam = 5
    with pytest.raises(ValueError):
        exclusion_region(BoundParams(), [1.0], [1.0])


def test_empirical_constant_makes_every_eigenvalue_feasible():
    bp = BoundParams()
    spec = SpectrumResult([2 + 1j, 5 - 3j, 0.5 + 0.1j, -3 + 1j, 4.0], np.zeros(5), "dense")
    fit = empirical_constant([(spec, bp)])
    assert fit.count == 2 and not fit.vacuous
    fitted = bp.with_constant(fit.C)
    assert all(thm11_rhs(z, fitted) >= 1 - 1e-12 for z in (2 + 1j, 5 - 3j))
    assert min(thm11_rhs(z, fitted) for z in (2 + 1j, 5 - 3j)) == pytest.approx(1.0)
    assert not any(is_excluded(z, fitted) for z in spec.eigenvalues)
    empty = empirical_constant([(SpectrumResult.empty(), bp)])
    assert empty.vacuous and empty.C == 0.0


def test_reports(steps):
    spec = SpectrumResult([-0.3 + 0.4j, 0.2 + 0.3j], [1e-12, 1e-12], "dense")
    d = davies_report(spec, steps)
    t = thm12_report(spec, steps, 1.0)
    assert len(d.rows) == 2 and len(t.rows) == 1
    assert t.rows[0].passed == d.rows[1].passed
    assert t.params["C"] == 0.5
    empty = thm11_report(SpectrumResult.empty(), BoundParams())
    assert empty.vacuous and empty.summary()["rows"] == 0
    rep = thm11_report(SpectrumResult([3 + 1j], [0.0], "dense"), BoundParams())
    assert rep.empirical_constant > 0 and rep.violations == 0


def test_report_summary_counts():
    rep = BoundReport("x", [BoundRow(1, 1, 2), BoundRow(1, 3, 2), BoundRow(1, 2, 1.9, 0.2)])
    s = rep.summary()
    assert s["violations"] == 1 and s["marginal"] == 1 and not s["vacuous"]
