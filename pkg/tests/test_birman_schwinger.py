import math

import numpy as np
import pytest

from oracles import shell_weight_closed_form
from schrodinger_lab.birman_schwinger import (
    EmptySupportError,
    TauRegimeError,
    bs_indicator,
    bs_norm,
    build_bs,
    locate_eigenvalue,
    scan_lattice,
    scan_plane,
    shell_weight_integral,
    support_indices,
    tau_split_bound,
)
from schrodinger_lab.eigensolver import discrete_eigenvalues_offaxis
from schrodinger_lab.lattice import Grid, GridFunction, PotentialSpec, SingularResolventError, sample_potential


@pytest.fixture(scope="module")
def complex_well():
    return sample_potential(PotentialSpec.well(-(1 + 0.5j), 1.0), Grid(1, 128, 10.0))


def _dense_X(V, lam):
    """``W (-Laplace - lam)^{-1} W`` from the dense Laplacian, restricted to the support."""
    g = V.grid
    S = support_indices(V)
    R0 = np.linalg.inv(g.laplacian_matrix() - lam * np.eye(g.size))
    W = np.sqrt(np.abs(V.flat[S]))
    return W[:, None] * R0[np.ix_(S, S)] * W[None, :]


def test_kernel_matches_dense_resolvent(complex_well):
    for lam in (-0.3 + 0.2j, 2.0 + 1.0j, -4.0):
        op = build_bs(complex_well, lam)
        assert np.allclose(op.X, _dense_X(complex_well, lam), atol=1e-12)


def test_kernel_matches_dense_resolvent_2d():
    V = sample_potential(PotentialSpec.gaussian(1 - 2j, 0.6), Grid(2, 8, 2.0))
    op = build_bs(V, 0.5 + 0.5j)
    assert np.allclose(op.X, _dense_X(V, 0.5 + 0.5j), atol=1e-12)


def test_X_and_X0_share_singular_values(complex_well):
    op = build_bs(complex_well, 1.0 + 0.5j)
    s = np.linalg.svd(op.X, compute_uv=False)
    s0 = np.linalg.svd(op.X0, compute_uv=False)
    assert np.allclose(s, s0)
    assert op.norm() == pytest.approx(s[0])
    assert bs_norm(complex_well, 1.0 + 0.5j) == pytest.approx(s[0])


def test_indicator_vanishes_exactly_on_eigenvalues(complex_well):
    spec = discrete_eigenvalues_offaxis(complex_well, axis_margin=1e-2)
    assert len(spec) > 0
    for lam in spec.eigenvalues:
        assert bs_indicator(complex_well, lam) < 1e-8
        assert bs_indicator(complex_well, lam, method="resolvent") < 1e-8
    assert bs_indicator(complex_well, -3.0 - 2.0j) > 1e-2


def test_indicator_conventions():
    g = Grid(1, 32, 4.0)
    zero = GridFunction(g, np.zeros(32))
    assert bs_indicator(zero, -1.0) == 1.0
    assert bs_norm(zero, -1.0) == 0.0
    with pytest.raises(EmptySupportError):
        build_bs(zero, -1.0)
    V = sample_potential(PotentialSpec.well(-1.0, 1.0), g)
    with pytest.raises(SingularResolventError):
        build_bs(V, 0.0)
    with pytest.raises(ValueError):
        bs_indicator(V, -1.0, method="bogus")


def test_support_threshold():
    g = Grid(1, 8, 2.0)
    V = GridFunction(g, [0, 1e-12, 1e-3, 1, 0, 0, 2, 0])
    assert list(support_indices(V)) == [2, 3, 6]
    assert list(support_indices(V, threshold=0.5)) == [3, 6]


def test_scan_lattice_shapes():
    re, im = scan_lattice(-1, 1, -2, 2, (5, 3))
    assert np.allclose(re, [-1, -0.5, 0, 0.5, 1]) and np.allclose(im, [-2, 0, 2])
    re, im = scan_lattice(-1, 1, -2, 2, (1, 1))
    assert re.tolist() == [0.0] and im.tolist() == [0.0]


def test_scan_plane_zero_potential_all_ones():
    V = GridFunction(Grid(1, 16, 4.0), np.zeros(16))
    res = scan_plane(V, (-1, 1, -1, 1), (4, 3), threads=1)
    assert res.field.shape == (3, 4)
    assert np.all(res.field == 1.0)


def test_scan_records_failures_and_continues(complex_well):
    res = scan_plane(complex_well, (-1, 1, -1, 1), (3, 3), threads=1)
    # the centre point is the Laplacian eigenvalue 0
    assert np.isnan(res.field[1, 1])
    assert len(res.errors) == 1
    assert np.isfinite(res.field).sum() == 8


def test_scan_independent_of_thread_count(complex_well):
    a = scan_plane(complex_well, (-1.5, 0.5, -1, 0.3), (9, 7), threads=1)
    b = scan_plane(complex_well, (-1.5, 0.5, -1, 0.3), (9, 7), threads=3)
    assert np.array_equal(a.field, b.field)


def test_scan_minima_and_refinement_hit_eigenvalues(complex_well):
    spec = discrete_eigenvalues_offaxis(complex_well, axis_margin=1e-2)
    res = scan_plane(complex_well, (-1.0, 0.0, -0.8, 0.0), (21, 17), threads=1)
    lam_min, val = res.minimum()
    target = spec.eigenvalues[np.argmin(np.abs(spec.eigenvalues - lam_min))]
    assert abs(lam_min - target) < 0.1
    found = locate_eigenvalue(complex_well, lam_min, radius=0.5)
    assert found.converged
    assert abs(found.lam - target) < 1e-9
    minima = res.local_minima(below=0.5)
    assert minima and minima[0][1] == val


def test_locate_reports_non_convergence(complex_well):
    out = locate_eigenvalue(complex_well, -8 - 6j, radius=1.0)
    assert not out.converged
    zero = GridFunction(complex_well.grid, np.zeros(128))
    assert not locate_eigenvalue(zero, -1.0).converged


@pytest.mark.parametrize("lam", [4 + 4j, -1.0, 0.5j, 3 - 2j, -2 - 1j, 0.3 + 0.01j])
def test_shell_weight_integral_closed_form(lam):
    assert shell_weight_integral(lam) == pytest.approx(shell_weight_closed_form(lam), abs=1e-10)


def test_shell_weight_integral_bounded_by_middle_term():
    lam = 4 + 4j
    assert abs(shell_weight_integral(lam)) <= math.pi / (2 * math.sqrt(abs(lam)))


def test_tau_split_regime_guards(complex_well):
    with pytest.raises(TauRegimeError):
        tau_split_bound(complex_well, 0.5 + 3j)
    with pytest.raises(TauRegimeError):
        tau_split_bound(complex_well, -2 + 1j)
    with pytest.raises(TauRegimeError):
        tau_split_bound(complex_well, 400.0 + 1j)


def test_tau_split_bounds_the_norm():
    V = sample_potential(PotentialSpec.power_decay(1.5, 1.8, 0.7), Grid(1, 256, 20.0))
    for lam in (3 + 1j, 6 - 4j):
        rep = tau_split_bound(V, lam)
        assert rep.holds
        assert rep.bs_norm == pytest.approx(bs_norm(V, lam))
        assert rep.total == pytest.approx(rep.holder_term + rep.middle_term + rep.low_term)
        assert rep.tau == pytest.approx(math.sqrt(lam.real))
        assert rep.v_sup == pytest.approx(V.sup())
        assert rep.tail >= 0 and rep.quad_error >= 0
