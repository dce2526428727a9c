import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from schrodinger_lab.lattice import (
    Grid,
    GridFunction,
    GridMismatchError,
    PotentialSpec,
    SingularResolventError,
    apply_free_resolvent,
    apply_hamiltonian,
    check_resolvent,
    default_half_length,
    resolvent_distance,
    sample_potential,
    spectral_projection_low,
)


def test_grid_geometry():
    g = Grid(1, 8, 2.0)
    assert g.h == 0.5
    assert g.shape == (8,)
    assert g.axis()[0] == -2.0 and g.axis()[-1] == 1.5
    assert g.nyquist == pytest.approx(2 * math.pi)
    g3 = Grid(3, 4, 1.0)
    assert g3.size == 64 and g3.points().shape == (64, 3)
    assert g3.cell_volume == pytest.approx(0.125)


@pytest.mark.parametrize(
    "args",
    [(0, 8, 1.0), (4, 8, 1.0), (1, 7, 1.0), (1, 0, 1.0), (1, 8, 0.0), (1, 8, -1.0)],
)
def test_grid_rejects_bad_parameters(args):
    with pytest.raises(ValueError):
        Grid(*args)


def test_grid_rejects_unknown_multiplier():
    with pytest.raises(ValueError, match="multiplier"):
        Grid(1, 8, 1.0, "spectral")


def test_frequencies_are_pi_m_over_R():
    g = Grid(1, 6, 3.0)
    assert np.allclose(np.sort(g.axis_frequencies()), np.pi * np.arange(-3, 3) / 3.0)
    assert np.allclose(np.sort(g.symbol_lexicographic()), np.sort(g.symbol()))


def test_fd_multiplier_matches_three_point_stencil():
    g = Grid(1, 16, 4.0, "fd")
    u = np.random.default_rng(0).normal(size=16)
    stencil = (2 * u - np.roll(u, 1) - np.roll(u, -1)) / g.h**2
    lap = g.ifft(g.symbol() * g.fft(u))
    assert np.allclose(lap, stencil)


@pytest.mark.parametrize("d,n", [(1, 12), (2, 6), (3, 4)])
def test_fourier_modes_are_laplacian_eigenfunctions(d, n):
    g = Grid(d, n, 1.5)
    m = np.arange(1, d + 1) - n // 4
    e = g.fourier_mode(m)
    assert e.norm() == pytest.approx(1.0)
    zero = GridFunction(g, np.zeros(g.size))
    out = apply_hamiltonian(zero, e)
    mu = float(np.sum((np.pi * m / g.R) ** 2))
    assert np.allclose(out.values, mu * e.values)


def test_fourier_mode_dimension_check():
    with pytest.raises(ValueError):
        Grid(2, 4, 1.0).fourier_mode([1])


@pytest.mark.parametrize("d,n", [(1, 10), (2, 4)])
def test_laplacian_matrix_is_symmetric_with_symbol_spectrum(d, n):
    g = Grid(d, n, 2.0)
    L = g.laplacian_matrix()
    assert np.allclose(L, L.T)
    assert np.allclose(np.sort(np.linalg.eigvalsh(L)), np.sort(g.symbol().ravel()))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 16, elements=st.floats(-1e3, 1e3)), arrays(np.float64, 16, elements=st.floats(-1e3, 1e3)))
def test_parseval(re, im):
    u = GridFunction(Grid(1, 16, 3.0), re + 1j * im)
    assert u.fourier_norm() == pytest.approx(u.norm(), rel=1e-12, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 8), elements=st.floats(-10, 10)))
def test_free_resolvent_inverts_shifted_laplacian(parts):
    g = Grid(1, 8, 2.0)
    u = GridFunction(g, parts[0] + 1j * parts[1])
    lam = -0.7 + 0.3j
    r = apply_free_resolvent(lam, u)
    zero = GridFunction(g, np.zeros(8))
    back = apply_hamiltonian(zero, r) - r * lam
    assert np.allclose(back.values, u.values, atol=1e-10)


def test_gridfunction_shape_and_immutability():
    g = Grid(2, 4, 1.0)
    u = GridFunction(g, np.arange(16))
    assert u.values.shape == (4, 4)
    with pytest.raises(ValueError):
        u.values[0, 0] = 1
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(15))


def test_gridfunction_arithmetic_checks_grid():
    a = GridFunction(Grid(1, 4, 1.0), np.ones(4))
    b = GridFunction(Grid(1, 4, 2.0), np.ones(4))
    with pytest.raises(GridMismatchError):
        a + b
    assert np.allclose((2 * a).values, 2.0)
    assert np.allclose((a * a - a).values, 0.0)


def test_integral_sup_modulus_root_phase():
    g = Grid(1, 4, 1.0)
    u = GridFunction(g, [0, -4, 3j, 1])
    assert u.sup() == 4
    assert u.integral() == pytest.approx(0.5 * 8)
    assert u.integral(2) == pytest.approx(0.5 * 26)
    assert np.allclose(u.modulus_root().values, [0, 2, math.sqrt(3), 1])
    assert np.allclose(u.phase().values, [1, -1, 1j, 1])


def test_well_is_closed_ball():
    g = Grid(1, 8, 2.0)
    V = sample_potential(PotentialSpec.well(-3, 1.0), g)
    # points -2, -1.5, ..., 1.5; |x| <= 1 keeps -1, -0.5, 0, 0.5, 1
    assert np.count_nonzero(V.values) == 5
    assert V.integral() == pytest.approx(3 * 5 * 0.5)


def test_well_center_dimension_checked():
    with pytest.raises(ValueError):
        sample_potential(PotentialSpec.well(-1, 1.0, center=(0, 0)), Grid(1, 8, 2.0))


def test_power_decay_and_gaussian_values():
    g = Grid(1, 8, 4.0)
    x = g.axis()
    V = sample_potential(PotentialSpec.power_decay(2.0, 2.0, math.pi / 2), g)
    assert np.allclose(V.values, 2j / (1 + x**2))
    G = sample_potential(PotentialSpec.gaussian(-1 + 1j, 0.5), g)
    assert np.allclose(G.values, (-1 + 1j) * np.exp(-(x**2) / 0.5))


def test_power_decay_warns_outside_range():
    with pytest.warns(UserWarning, match="outside"):
        sample_potential(PotentialSpec.power_decay(1.0, 3.5), Grid(1, 8, 4.0))


def test_power_decay_bound_and_half_length():
    spec = PotentialSpec.power_decay(1.0, 2.0)
    R = default_half_length(spec, 1e-2)
    assert spec.bound(R) == pytest.approx(1e-2)
    with pytest.raises(ValueError):
        PotentialSpec.well(-1, 1.0).bound(1.0)


def test_table_family_shape_check():
    g = Grid(1, 4, 1.0)
    V = sample_potential(PotentialSpec.table([1, 2, 3, 4]), g)
    assert np.allclose(V.flat, [1, 2, 3, 4])
    with pytest.raises(ValueError):
        sample_potential(PotentialSpec.table([1, 2, 3]), g)


def test_random_steps_reproducible_and_constrained():
    g = Grid(1, 256, 8.0)
    a = sample_potential(PotentialSpec.random_steps(11, 1.2), g)
    b = sample_potential(PotentialSpec.random_steps(11, 1.2), g)
    c = sample_potential(PotentialSpec.random_steps(12, 1.2), g)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.sup() <= 2.0 + 1e-15
    inside = np.abs(g.axis()) < 1.2
    assert np.all(a.flat[~inside] == 0)
    vals = a.flat[inside]
    assert np.all(np.abs(vals.imag) > np.abs(vals.real))
    with pytest.raises(ValueError):
        sample_potential(PotentialSpec.random_steps(1), Grid(2, 8, 2.0))


def test_constructor_validation():
    with pytest.raises(ValueError):
        PotentialSpec.power_decay(0.0, 2.0)
    with pytest.raises(ValueError):
        PotentialSpec.well(-1, 0.0)
    with pytest.raises(ValueError):
        PotentialSpec.gaussian(1, -1.0)
    with pytest.raises(ValueError):
        PotentialSpec.random_steps(0, segments=0)


def test_resolvent_singularity_detected():
    g = Grid(1, 8, 2.0)
    mu = float(np.sort(g.symbol())[3])
    dist, nearest = resolvent_distance(g, mu + 1e-3)
    assert dist == pytest.approx(1e-3) and nearest == pytest.approx(mu)
    with pytest.raises(SingularResolventError) as info:
        check_resolvent(g, mu)
    assert info.value.mu == pytest.approx(mu)
    check_resolvent(g, -1.0)


def test_spectral_projection_is_idempotent_and_low_pass():
    g = Grid(1, 32, 8.0)
    u = GridFunction(g, np.random.default_rng(1).normal(size=32))
    P = spectral_projection_low(u)
    assert np.allclose(spectral_projection_low(P).values, P.values)
    coeffs = g.fft(P.values)
    assert np.allclose(coeffs[g.symbol() > 1.0], 0.0)
    # (pi/8)^2 * m^2 <= 1 keeps |m| <= 2
    assert np.count_nonzero(np.abs(coeffs) > 1e-12) <= 5


def test_sample_potential_quiet_inside_range():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sample_potential(PotentialSpec.power_decay(1.0, 1.5), Grid(1, 8, 4.0))
