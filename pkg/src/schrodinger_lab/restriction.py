"""Fourier restriction to spheres as finite quadrature operators.

``Gamma_rho`` maps ``u`` to ``(2 pi)^{-d/2} int e^{-i rho theta.x} W(x) u(x) dx``
sampled at quadrature nodes ``theta`` on the unit sphere; the codomain
carries the surface measure of the sphere of radius ``rho``.  Every
operator here is stored through its *Gram factor*

    B_rho = diag(sqrt(rho^{d-1} w)) Gamma_rho h^{-d/2},

an isometric re-expression in which ``||Gamma_rho|| = ||B_rho||_2`` and
``G_rho = Gamma_rho^* Gamma_rho`` is the ``l^2`` matrix ``B^H B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Grid, GridFunction

NYQUIST_FRACTION = 0.8


class AliasingError(ValueError):
    """A sphere radius beyond the grid's resolvable band was requested."""


class ParameterError(ValueError):
    pass


def sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _default_count(rho: float) -> int:
    return max(64, math.ceil(8.0 * rho))


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Nodes and positive weights on the unit sphere ``S^{d-1}``.

    ``weights`` sum to the area of the unit sphere; the sphere of radius
    ``radius`` is handled by the ``radius^{d-1}`` surface factor.
    """

    radius: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def surface_weights(self) -> np.ndarray:
        return self.radius ** (self.d - 1) * self.weights


def sphere_quadrature(d: int, radius: float, count: int | None = None) -> SphereQuadrature:
    """Quadrature on the unit sphere sized for oscillations at frequency ``radius``.

    d=1 uses the two points +-1; d=2 ``count`` equispaced angles
    (default ``max(64, ceil(8 radius))``); d=3 a Gauss-Legendre rule in
    ``cos(theta)`` times equispaced azimuths with the same density.
    """
    if not radius > 0:
        raise ValueError(f"sphere radius must be positive, got {radius}")
    if d == 1:
        nodes = np.array([[1.0], [-1.0]])
        weights = np.ones(2)
    elif d == 2:
        m = count or _default_count(radius)
        phi = 2.0 * np.pi * np.arange(m) / m
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        weights = np.full(m, 2.0 * np.pi / m)
    elif d == 3:
        m = count or _default_count(radius)
        mt = max(16, m // 2)
        t, wt = np.polynomial.legendre.leggauss(mt)
        phi = 2.0 * np.pi * np.arange(m) / m
        st = np.sqrt(1.0 - t**2)
        nodes = np.stack(
            [
                np.outer(st, np.cos(phi)).ravel(),
                np.outer(st, np.sin(phi)).ravel(),
                np.repeat(t, m),
            ],
            axis=-1,
        )
        weights = np.repeat(wt, m) * (2.0 * np.pi / m)
    else:
        raise ValueError(f"unsupported dimension {d}")
    return SphereQuadrature(float(radius), nodes, weights)


@dataclass(frozen=True, eq=False)
class RestrictionOperator:
    """Quadrature realization of ``Gamma_rho`` for a weight ``W``.

    ``gamma`` has one row per quadrature node and one column per retained
    grid point; ``columns`` records which grid points those are.
    """

    rho: float
    quadrature: SphereQuadrature
    weight: np.ndarray = field(repr=False)
    columns: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    cell_volume: float

    @property
    def d(self) -> int:
        return self.quadrature.d

    def gram_factor(self) -> np.ndarray:
        sw = np.sqrt(self.quadrature.surface_weights)
        return sw[:, None] * self.gamma / math.sqrt(self.cell_volume)

    def y_matrix(self) -> np.ndarray:
        """``Y_rho = U_rho Gamma_rho`` on unit-sphere nodes (weights not folded in)."""
        return self.rho ** ((self.d - 1) / 2) * self.gamma

    def y_gram_factor(self) -> np.ndarray:
        sw = np.sqrt(self.quadrature.weights)
        return sw[:, None] * self.y_matrix() / math.sqrt(self.cell_volume)

    def norm(self) -> float:
        return _spectral_norm(self.gram_factor())

    def y_norm(self) -> float:
        return _spectral_norm(self.y_gram_factor())

    def g_matrix(self) -> np.ndarray:
        """``G_rho = Gamma^* Gamma`` as a matrix on the retained grid points."""
        B = self.gram_factor()
        return B.conj().T @ B

    def g_norm(self) -> float:
        return self.norm() ** 2


def _spectral_norm(B: np.ndarray) -> float:
    if B.size == 0:
        return 0.0
    small = B @ B.conj().T if B.shape[0] <= B.shape[1] else B.conj().T @ B
    return math.sqrt(max(float(np.linalg.eigvalsh(small)[-1]), 0.0))


def _weight_samples(W) -> tuple:
    if isinstance(W, GridFunction):
        w = W.values
        if np.any(np.abs(w.imag) > 0) or np.any(w.real < 0):
            raise ValueError("restriction weight W must be real and nonnegative")
        return W.grid, w.real.ravel()
    raise TypeError("W must be a GridFunction")


def build_gamma(W: GridFunction, rho: float, quad: SphereQuadrature | None = None, columns=None) -> RestrictionOperator:
    """Assemble ``Gamma_rho`` with entries ``(2pi)^{-d/2} e^{-i rho theta_k.x_j} W(x_j) h^d``."""
    grid, w = _weight_samples(W)
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if quad is None:
        quad = sphere_quadrature(grid.d, rho)
    elif quad.d != grid.d:
        raise ValueError(f"quadrature dimension {quad.d} does not match grid dimension {grid.d}")
    if columns is None:
        columns = np.arange(grid.size)
    columns = np.asarray(columns)
    x = grid.points()[columns]
    phase = np.exp(-1j * rho * (quad.nodes @ x.T))
    gamma = (2.0 * np.pi) ** (-grid.d / 2) * phase * (w[columns] * grid.cell_volume)[None, :]
    return RestrictionOperator(float(rho), quad, w[columns], columns, gamma, grid.cell_volume)


def nyquist_cap(grid: Grid) -> float:
    return NYQUIST_FRACTION * grid.nyquist


def _guard(grid: Grid, rho: float):
    cap = nyquist_cap(grid)
    if rho > cap:
        raise AliasingError(f"rho={rho} exceeds the aliasing cap {cap:.4g} = 0.8 pi/h")


def g_difference_norm(a: RestrictionOperator, b: RestrictionOperator) -> float:
    """``||G_a - G_b||`` through the stacked Gram factors (no N x N matrices)."""
    Ba, Bb = a.gram_factor(), b.gram_factor()
    C = np.vstack([Ba, Bb])
    if C.size == 0:
        return 0.0
    sign = np.concatenate([np.ones(Ba.shape[0]), -np.ones(Bb.shape[0])])
    # nonzero spectrum of C^H J C equals that of R J R^H where C^H = Q R
    r = np.linalg.qr(C.conj().T, mode="r")
    core = (r * sign[None, :]) @ r.conj().T
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (core + core.conj().T)))))


@dataclass
class GammaProfile:
    rho: np.ndarray
    norms: np.ndarray
    slope: float


def gamma_norm_profile(W: GridFunction, rho_list) -> GammaProfile:
    """``||Gamma_rho||`` over ``rho_list`` and the fitted log-log slope."""
    grid, _ = _weight_samples(W)
    rho = np.asarray(rho_list, dtype=float)
    if rho.size == 0:
        raise ValueError("empty rho list")
    if np.any(rho < 1.0):
        raise ValueError("profile radii must satisfy rho >= 1")
    for r in rho:
        _guard(grid, r)
    norms = np.array([build_gamma(W, r).norm() for r in rho])
    slope = float("nan")
    if rho.size >= 2 and np.all(norms > 0):
        slope = float(np.polyfit(np.log(rho), np.log(norms), 1)[0])
    return GammaProfile(rho, norms, slope)


@dataclass
class HolderReport:
    rho: float
    rho_prime: float
    y_difference: float
    g_difference: float
    y_ratio: float
    g_ratio: float


def holder_modulus(W: GridFunction, rho: float, rho_prime: float, params) -> HolderReport:
    """Moduli ``||Y_rho' - Y_rho||``, ``||G_rho' - G_rho||`` and their ratios
    against ``|rho'-rho|^alpha rho^delta (rho^eps + rho'^eps)`` (squared
    bracket for ``G``), all with unit constant.
    """
    grid, _ = _weight_samples(W)
    if not 1.0 <= rho <= rho_prime:
        raise ParameterError(f"need 1 <= rho <= rho', got rho={rho}, rho'={rho_prime}")
    if not params.alpha < params.l - 0.5:
        raise ParameterError(f"alpha={params.alpha} must be below l - 1/2 = {params.l - 0.5}")
    _guard(grid, rho_prime)
    if rho_prime == rho:
        return HolderReport(rho, rho_prime, 0.0, 0.0, 0.0, 0.0)
    # both Y operators live on the unit sphere, so share the finer node set
    quad = sphere_quadrature(grid.d, rho_prime)
    a = build_gamma(W, rho, SphereQuadrature(rho, quad.nodes, quad.weights))
    b = build_gamma(W, rho_prime, quad)
    dy = _spectral_norm(b.y_gram_factor() - a.y_gram_factor())
    dg = g_difference_norm(b, a)
    eps, alpha, delta = params.eps, params.alpha, params.delta
    base = abs(rho_prime - rho) ** alpha * rho**delta
    bracket = rho**eps + rho_prime**eps
    return HolderReport(rho, rho_prime, dy, dg, dy / (base * bracket), dg / (base * bracket**2))


@dataclass
class ShellReport:
    """Exact shell regrouping of ``X`` and its binned quadrature surrogate."""

    exact: np.ndarray
    dense: np.ndarray
    exact_error: float
    binned: np.ndarray | None
    binned_error: float | None
    bins: int
    flagged_bins: list


def _shell_groups(grid: Grid, decimals: int = 9):
    mu = grid.symbol().ravel()
    keys = np.round(mu, decimals)
    uniq, inverse = np.unique(keys, return_inverse=True)
    return mu, uniq, inverse


def shell_decomposition(V: GridFunction, lam: complex, bins: int | None = None, support_threshold=None) -> ShellReport:
    """Regroup the frequency sum of ``X(lam)`` by exact spheres ``|xi| = rho``,
    and (with ``bins``) approximate it by ``sum_b G_{rho_b} drho / (rho_b^2 - lam)``.
    """
    from .birman_schwinger import build_bs, support_indices

    grid = V.grid
    S = support_indices(V, support_threshold)
    if S.size == 0:
        zero = np.zeros((0, 0), complex)
        return ShellReport(zero, zero, 0.0, zero if bins else None, 0.0 if bins else None, bins or 0, [])
    dense = build_bs(V, lam, support_threshold).X
    W = np.sqrt(np.abs(V.flat[S]))
    x = grid.points()[S]
    k = grid.wavevectors()
    mu, uniq, inverse = _shell_groups(grid)
    if np.min(np.abs(mu - lam)) <= 1e-10:
        raise ArithmeticError(f"lambda={lam} sits on a discrete Laplacian eigenvalue")
    plane = np.exp(1j * (k @ x.T)) / math.sqrt(grid.size)  # rows e_xi restricted to S
    exact = np.zeros((S.size, S.size), complex)
    for s in range(uniq.size):
        rows = plane[inverse == s]
        shell_mu = mu[inverse == s][0]
        exact += (rows.conj().T @ rows) / (shell_mu - lam)
    exact = W[:, None] * exact * W[None, :]
    exact_error = float(np.linalg.norm(exact - dense, 2))

    binned, binned_error, flagged = None, None, []
    if bins:
        top = math.sqrt(grid.d) * grid.nyquist if grid.d > 1 else grid.nyquist
        edges = np.linspace(0.0, top, bins + 1)
        width = edges[1] - edges[0]
        Wfull = GridFunction(grid, np.sqrt(np.abs(V.values)))
        binned = np.zeros((S.size, S.size), complex)
        for b in range(bins):
            rc = 0.5 * (edges[b] + edges[b + 1])
            if abs(rc**2 - lam) < 2.0 * rc * width:
                flagged.append(b)
            B = build_gamma(Wfull, rc, columns=S).gram_factor()
            binned += (B.conj().T @ B) * (width / (rc**2 - lam))
        binned_error = float(np.linalg.norm(binned - dense, 2))
    return ShellReport(exact, dense, exact_error, binned, binned_error, bins or 0, flagged)


def trace_constant_estimate(l: float, grid: Grid, tol: float = 1e-12, max_iter: int = 10000) -> float:
    """Best constant in ``int_{S_1} |phi|^2 <= C int (|grad^l phi|^2 + |phi|^2)``
    over trigonometric polynomials on ``grid``.

    The ratio of the two quadratic forms has rank at most the number of
    sphere nodes; its top eigenvalue is found by power iteration on the
    node-space operator ``sqrt(w) T A^{-1} T^* sqrt(w)``.
    """
    if not l > 0.5:
        raise ParameterError(f"trace estimate needs l > 1/2, got {l}")
    quad = sphere_quadrature(grid.d, 1.0)
    k = grid.wavevectors()
    weight = 1.0 / (1.0 + np.sum(k**2, axis=1) ** l)
    E = np.exp(1j * (k @ quad.nodes.T))
    sw = np.sqrt(quad.weights)
    M = (E.conj().T * weight[None, :]) @ E / (2.0 * grid.R) ** grid.d
    M = sw[:, None] * M * sw[None, :]
    v = np.ones(M.shape[0], complex) / math.sqrt(M.shape[0])
    est = 0.0
    for _ in range(max_iter):
        y = M @ v
        new = float(np.real(np.vdot(v, y)))
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        v = y / ny
        if abs(new - est) <= tol * abs(new):
            return new
        est = new
    return est
