"""Birman-Schwinger operators as eigenvalue locators.

For ``lam`` off the spectrum of ``-Laplace``, ``lam`` is an eigenvalue of
``-Laplace + V`` iff ``-1`` is an eigenvalue of
``X0 = W (-Laplace - lam)^{-1} W U`` with ``W = |V|^{1/2}`` and
``U = V/|V|``.  On the periodic grid this holds exactly, so the distance
from ``-1`` to ``spec(X0)`` is a sharp indicator.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .lattice import GridFunction, check_resolvent
from .restriction import SphereQuadrature, build_gamma, g_difference_norm, nyquist_cap


class EmptySupportError(ValueError):
    """The potential has no grid point above the support threshold."""


class TauRegimeError(ValueError):
    """``tau = |Re lam|^{1/2} < 1`` or ``|lam| <= 1``: outside the estimate's regime."""


class QuadratureError(RuntimeError):
    pass


def support_indices(V: GridFunction, threshold=None) -> np.ndarray:
    """Flat indices with ``|V| > threshold`` (default ``1e-10 * max|V|``)."""
    mod = np.abs(V.flat)
    if threshold is None:
        threshold = 1e-10 * (float(mod.max()) if mod.size else 0.0)
    return np.flatnonzero(mod > threshold)


@dataclass(frozen=True, eq=False)
class BSOperator:
    lam: complex
    support: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)

    @property
    def X0(self) -> np.ndarray:
        return self.X * self.phase[None, :]

    def norm(self) -> float:
        return float(np.linalg.norm(self.X, 2)) if self.X.size else 0.0


class _Kernel:
    """Translation-invariant free resolvent kernel gathered on a support set."""

    def __init__(self, V: GridFunction, threshold=None):
        self.grid = g = V.grid
        self.support = support_indices(V, threshold)
        vals = V.flat[self.support]
        mod = np.abs(vals)
        self.W = np.sqrt(mod)
        self.phase = vals / mod if vals.size else vals
        idx = np.array(np.unravel_index(self.support, g.shape))
        diff = (idx[:, :, None] - idx[:, None, :]) % g.n
        self.offsets = np.ravel_multi_index(tuple(diff), g.shape) if vals.size else np.zeros((0, 0), int)
        self.delta = np.zeros(g.shape)
        self.delta[(0,) * g.d] = 1.0
        self.delta_hat = g.fft(self.delta)
        self.mu = g.symbol()

    def operator(self, lam: complex) -> BSOperator:
        g = self.grid
        lam = complex(lam)
        check_resolvent(g, lam)
        if self.support.size == 0:
            raise EmptySupportError("potential vanishes on the whole grid (empty support)")
        column = g.ifft(self.delta_hat / (self.mu - lam)).ravel()
        K = column[self.offsets]
        X = self.W[:, None] * K * self.W[None, :]
        return BSOperator(lam, self.support, X, self.phase)


def build_bs(V: GridFunction, lam: complex, support_threshold=None) -> BSOperator:
    """``X = W (-Laplace - lam)^{-1} W`` restricted to the support of ``V``."""
    return _Kernel(V, support_threshold).operator(lam)


def _indicator(op: BSOperator, method: str) -> float:
    if method == "eig":
        ev = np.linalg.eigvals(op.X0)
        return float(np.min(np.abs(ev + 1.0)))
    if method == "resolvent":
        n = op.X.shape[0]
        return float(np.linalg.svd(op.X0 + np.eye(n), compute_uv=False)[-1])
    raise ValueError(f"unknown indicator method {method!r}")


def bs_indicator(V: GridFunction, lam: complex, support_threshold=None, method: str = "eig") -> float:
    """``min |mu + 1|`` over eigenvalues ``mu`` of ``X0(lam)``; 1 for empty support.

    ``method="resolvent"`` returns ``1 / ||(X0 + 1)^{-1}||`` instead.
    """
    try:
        op = build_bs(V, lam, support_threshold)
    except EmptySupportError:
        return 1.0
    return _indicator(op, method)


def bs_norm(V: GridFunction, lam: complex, support_threshold=None) -> float:
    """Largest singular value of ``X(lam)``."""
    try:
        return build_bs(V, lam, support_threshold).norm()
    except EmptySupportError:
        return 0.0


@dataclass
class ScanResult:
    re: np.ndarray
    im: np.ndarray
    field: np.ndarray
    errors: list

    def minimum(self):
        i, j = np.unravel_index(np.nanargmin(self.field), self.field.shape)
        return complex(self.re[j], self.im[i]), float(self.field[i, j])

    def local_minima(self, below: float = np.inf) -> list:
        """Lattice points not exceeded by any of their 8 neighbours, sorted by value."""
        f = np.where(np.isnan(self.field), np.inf, self.field)
        padded = np.pad(f, 1, constant_values=np.inf)
        ni, nj = f.shape
        is_min = np.ones_like(f, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di or dj:
                    is_min &= f <= padded[1 + di : 1 + di + ni, 1 + dj : 1 + dj + nj]
        out = [
            (complex(self.re[j], self.im[i]), float(f[i, j]))
            for i, j in zip(*np.nonzero(is_min & (f < below)))
        ]
        return sorted(out, key=lambda t: (t[1], t[0].real, t[0].imag))


def scan_lattice(re_min, re_max, im_min, im_max, resolution):
    nre, nim = resolution
    re = np.linspace(re_min, re_max, nre) if nre > 1 else np.array([0.5 * (re_min + re_max)])
    im = np.linspace(im_min, im_max, nim) if nim > 1 else np.array([0.5 * (im_min + im_max)])
    return re, im


def scan_plane(V: GridFunction, region, resolution, threads: int | None = None, support_threshold=None, method="eig") -> ScanResult:
    """Indicator field over a rectangular lattice in the complex plane.

    ``region`` is ``(re_min, re_max, im_min, im_max)`` and ``resolution``
    ``(n_re, n_im)``.  A point that fails (e.g. sits on a Laplacian
    eigenvalue) yields NaN and an entry in ``errors``; the scan continues.
    """
    re, im = scan_lattice(*region, resolution)
    points = [complex(x, y) for y in im for x in re]
    kernel = _Kernel(V, support_threshold)
    empty = kernel.support.size == 0

    def evaluate(lam):
        if empty:
            return 1.0, None
        try:
            return _indicator(kernel.operator(lam), method), None
        except Exception as exc:  # recorded per point
            return float("nan"), f"{lam}: {exc}"

    if threads == 1:
        results = list(map(evaluate, points))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(evaluate, points))
    field_ = np.array([r[0] for r in results]).reshape(im.size, re.size)
    errors = [r[1] for r in results if r[1] is not None]
    return ScanResult(re, im, field_, errors)


@dataclass
class LocateResult:
    lam: complex
    indicator: float
    converged: bool
    iterations: int


def locate_eigenvalue(
    V: GridFunction,
    lam0: complex,
    tol: float = 1e-8,
    max_iter: int = 60,
    radius: float = 1.0,
    support_threshold=None,
) -> LocateResult:
    """Refine ``lam0`` to a root of ``mu(lam) + 1``, ``mu`` the eigenvalue of
    ``X0(lam)`` nearest ``-1``, by the secant method.

    Iterates leaving the disc of ``radius`` about ``lam0`` count as
    non-convergence; the best point seen is returned with the flag.
    """
    kernel = _Kernel(V, support_threshold)
    if kernel.support.size == 0:
        return LocateResult(complex(lam0), 1.0, False, 0)

    def f(lam):
        ev = np.linalg.eigvals(kernel.operator(lam).X0)
        return ev[np.argmin(np.abs(ev + 1.0))] + 1.0

    lam0 = complex(lam0)
    best = (lam0, abs(f(lam0)))
    if best[1] < tol:
        return LocateResult(lam0, float(best[1]), True, 0)
    a = lam0
    b = lam0 + 1e-3 * max(1.0, abs(lam0)) * (1 + 1j) / math.sqrt(2)
    fa = f(a)
    fb = f(b)
    for it in range(1, max_iter + 1):
        if abs(fb) < best[1]:
            best = (b, abs(fb))
        if abs(fb) < 1e-3 * tol:
            break
        denom = fb - fa
        if denom == 0:
            break
        c = b - fb * (b - a) / denom
        if not np.isfinite(c) or abs(c - lam0) > radius:
            return LocateResult(best[0], float(best[1]), bool(best[1] < tol), it)
        try:
            fc = f(c)
        except ArithmeticError:
            c = c + 1e-7 * (1 + 1j)
            fc = f(c)
        if abs(c - b) <= 4 * np.finfo(float).eps * max(1.0, abs(c)):
            a, fa, b, fb = b, fb, c, fc
            if abs(fb) < best[1]:
                best = (b, abs(fb))
            break
        a, fa, b, fb = b, fb, c, fc
    return LocateResult(best[0], float(best[1]), bool(best[1] < tol), it)


def shell_weight_integral(lam: complex, lower: float = 1.0) -> complex:
    """``int_lower^inf d rho / (rho^2 - lam)`` by adaptive quadrature."""
    lam = complex(lam)

    def part(fn):
        val, err = integrate.quad(fn, lower, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)
        return val

    re = part(lambda r: (1.0 / (r * r - lam)).real)
    im = part(lambda r: (1.0 / (r * r - lam)).imag)
    return complex(re, im)


@dataclass
class TauSplitReport:
    lam: complex
    tau: float
    holder_term: float
    middle_term: float
    low_term: float
    tail: float
    quad_error: float
    g_tau_norm: float
    v_sup: float
    bs_norm: float
    notes: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.holder_term + self.middle_term + self.low_term

    @property
    def holds(self) -> bool:
        return self.bs_norm <= self.total + self.quad_error


def tau_split_bound(V: GridFunction, lam: complex, params=None, rho_cap: float | None = None, support_threshold=None) -> TauSplitReport:
    """Evaluate the three-term split of ``||X(lam)||`` around ``tau = (Re lam)^{1/2}``.

    Terms: ``int_1^inf ||G_rho - G_tau|| / |rho^2 - lam| d rho`` (adaptive
    quadrature up to the aliasing cap plus a tail bound using the largest
    sampled ``||G_rho||``), ``pi ||G_tau|| / (2 |lam|^{1/2})`` and
    ``(||V||_inf + ||G_tau||) / (|lam| - 1)``.  ``params`` is echoed only.
    """
    lam = complex(lam)
    if not (lam.real > 0 and abs(lam) > 1):
        raise TauRegimeError(f"need Re lam > 0 and |lam| > 1, got {lam}")
    tau = math.sqrt(abs(lam.real))
    if tau < 1:
        raise TauRegimeError(f"tau = |Re lam|^(1/2) = {tau:.4g} < 1")
    grid = V.grid
    S = support_indices(V, support_threshold)
    Wf = V.modulus_root()
    cap = nyquist_cap(grid) if rho_cap is None else float(rho_cap)
    if cap <= tau:
        raise TauRegimeError(f"tau={tau:.4g} lies beyond the aliasing cap {cap:.4g}")

    def gamma(rho, quad=None):
        return build_gamma(Wf, rho, quad, columns=S)

    g_tau = gamma(tau)
    g_tau_norm = g_tau.g_norm()
    sampled = [g_tau_norm]

    def integrand(rho):
        op = gamma(rho)
        sampled.append(op.g_norm())
        if grid.d > 1:
            q = op.quadrature
            ref = gamma(tau, SphereQuadrature(tau, q.nodes, q.weights))
        else:
            ref = g_tau
        return g_difference_norm(op, ref) / abs(rho * rho - lam)

    pts = [tau] if 1.0 < tau < cap else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        holder, err = integrate.quad(integrand, 1.0, cap, points=pts, limit=200, epsabs=1e-10, epsrel=1e-8)
    notes = [str(w.message).strip().splitlines()[0] for w in caught]
    if not np.isfinite(holder):
        raise QuadratureError("holder-term quadrature diverged")
    g_max = max(sampled)
    tail, tail_err = integrate.quad(lambda r: 1.0 / abs(r * r - lam), cap, np.inf)
    tail *= g_max + g_tau_norm
    v_sup = V.sup()
    middle = math.pi * g_tau_norm / (2.0 * math.sqrt(abs(lam)))
    low = (v_sup + g_tau_norm) / (abs(lam) - 1.0)
    return TauSplitReport(
        lam=lam,
        tau=tau,
        holder_term=holder + tail,
        middle_term=middle,
        low_term=low,
        tail=tail,
        quad_error=err + tail_err * (g_max + g_tau_norm),
        g_tau_norm=g_tau_norm,
        v_sup=v_sup,
        bs_norm=bs_norm(V, lam, support_threshold),
        notes=notes,
    )
