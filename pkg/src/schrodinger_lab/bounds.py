"""Closed-form eigenvalue inequalities evaluated against computed spectra.

Covered: Davies' one-dimensional disc ``|lam| <= (int|V|)^2 / 4``; the
``L^p`` estimate ``|Im lam|^{p-1} <= |lam|^{d/2-1} C int|V|^p`` (with the
fixed constant ``C = 1/2`` when ``p = d = 1``); the sector-complement sum
``sum |z|^gamma`` against ``int |V|^{gamma+d/2}``; strip accumulation sums;
and the disc-confinement alternative for ``|V| <= L (1+|x|^2)^{-p/2}``,
whose unspecified constant is fitted from data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigensolver import SpectrumResult
from .lattice import GridFunction


class BoundParamsError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class BoundParams:
    """Exponent bookkeeping for the disc-confinement estimate.

    ``l = p/2``, ``kappa = (p-1)/2`` and ``delta = l - alpha - 1/2`` are
    derived; ``C=None`` means the constant is to be fitted.
    """

    L: float = 1.0
    p: float = 2.0
    eps: float | None = None
    alpha: float | None = None
    C: float | None = None

    def __post_init__(self):
        if not self.L > 0:
            raise BoundParamsError("L", f"must be positive, got {self.L}")
        if not 1.0 < self.p < 3.0:
            raise BoundParamsError("p", f"must lie in (1, 3), got {self.p}")
        if self.eps is None:
            object.__setattr__(self, "eps", default_eps(self.p))
        if self.alpha is None:
            object.__setattr__(self, "alpha", 0.8 * (self.l - 0.5))
        eps_max = min((1.0 - self.kappa) / 2.0, 0.5)
        if not 0.0 < self.eps < eps_max:
            raise BoundParamsError("eps", f"must lie in (0, {eps_max:.6g}), got {self.eps}")
        if not 0.0 < self.alpha < self.l - 0.5:
            raise BoundParamsError("alpha", f"must lie in (0, l - 1/2) = (0, {self.l - 0.5:.6g}), got {self.alpha}")
        if self.C is not None and not self.C > 0:
            raise BoundParamsError("C", f"must be positive or fitted, got {self.C}")
        if self.delta < 0:
            raise BoundParamsError("alpha", f"gives delta = {self.delta} < 0")
        if abs(self.kappa - (self.alpha + self.delta)) > 8 * np.finfo(float).eps:
            raise BoundParamsError("alpha", "kappa = alpha + delta identity broken")

    @property
    def l(self) -> float:
        return self.p / 2.0

    @property
    def kappa(self) -> float:
        return (self.p - 1.0) / 2.0

    @property
    def delta(self) -> float:
        return self.l - self.alpha - 0.5

    def with_constant(self, C):
        return BoundParams(self.L, self.p, self.eps, self.alpha, C)

    def echo(self) -> dict:
        return {
            "L": self.L, "p": self.p, "l": self.l, "kappa": self.kappa, "eps": self.eps,
            "alpha": self.alpha, "delta": self.delta, "C": self.C,
        }


def default_eps(p: float) -> float:
    kappa = (p - 1.0) / 2.0
    return min((1.0 - kappa) / 2.0, 0.5) / 5.0


@dataclass
class BoundRow:
    lam: complex
    lhs: float
    rhs: float
    uncertainty: float = 0.0

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.uncertainty

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def marginal(self) -> bool:
        return self.passed and self.lhs > self.rhs - self.uncertainty


@dataclass
class BoundReport:
    name: str
    rows: list = field(default_factory=list)
    empirical_constant: float | None = None
    params: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return sum(not r.passed for r in self.rows)

    @property
    def marginal_count(self) -> int:
        return sum(r.marginal for r in self.rows)

    @property
    def vacuous(self) -> bool:
        return not self.rows

    def summary(self) -> dict:
        return {
            "name": self.name,
            "rows": len(self.rows),
            "violations": self.violations,
            "marginal": self.marginal_count,
            "vacuous": self.vacuous,
            "empirical_constant": self.empirical_constant,
            "params": self.params,
        }


def _perturbation_spread(fn, lam: complex, radius: float) -> float:
    """Largest change of ``fn`` over the circle of ``radius`` around ``lam``."""
    if radius <= 0:
        return 0.0
    base = fn(lam)
    angles = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
    spread = 0.0
    for a in angles:
        try:
            spread = max(spread, abs(fn(lam + radius * np.exp(1j * a)) - base))
        except (ValueError, ZeroDivisionError):
            continue
    return spread


def davies_bound(V: GridFunction) -> float:
    """Disc radius ``(int |V| dx)^2 / 4`` for a one-dimensional potential."""
    if V.grid.d != 1:
        raise ValueError(f"the Davies bound is one-dimensional; grid has d={V.grid.d}")
    return 0.25 * V.integral() ** 2


def davies_row(lam: complex, V: GridFunction, residual: float = 0.0) -> BoundRow:
    return BoundRow(complex(lam), abs(lam), davies_bound(V), residual)


def _thm12_admissible(p: float, d: int):
    if d >= 3:
        ok = p >= d / 2
    elif d == 2:
        ok = p > 1
    else:
        ok = p >= 1
    if not ok:
        raise ValueError(f"p={p} is outside the admissible range for d={d}")


def thm12_check(lam: complex, V: GridFunction, p: float, C: float | None = None, residual: float = 0.0) -> BoundRow:
    """Row for ``|Im lam|^{p-1} <= |lam|^{d/2-1} C int |V|^p``.

    For ``p = d = 1`` the constant is fixed at ``1/2`` and any other ``C``
    is rejected.  ``residual`` is propagated as the uncertainty of ``lam``.
    """
    lam = complex(lam)
    d = V.grid.d
    if not lam.real > 0:
        raise ValueError(f"Re lam must be positive, got {lam}")
    _thm12_admissible(p, d)
    if p == 1 and d == 1:
        if C is not None and C != 0.5:
            raise ValueError("the constant is fixed at 1/2 for p = d = 1")
        C = 0.5
    elif C is None:
        raise ValueError("a constant C is required unless p = d = 1")
    integral = V.integral(p)

    def lhs(z):
        return abs(z.imag) ** (p - 1)

    def rhs(z):
        return abs(z) ** (d / 2 - 1) * C * integral

    unc = _perturbation_spread(lambda z: rhs(z) - lhs(z), lam, residual)
    return BoundRow(lam, lhs(lam), rhs(lam), unc)


def sector_filter(eigenvalues, t: float) -> np.ndarray:
    """Eigenvalues outside the open sector ``|Im z| < t Re z``."""
    z = np.asarray(eigenvalues, dtype=complex)
    return z[np.abs(z.imag) >= t * z.real]


def flls_sum(spectrum: SpectrumResult, V: GridFunction, t: float, gamma: float):
    """``(sum_{outside sector} |z|^gamma, int |V|^{gamma + d/2}, ratio)``."""
    if not gamma >= 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    outside = sector_filter(spectrum.eigenvalues, t)
    total = float(np.sum(np.abs(outside) ** gamma))
    integral = V.integral(gamma + V.grid.d / 2)
    if total == 0.0:
        ratio = 0.0
    else:
        ratio = total / integral if integral > 0 else math.inf
    return total, integral, ratio


def accumulation_sum(spectrum: SpectrumResult, a: float, b: float, gamma: float) -> float:
    """``sum |Im z|^gamma`` over eigenvalues with ``a < Re z < b``."""
    if not 0 <= a < b:
        raise ValueError(f"need 0 <= a < b, got a={a}, b={b}")
    z = spectrum.eigenvalues
    strip = z[(z.real > a) & (z.real < b)]
    return float(np.sum(np.abs(strip.imag) ** gamma))


def thm11_terms(lam: complex, params: BoundParams) -> float:
    """The bracket of the disc-confinement inequality, i.e. the rhs with ``C L = 1``."""
    lam = complex(lam)
    if not lam.real > 0:
        raise ValueError(f"Re lam must be positive, got {lam}")
    r = abs(lam)
    if not r > 1:
        raise ValueError(f"|lam| must exceed 1 (condition 1 covers |lam| <= 1), got {r}")
    k, e = params.kappa, params.eps
    return lam.real ** ((k + 2 * e - 1) / 2) + r ** (e - 0.5) + (1 + r**e) / (r - 1)


def thm11_rhs(lam: complex, params: BoundParams) -> float:
    """``C L (|Re lam|^{(kappa+2eps-1)/2} + |lam|^{eps-1/2} + (1+|lam|^eps)/(|lam|-1))``."""
    if params.C is None:
        raise ValueError("thm11_rhs needs a fixed constant C")
    return params.C * params.L * thm11_terms(lam, params)


def is_excluded(lam: complex, params: BoundParams) -> bool:
    lam = complex(lam)
    if not (lam.real > 0 and abs(lam) > 1):
        return False
    return thm11_rhs(lam, params) < 1.0


@dataclass
class ExclusionMask:
    re: np.ndarray
    im: np.ndarray
    excluded: np.ndarray
    covered: np.ndarray


def exclusion_region(params: BoundParams, re_values, im_values) -> ExclusionMask:
    """Lattice mask of points where the disc-confinement rhs drops below 1.

    ``covered`` marks points with ``Re lam > 0`` and ``|lam| > 1``, where the
    inequality applies; uncovered points are never excluded.
    """
    if params.C is None:
        raise ValueError("exclusion_region needs a fixed constant C")
    re = np.asarray(re_values, dtype=float)
    im = np.asarray(im_values, dtype=float)
    Z = re[None, :] + 1j * im[:, None]
    covered = (Z.real > 0) & (np.abs(Z) > 1)
    excluded = np.zeros(Z.shape, dtype=bool)
    for idx in zip(*np.nonzero(covered)):
        excluded[idx] = thm11_rhs(Z[idx], params) < 1.0
    return ExclusionMask(re, im, excluded, covered)


@dataclass
class EmpiricalConstant:
    C: float
    vacuous: bool
    argmax: complex | None
    count: int


def empirical_constant(spectra) -> EmpiricalConstant:
    """Smallest ``C`` making every eigenvalue satisfy one of the two alternatives.

    ``spectra`` is a list of ``(SpectrumResult, BoundParams)``.  Only
    non-real eigenvalues with ``Re lam > 0`` and ``|lam| > 1`` constrain
    ``C``; each contributes ``1 / (rhs with C = 1)``.
    """
    best, arg, count = 0.0, None, 0
    for spectrum, params in spectra:
        unit = params.with_constant(1.0)
        for lam in spectrum.eigenvalues:
            if lam.imag == 0 or not lam.real > 0 or not abs(lam) > 1:
                continue
            count += 1
            c = 1.0 / thm11_rhs(lam, unit)
            if c > best:
                best, arg = c, complex(lam)
    return EmpiricalConstant(best, count == 0, arg, count)


def davies_report(spectrum: SpectrumResult, V: GridFunction) -> BoundReport:
    rows = [davies_row(z, V, r) for z, r in zip(spectrum.eigenvalues, spectrum.residuals)]
    return BoundReport("davies", rows, params={"radius": davies_bound(V)})


def thm12_report(spectrum: SpectrumResult, V: GridFunction, p: float, C: float | None = None) -> BoundReport:
    rows = [
        thm12_check(z, V, p, C, r)
        for z, r in zip(spectrum.eigenvalues, spectrum.residuals)
        if z.real > 0
    ]
    used = 0.5 if (p == 1 and V.grid.d == 1) else C
    return BoundReport("thm12", rows, params={"p": p, "C": used})


def thm11_report(spectrum: SpectrumResult, params: BoundParams) -> BoundReport:
    """Rows for covered eigenvalues (``Re > 0``, ``|lam| > 1``): lhs 1, rhs as displayed."""
    fitted = None
    if params.C is None:
        fitted = empirical_constant([(spectrum, params)])
        params = params.with_constant(fitted.C if not fitted.vacuous else 1.0)
    rows = []
    for z, r in zip(spectrum.eigenvalues, spectrum.residuals):
        if z.imag == 0 or not z.real > 0 or not abs(z) > 1:
            continue
        unc = _perturbation_spread(lambda w: thm11_rhs(w, params), z, min(r, 0.5 * (abs(z) - 1)))
        rows.append(BoundRow(complex(z), 1.0, thm11_rhs(z, params), unc))
    return BoundReport(
        "thm11", rows, fitted.C if fitted else params.C, params=params.echo()
    )
