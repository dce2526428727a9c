"""Periodic-box discretization of R^d and Fourier-diagonal operators on it.

The box is ``[-R, R)^d`` sampled with ``n`` points per axis.  All operators
act in the orthonormal discrete Fourier basis, where ``-Laplace`` is the
multiplier ``mu(xi) = |xi|^2`` (or the finite-difference dispersion when
``multiplier="fd"``).
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class GridMismatchError(ValueError):
    """Two grid functions live on different grids."""


class SingularResolventError(ArithmeticError):
    """The spectral parameter sits on (or too close to) a Laplacian eigenvalue."""

    def __init__(self, lam, mu, distance):
        self.lam = lam
        self.mu = mu
        self.distance = distance
        super().__init__(
            f"lambda={lam!r} is within {distance:.3e} of the discrete "
            f"Laplacian eigenvalue mu={mu!r}"
        )


RESOLVENT_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Periodic grid on ``[-R, R)^d`` with ``n`` points per axis."""

    d: int
    n: int
    R: float
    multiplier: str = "exact"

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 2 or self.n % 2:
            raise ValueError(f"points per axis must be a positive even integer, got {self.n}")
        if not self.R > 0:
            raise ValueError(f"half length must be positive, got {self.R}")
        if self.multiplier not in ("exact", "fd"):
            raise ValueError(f"multiplier must be 'exact' or 'fd', got {self.multiplier!r}")

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def nyquist(self) -> float:
        """Largest resolvable frequency ``pi / h``."""
        return math.pi / self.h

    def axis(self) -> np.ndarray:
        return -self.R + self.h * np.arange(self.n)

    def axis_frequencies(self) -> np.ndarray:
        """Frequencies ``pi m / R`` in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def coordinates(self) -> list:
        return np.meshgrid(*([self.axis()] * self.d), indexing="ij")

    def points(self) -> np.ndarray:
        """Grid points as an ``(n^d, d)`` array in C order."""
        return np.stack([c.ravel() for c in self.coordinates()], axis=-1)

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coordinates()))

    def wavevectors(self) -> np.ndarray:
        """Frequency vectors as an ``(n^d, d)`` array in FFT (C) order."""
        k = np.meshgrid(*([self.axis_frequencies()] * self.d), indexing="ij")
        return np.stack([c.ravel() for c in k], axis=-1)

    def symbol(self) -> np.ndarray:
        """The multiplier of ``-Laplace`` on the FFT-ordered frequency array."""
        k = self.axis_frequencies()
        if self.multiplier == "exact":
            per_axis = k**2
        else:
            per_axis = 4.0 * np.sin(0.5 * k * self.h) ** 2 / self.h**2
        mu = np.zeros(self.shape)
        for ax in range(self.d):
            idx = [None] * self.d
            idx[ax] = slice(None)
            mu = mu + per_axis[tuple(idx)]
        return mu

    def frequencies(self) -> np.ndarray:
        """Integer frequency vectors ``m`` in lexicographic order, ``(n^d, d)``.

        ``xi = pi m / R``.  This ordering is the one used for serialized
        operators.
        """
        half = self.n // 2
        rng = range(-half, half)
        return np.array(list(itertools.product(rng, repeat=self.d)), dtype=int)

    def symbol_lexicographic(self) -> np.ndarray:
        m = self.frequencies()
        xi = np.pi * m / self.R
        if self.multiplier == "exact":
            return np.sum(xi**2, axis=1)
        return np.sum(4.0 * np.sin(0.5 * xi * self.h) ** 2, axis=1) / self.h**2

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values, axes=self._axes(values), norm="ortho")

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(coeffs, axes=self._axes(coeffs), norm="ortho")

    def _axes(self, arr: np.ndarray) -> tuple:
        return tuple(range(arr.ndim - self.d, arr.ndim))

    def fourier_mode(self, m) -> "GridFunction":
        """Unit-norm (in the weighted L^2 sense) plane wave ``e^{i xi x}``, ``xi = pi m / R``."""
        m = np.atleast_1d(np.asarray(m, dtype=float))
        if m.shape != (self.d,):
            raise ValueError(f"mode index must have {self.d} components")
        phase = sum(np.pi * mi / self.R * c for mi, c in zip(m, self.coordinates()))
        values = np.exp(1j * phase) / math.sqrt(self.size * self.cell_volume)
        return GridFunction(self, values)

    def laplacian_matrix(self) -> np.ndarray:
        """Dense ``-Laplace`` on the grid, acting on flattened value vectors."""
        N = self.size
        eye = np.eye(N).reshape((N,) + self.shape)
        cols = self.ifft(self.symbol() * self.fft(eye)).reshape(N, N)
        # column j of the operator is the image of e_j; the symbol is even so the result is real
        return np.ascontiguousarray(cols.T.real)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples of a function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.size != self.grid.size:
            raise ValueError(
                f"expected {self.grid.size} samples for grid {self.grid.shape}, got {vals.size}"
            )
        vals = vals.reshape(self.grid.shape)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def norm(self) -> float:
        """Weighted L^2 norm ``(h^d sum |u|^2)^{1/2}``."""
        return math.sqrt(self.grid.cell_volume * float(np.sum(np.abs(self.values) ** 2)))

    def fourier_norm(self) -> float:
        coeffs = self.grid.fft(self.values)
        return math.sqrt(self.grid.cell_volume * float(np.sum(np.abs(coeffs) ** 2)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self, power: float = 1.0) -> float:
        """Riemann sum of ``|u|^power`` over the box."""
        return self.grid.cell_volume * float(np.sum(np.abs(self.values) ** power))

    def modulus_root(self) -> "GridFunction":
        """``W = |V|^{1/2}``."""
        return GridFunction(self.grid, np.sqrt(np.abs(self.values)))

    def phase(self) -> "GridFunction":
        """``V/|V|``, with phase 1 where ``V = 0``."""
        mod = np.abs(self.values)
        ph = np.ones_like(self.values)
        nz = mod > 0
        ph[nz] = self.values[nz] / mod[nz]
        return GridFunction(self.grid, ph)

    def __add__(self, other):
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, GridFunction):
            _check_same_grid(self, c)
            return GridFunction(self.grid, self.values * c.values)
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__


def _check_same_grid(a: GridFunction, b: GridFunction):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True)
class PotentialSpec:
    """A symbolic potential family.

    Use the constructors :meth:`power_decay`, :meth:`well`, :meth:`gaussian`
    and :meth:`table` rather than building instances directly.
    """

    family: str
    params: tuple = ()

    @classmethod
    def power_decay(cls, L: float, p: float, theta: float = 0.0):
        """``V(x) = L (1+|x|^2)^{-p/2} e^{i theta}``."""
        if not L > 0:
            raise ValueError(f"L must be positive, got {L}")
        return cls("power_decay", (("L", float(L)), ("p", float(p)), ("theta", float(theta))))

    @classmethod
    def well(cls, depth: complex, radius: float, center=None):
        """``depth`` on the closed ball of ``radius`` about ``center``, zero elsewhere."""
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        c = None if center is None else tuple(float(v) for v in np.atleast_1d(center))
        return cls("well", (("depth", complex(depth)), ("radius", float(radius)), ("center", c)))

    @classmethod
    def gaussian(cls, amplitude: complex, width: float):
        """``amplitude * exp(-|x|^2 / (2 width^2))``."""
        if not width > 0:
            raise ValueError(f"width must be positive, got {width}")
        return cls("gaussian", (("amplitude", complex(amplitude)), ("width", float(width))))

    @classmethod
    def random_steps(cls, seed: int, half_width: float = 1.0, segments: int = 5, max_modulus: float = 2.0):
        """Seeded piecewise-constant complex potential on ``[-half_width, half_width)``.

        Real parts are drawn from ``[-0.4, 0] * max_modulus`` and imaginary
        parts from ``+-[0.4, 0.9] * max_modulus`` with one sign per draw, so
        the imaginary part dominates; moduli are clipped to ``max_modulus``.
        One-dimensional only.
        """
        if not half_width > 0:
            raise ValueError(f"half_width must be positive, got {half_width}")
        if segments < 1:
            raise ValueError(f"segments must be positive, got {segments}")
        return cls(
            "random_steps",
            (("seed", int(seed)), ("half_width", float(half_width)), ("segments", int(segments)),
             ("max_modulus", float(max_modulus))),
        )

    @classmethod
    def table(cls, values):
        arr = np.array(values, dtype=complex)
        arr.setflags(write=False)
        return cls("table", (("values", arr),))

    def __getitem__(self, key):
        return dict(self.params)[key]

    def bound(self, r):
        """Pointwise modulus envelope; for ``power_decay`` this is ``L (1+r^2)^{-p/2}``."""
        if self.family != "power_decay":
            raise ValueError("decay envelope only defined for power_decay")
        return self["L"] * (1.0 + np.asarray(r) ** 2) ** (-self["p"] / 2)


def sample_potential(spec: PotentialSpec, grid: Grid) -> GridFunction:
    """Evaluate a potential family at every grid point."""
    fam = spec.family
    if fam == "power_decay":
        p = spec["p"]
        if not 1.0 < p < 3.0:
            warnings.warn(f"power_decay exponent p={p} lies outside (1, 3)", stacklevel=2)
        r2 = grid.radius() ** 2
        vals = spec["L"] * (1.0 + r2) ** (-p / 2) * np.exp(1j * spec["theta"])
    elif fam == "well":
        center = spec["center"]
        if center is None:
            center = (0.0,) * grid.d
        if len(center) != grid.d:
            raise ValueError(f"well center has dimension {len(center)}, grid has {grid.d}")
        r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coordinates(), center))
        vals = np.where(r2 <= spec["radius"] ** 2, spec["depth"], 0.0 + 0.0j)
    elif fam == "gaussian":
        r2 = grid.radius() ** 2
        vals = spec["amplitude"] * np.exp(-r2 / (2.0 * spec["width"] ** 2))
    elif fam == "random_steps":
        if grid.d != 1:
            raise ValueError("random_steps potentials are one-dimensional")
        vals = _random_steps(grid.axis(), spec["seed"], spec["half_width"], spec["segments"], spec["max_modulus"])
    elif fam == "table":
        vals = spec["values"]
        if vals.size != grid.size or (vals.ndim > 1 and vals.shape != grid.shape):
            raise ValueError(f"table of shape {vals.shape} does not match grid {grid.shape}")
    else:
        raise ValueError(f"unknown potential family {fam!r}")
    return GridFunction(grid, vals)


def _random_steps(x, seed, half_width, segments, max_modulus):
    rng = np.random.default_rng(seed)
    re = -rng.uniform(0.0, 0.4, segments) * max_modulus
    im = rng.choice([-1.0, 1.0]) * rng.uniform(0.4, 0.9, segments) * max_modulus
    levels = re + 1j * im
    mod = np.abs(levels)
    levels = np.where(mod > max_modulus, levels * max_modulus / mod, levels)
    edges = np.linspace(-half_width, half_width, segments + 1)
    seg = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, segments - 1)
    inside = (x >= -half_width) & (x < half_width)
    return np.where(inside, levels[seg], 0.0 + 0.0j)


def default_half_length(spec: PotentialSpec, rel_tol: float = 1e-3) -> float:
    """Smallest ``R`` with ``|V(R)| < rel_tol * L`` for a power-decay family."""
    p = spec["p"]
    return math.sqrt(rel_tol ** (-2.0 / p) - 1.0)


def apply_hamiltonian(V: GridFunction, u: GridFunction) -> GridFunction:
    """``(-Laplace + V) u``."""
    _check_same_grid(V, u)
    g = u.grid
    lap = g.ifft(g.symbol() * g.fft(u.values))
    return GridFunction(g, lap + V.values * u.values)


def resolvent_distance(grid: Grid, lam: complex):
    """Distance from ``lam`` to the discrete Laplacian spectrum and the nearest eigenvalue."""
    mu = grid.symbol().ravel()
    dist = np.abs(mu - lam)
    i = int(np.argmin(dist))
    return float(dist[i]), float(mu[i])


def check_resolvent(grid: Grid, lam: complex, tol: float = RESOLVENT_TOL):
    dist, mu = resolvent_distance(grid, lam)
    if dist <= tol:
        raise SingularResolventError(lam, mu, dist)


def apply_free_resolvent(lam: complex, u: GridFunction) -> GridFunction:
    """``(-Laplace - lam)^{-1} u`` by Fourier-diagonal division."""
    g = u.grid
    check_resolvent(g, lam)
    return GridFunction(g, g.ifft(g.fft(u.values) / (g.symbol() - lam)))


def spectral_projection_low(u: GridFunction, cutoff: float = 1.0) -> GridFunction:
    """Spectral projection of ``-Laplace`` onto ``[0, cutoff]``."""
    g = u.grid
    keep = g.symbol() <= cutoff
    return GridFunction(g, g.ifft(np.where(keep, g.fft(u.values), 0.0)))
