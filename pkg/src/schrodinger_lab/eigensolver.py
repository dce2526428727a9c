"""Dense and shift-invert eigensolvers with residual certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.optimize import linear_sum_assignment

from .lattice import GridFunction

DENSE_LIMIT = 4096
RESIDUAL_TOL = 1e-8


class EigensolverError(RuntimeError):
    pass


class DenseLimitError(EigensolverError):
    pass


class NonFiniteMatrixError(EigensolverError, ValueError):
    pass


class KrylovStagnationError(EigensolverError):
    def __init__(self, message, achieved_residual=None):
        self.achieved_residual = achieved_residual
        super().__init__(message)


class SingularShiftError(EigensolverError, ArithmeticError):
    pass


@dataclass
class SpectrumResult:
    """A multiset of eigenvalues with residual certificates.

    ``residuals[i]`` is ``||A v - lam v|| / ||v||`` for the certified
    eigenvector of ``eigenvalues[i]``.  ``discarded_near_axis`` keeps the
    eigenvalues removed by the positive-axis filter so nothing is lost
    silently.
    """

    eigenvalues: np.ndarray
    residuals: np.ndarray
    method: str
    discarded_near_axis: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    discarded_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    axis_margin: float | None = None

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=complex)
        self.residuals = np.asarray(self.residuals, dtype=float)
        self.discarded_near_axis = np.asarray(self.discarded_near_axis, dtype=complex)
        self.discarded_residuals = np.asarray(self.discarded_residuals, dtype=float)
        if self.eigenvalues.shape != self.residuals.shape:
            raise ValueError("one residual per eigenvalue is required")

    def __len__(self):
        return self.eigenvalues.size

    @classmethod
    def empty(cls, method="dense"):
        return cls(np.zeros(0, complex), np.zeros(0), method)

    def sorted(self) -> "SpectrumResult":
        order = np.lexsort((self.eigenvalues.imag, self.eigenvalues.real))
        return SpectrumResult(
            self.eigenvalues[order],
            self.residuals[order],
            self.method,
            self.discarded_near_axis,
            self.discarded_residuals,
            self.axis_margin,
        )

    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0


def distance_to_positive_axis(z):
    """Distance from ``z`` to ``[0, inf)``."""
    z = np.asarray(z, dtype=complex)
    return np.where(z.real >= 0, np.abs(z.imag), np.abs(z))


def match_spectra(a, b):
    """Optimal bipartite matching of two eigenvalue lists on ``|a_i - b_j|``.

    Returns ``(rows, cols, distances)``; with unequal counts the shorter
    list is matched completely.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.size == 0 or b.size == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return rows, cols, cost[rows, cols]


def max_matched_distance(a, b) -> float:
    _, _, dist = match_spectra(a, b)
    return float(dist.max()) if dist.size else 0.0


def _residuals(A, vals, vecs):
    R = A @ vecs - vecs * vals
    return np.linalg.norm(R, axis=0) / np.linalg.norm(vecs, axis=0)


def _inverse_iteration(A, lam, v, steps=2):
    n = A.shape[0]
    scale = max(np.linalg.norm(A, 1), 1.0)
    # an exact shift makes the solve singular; nudge by a few ulps of ||A||
    shift = lam + 64 * np.finfo(float).eps * scale
    try:
        lu = sla.lu_factor(A - shift * np.eye(n), check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return v
    x = v
    for _ in range(steps):
        y = sla.lu_solve(lu, x, check_finite=False)
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0:
            break
        x = y / ny
    return x


def dense_eigenvalues(A, dense_limit: int = DENSE_LIMIT, tol: float = RESIDUAL_TOL) -> SpectrumResult:
    """Full spectrum of a dense complex square matrix.

    Residuals come from the LAPACK eigenvectors; any eigenvalue whose
    residual misses ``tol`` gets its vector refined by inverse iteration
    and keeps the better of the two certificates.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n > dense_limit:
        raise DenseLimitError(f"dimension {n} exceeds the dense limit {dense_limit}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteMatrixError("matrix has non-finite entries")
    if n == 0:
        return SpectrumResult.empty("dense")
    vals, vecs = sla.eig(A, check_finite=False)
    res = _residuals(A, vals, vecs)
    for i in np.flatnonzero(~(res < tol)):
        v = _inverse_iteration(A, vals[i], vecs[:, i])
        r = np.linalg.norm(A @ v - vals[i] * v) / np.linalg.norm(v)
        if r < res[i]:
            res[i] = r
    trace_err = abs(vals.sum() - np.trace(A))
    if trace_err > 1e-8 * max(np.linalg.norm(A), 1.0):
        raise EigensolverError(f"trace identity violated by {trace_err:.3e}")
    return SpectrumResult(vals, res, "dense")


def shift_invert_eigenvalues(
    apply,
    dim: int,
    sigma: complex,
    k: int,
    solve=None,
    precondition=None,
    tol: float = RESIDUAL_TOL,
    inner_tol: float = 1e-13,
    maxiter: int | None = None,
) -> SpectrumResult:
    """The ``k`` eigenvalues nearest ``sigma`` of the operator ``x -> apply(x)``.

    ARPACK runs on ``(A - sigma)^{-1}``.  The inner solves use ``solve``
    when given, otherwise GMRES with the optional left preconditioner
    ``precondition`` (a callable approximating ``(A - sigma)^{-1}``).
    """
    if k < 1:
        raise ValueError("k must be positive")
    if k > dim:
        raise ValueError(f"k={k} exceeds the operator dimension {dim}")

    def matvec(x):
        return np.asarray(apply(np.asarray(x, dtype=complex).ravel()), dtype=complex).ravel()

    if k >= dim - 1:
        # ARPACK needs k < dim - 1; materialize tiny operators instead
        A = np.column_stack([matvec(e) for e in np.eye(dim, dtype=complex)])
        full = dense_eigenvalues(A, tol=tol)
        order = np.argsort(np.abs(full.eigenvalues - sigma), kind="stable")[:k]
        return SpectrumResult(full.eigenvalues[order], full.residuals[order], "shift_invert")

    shifted = spla.LinearOperator((dim, dim), matvec=lambda x: matvec(x) - sigma * x, dtype=complex)
    M = None
    if precondition is not None:
        M = spla.LinearOperator((dim, dim), matvec=precondition, dtype=complex)

    def inner(b):
        b = np.asarray(b, dtype=complex).ravel()
        if solve is not None:
            return np.asarray(solve(b), dtype=complex).ravel()
        x, info = spla.gmres(shifted, b, rtol=inner_tol, atol=0.0, restart=min(dim, 60), maxiter=20, M=M)
        if info != 0:
            achieved = np.linalg.norm(shifted @ x - b) / max(np.linalg.norm(b), 1e-300)
            if not np.isfinite(achieved) or achieved > 1e-8:
                raise KrylovStagnationError(
                    f"inner GMRES stalled at relative residual {achieved:.3e}", achieved
                )
        if not np.all(np.isfinite(x)):
            raise SingularShiftError(f"shift {sigma!r} is (numerically) an eigenvalue")
        return x

    op = spla.LinearOperator((dim, dim), matvec=inner, dtype=complex)
    v0 = np.ones(dim, dtype=complex) / math.sqrt(dim)
    try:
        nu, vecs = spla.eigs(op, k=k, which="LM", v0=v0, tol=1e-14, maxiter=maxiter or 20 * dim)
    except spla.ArpackNoConvergence as exc:
        raise KrylovStagnationError(
            f"ARPACK converged {len(exc.eigenvalues)} of {k} eigenvalues"
        ) from exc
    if np.any(nu == 0):
        raise SingularShiftError("shift-inverted operator returned a zero eigenvalue")
    vals = sigma + 1.0 / nu
    res = np.array(
        [np.linalg.norm(matvec(vecs[:, i]) - vals[i] * vecs[:, i]) / np.linalg.norm(vecs[:, i]) for i in range(k)]
    )
    if np.any(~(res < tol)):
        raise KrylovStagnationError(
            f"shift-invert residuals up to {np.nanmax(res):.3e} exceed {tol:.1e}", float(np.nanmax(res))
        )
    order = np.argsort(np.abs(vals - sigma), kind="stable")
    return SpectrumResult(vals[order], res[order], "shift_invert")


def hamiltonian_matrix(V: GridFunction) -> np.ndarray:
    g = V.grid
    H = g.laplacian_matrix().astype(complex)
    H[np.diag_indices_from(H)] += V.flat
    return H


def leakage_margin(V: GridFunction) -> float:
    """Scale of the imaginary parts that box (continuum) states pick up.

    First-order perturbation of a degenerate pair of box modes moves them
    off the real axis by at most ``2 int|V| / (2R)^d``.
    """
    g = V.grid
    return 2.0 * V.integral() / (2.0 * g.R) ** g.d


def default_axis_margin(V: GridFunction) -> float:
    return max(1e-2, 2.0 * leakage_margin(V))


def _split_by_axis(result: SpectrumResult, margin: float) -> SpectrumResult:
    dist = distance_to_positive_axis(result.eigenvalues)
    keep = dist > margin
    return SpectrumResult(
        result.eigenvalues[keep],
        result.residuals[keep],
        result.method,
        result.eigenvalues[~keep],
        result.residuals[~keep],
        margin,
    ).sorted()


def discrete_eigenvalues_offaxis(
    V: GridFunction,
    axis_margin: float | None = None,
    shifts=None,
    k: int = 4,
    dense_limit: int = DENSE_LIMIT,
    tol: float = RESIDUAL_TOL,
) -> SpectrumResult:
    """Eigenvalues of the discretized ``-Laplace + V`` away from ``[0, inf)``.

    Without ``shifts`` the whole spectrum is computed densely.  With a list
    of shifts, ``k`` eigenvalues nearest each shift are found by
    shift-invert with a free-resolvent preconditioner and merged.
    """
    margin = default_axis_margin(V) if axis_margin is None else float(axis_margin)
    g = V.grid
    if shifts is None:
        if g.size > dense_limit:
            raise DenseLimitError(
                f"grid has {g.size} points (dense limit {dense_limit}); supply shifts"
            )
        full = dense_eigenvalues(hamiltonian_matrix(V), dense_limit=dense_limit, tol=tol)
        return _split_by_axis(full, margin)

    vals, res = [], []
    for sigma in shifts:
        sigma = complex(sigma)
        solve, precond = _shifted_solver(V, sigma)
        part = shift_invert_eigenvalues(
            _grid_apply(V), g.size, sigma, k, solve=solve, precondition=precond, tol=tol
        )
        previous = list(vals)
        for lam, r in zip(part.eigenvalues, part.residuals):
            scale = max(1.0, abs(lam))
            if all(abs(lam - other) > 1e-9 * scale for other in previous):
                vals.append(lam)
                res.append(r)
    merged = SpectrumResult(np.array(vals, complex), np.array(res), "shift_invert")
    return _split_by_axis(merged, margin)


def _grid_apply(V: GridFunction):
    g = V.grid
    mu = g.symbol()

    def apply(x):
        u = x.reshape(g.shape)
        return (g.ifft(mu * g.fft(u)) + V.values * u).ravel()

    return apply


def _shifted_solver(V: GridFunction, sigma: complex, woodbury_limit: int = 2048):
    """Inner solver for ``(H - sigma) x = b`` on a grid.

    When ``V`` has at most ``woodbury_limit`` nonzero samples the solve is
    exact: ``(H - sigma)^{-1} = R0 - R0 P (V_S^{-1} + P R0 P)^{-1} P R0``
    with ``R0`` the free resolvent and ``P`` the support restriction.
    Otherwise GMRES is used with ``R0`` as preconditioner.
    """
    g = V.grid
    mu = g.symbol()
    denom = mu - sigma
    if np.min(np.abs(denom)) == 0:
        raise SingularShiftError(f"shift {sigma!r} is a free Laplacian eigenvalue")

    def r0(b):
        return g.ifft(g.fft(np.asarray(b).reshape(g.shape)) / denom).ravel()

    support = np.flatnonzero(V.flat != 0)
    if support.size == 0:
        return r0, None
    if support.size > woodbury_limit:
        return None, r0
    cols = np.zeros((support.size, g.size), dtype=complex)
    cols[np.arange(support.size), support] = 1.0
    images = g.ifft(g.fft(cols.reshape((support.size,) + g.shape)) / denom).reshape(support.size, g.size)
    core = images[:, support].T + np.diag(1.0 / V.flat[support])
    try:
        lu = sla.lu_factor(core)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularShiftError(f"shift {sigma!r} is (numerically) an eigenvalue") from exc

    def solve(b):
        y = r0(b)
        z = sla.lu_solve(lu, y[support])
        return y - images.T @ z

    return solve, None
