"""Metzler matrices: validation, irreducibility, Perron-Frobenius data and
the flux/growth decomposition.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NegativeFlux, NoConvergence, NotMetzler, NotSquare, Reducible, InputError

TAU_ZERO = 1e-12
TAU_EIG = 1e-10

# below this gap (relative to ||A||_inf) power iteration is hopeless
_DENSE_FALLBACK_GAP = 1e-6


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetzlerMatrix:
    """Square matrix with nonnegative off-diagonal entries.

    Construct through :func:`validate_metzler`; the constructor itself does
    not check anything.
    """

    entries: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, MetzlerMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __repr__(self):
        return f"MetzlerMatrix({self.entries.tolist()!r})"


@dataclass(frozen=True, eq=False)
class PerronData:
    """Frobenius eigenvalue, Perron vectors and projection of an irreducible
    Metzler matrix.

    ``v_F`` is normalized to unit 1-norm and ``w_F`` scaled so that
    ``w_F @ v_F == 1``; ``P`` is their outer product.
    """

    lambda_F: float
    v_F: NDArray[np.float64]
    w_F: NDArray[np.float64]
    P: NDArray[np.float64]
    gap: float
    iterations: int = 0

    def __post_init__(self):
        for name in ("v_F", "w_F", "P"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class FluxDecomposition:
    """Off-diagonal fluxes ``a_ij`` (type j -> type i) and per-type net
    growth rates ``b_i``.

    ``growth_lo`` is the rounding residue of ``growth`` (``growth +
    growth_lo`` equals the exact column balance), which is what makes the
    round trip through :func:`flux_compose` exact. Leave it at zero when
    building a decomposition by hand.
    """

    fluxes: NDArray[np.float64]
    growth: NDArray[np.float64]
    growth_lo: NDArray[np.float64] | None = None

    def __post_init__(self):
        object.__setattr__(self, "fluxes", _frozen(self.fluxes))
        object.__setattr__(self, "growth", _frozen(self.growth))
        lo = np.zeros_like(self.growth) if self.growth_lo is None else self.growth_lo
        object.__setattr__(self, "growth_lo", _frozen(lo))


def _as_square(M: ArrayLike) -> NDArray[np.float64]:
    a = np.array(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise NotSquare(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    return a


def validate_metzler(M: ArrayLike, context: str = "") -> MetzlerMatrix:
    """Check that ``M`` is Metzler and wrap it.

    Off-diagonal entries in ``(-TAU_ZERO, 0)`` are treated as rounding noise
    and clamped to zero; anything more negative raises :class:`NotMetzler`
    naming the first offending entry.
    """
    if isinstance(M, MetzlerMatrix):
        return M
    a = _as_square(M)
    off = ~np.eye(a.shape[0], dtype=bool)
    bad = off & (a < -TAU_ZERO)
    if bad.any():
        i, j = (int(k) for k in np.argwhere(bad)[0])
        raise NotMetzler((i, j), float(a[i, j]), context)
    a[off & (a < 0)] = 0.0
    return MetzlerMatrix(a)


def is_irreducible(A: MetzlerMatrix | ArrayLike) -> bool:
    """True iff the influence graph (edge j -> i whenever A[i, j] > 0) is
    strongly connected."""
    a = np.asarray(A, dtype=float)
    n = a.shape[0]
    if n == 1:
        return True
    adj = (a > 0) & ~np.eye(n, dtype=bool)

    def reaches_all(edges: NDArray[np.bool_]) -> bool:
        # edges[i, j]: j -> i
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            j = queue.popleft()
            for i in np.flatnonzero(edges[:, j] & ~seen):
                seen[i] = True
                queue.append(i)
        return bool(seen.all())

    return reaches_all(adj) and reaches_all(adj.T)


def dominant_eigenvalue(A: MetzlerMatrix | ArrayLike) -> float:
    """Largest real part of the spectrum, from a dense eigensolver.

    Works for reducible matrices too (where it is still the spectral
    abscissa but the Perron structure may be degenerate).
    """
    return float(np.max(np.linalg.eigvals(np.asarray(A, dtype=float)).real))


def _dense_spectrum(a: NDArray) -> tuple[float, float]:
    lam, gap, _ = _dense_eigen(a)
    return lam, gap


def _dense_eigen(a: NDArray) -> tuple[float, float, NDArray]:
    ev = np.linalg.eigvals(a)
    k = int(np.argmax(ev.real))
    lam = float(ev[k].real)
    rest = np.delete(ev, k)
    gap = math.inf if rest.size == 0 else lam - float(np.max(rest.real))
    return lam, max(gap, 0.0), rest


def _best_shift(lam: float, rest: NDArray, r0: float) -> tuple[float, float]:
    """Shift ``r >= r0`` and the contraction ratio ``max |mu + r| / (lam + r)``
    of power iteration on ``A + rI``. Besides ``r0`` the midpoint shift that
    balances the extreme real parts of the subdominant spectrum is tried."""

    def ratio(r: float) -> float:
        return float(np.max(np.abs(rest + r))) / (lam + r)

    best = (r0, ratio(r0))
    mid = -0.5 * (float(np.max(rest.real)) + float(np.min(rest.real)))
    if mid > r0:
        cand = (mid, ratio(mid))
        if cand[1] < best[1]:
            best = cand
    return best


def spectral_gap(A: MetzlerMatrix | ArrayLike) -> float:
    """Frobenius eigenvalue minus the largest real part among the others."""
    A = validate_metzler(A)
    if not is_irreducible(A):
        raise Reducible("spectral_gap: matrix is reducible", dominant_eigenvalue(A))
    return _dense_spectrum(A.entries)[1]


def _power_iteration(M: NDArray, budget: int, tol: float) -> tuple[NDArray, int]:
    n = M.shape[0]
    v = np.full(n, 1.0 / n)
    for it in range(1, budget + 1):
        y = M @ v
        theta = y.sum()  # v sums to 1, so this is the 1-norm Rayleigh quotient
        y /= theta
        if np.max(np.abs(y - v)) <= tol * np.max(y):
            return y, it
        v = y
    raise NoConvergence(
        f"perron_eigenpair: power iteration did not converge in {budget} iterations",
        iterations=budget,
    )


def _dense_perron_vectors(a: NDArray) -> tuple[NDArray, NDArray]:
    ev, V = np.linalg.eig(a)
    v = np.abs(V[:, int(np.argmax(ev.real))].real)
    ev, W = np.linalg.eig(a.T)
    w = np.abs(W[:, int(np.argmax(ev.real))].real)
    return v / v.sum(), w


def perron_eigenpair(A: MetzlerMatrix | ArrayLike) -> PerronData:
    """Perron-Frobenius data of an irreducible Metzler matrix.

    The matrix is shifted by some ``r >= max(0, -min diag) + 1`` so that
    ``A + rI`` is nonnegative with positive diagonal (hence primitive), and
    power iteration is run on it and on its transpose. The shift is picked
    to minimize the contraction ratio computed from a dense eigensolver, and
    the iteration budget is ``100 n`` plus twice the number of steps that
    ratio needs to reach the stopping tolerance. Nearly defective spectra
    (gap below ``1e-6 ||A||_inf``) go straight to the dense eigenvectors.

    Raises:
        Reducible: the matrix is not irreducible.
        NoConvergence: the iteration budget ran out.
    """
    A = validate_metzler(A)
    a = A.entries
    n = A.n
    if not is_irreducible(A):
        raise Reducible(
            "perron_eigenpair: matrix is reducible, the Frobenius eigenvalue "
            "need not be simple or have a positive eigenvector",
            dominant_eigenvalue(a),
        )
    if n == 1:
        one = np.ones(1)
        return PerronData(float(a[0, 0]), one, one, np.ones((1, 1)), math.inf)

    lam_dense, gap, rest = _dense_eigen(a)
    norm = float(np.max(np.abs(a).sum(axis=1)))
    iterations = 0
    if gap < _DENSE_FALLBACK_GAP * max(norm, 1.0):
        v, w = _dense_perron_vectors(a)
    else:
        r0 = max(0.0, -float(np.min(np.diag(a)))) + 1.0
        r, ratio = _best_shift(lam_dense, rest, r0)
        M = a + r * np.eye(n)
        # the step-to-step change is about (1 - ratio) times the remaining
        # eigenvector error, so ask for that much extra accuracy
        tol = max(TAU_EIG * (1.0 - ratio) * 1e-3, 1e-15)
        budget = 100 * n + 2 * math.ceil(math.log(tol) / math.log(max(ratio, 1e-300)))
        v, it_v = _power_iteration(M, budget, tol)
        w, it_w = _power_iteration(M.T.copy(), budget, tol)
        iterations = it_v + it_w
    v = v / v.sum()
    w = w / (w @ v)
    lam = float(w @ a @ v)  # two-sided Rayleigh quotient
    return PerronData(lam, v, w, np.outer(v, w), gap, iterations)


def flux_decompose(A: MetzlerMatrix | ArrayLike) -> FluxDecomposition:
    """Split ``A`` into off-diagonal fluxes and growth rates.

    ``growth_i = A_ii + sum_{j != i} A_ji``: the diagonal entry plus
    everything flowing out of compartment i (its column's off-diagonal
    sum), so that the diagonal reads ``-outflow_i + growth_i``.
    """
    A = validate_metzler(A)
    a = A.entries
    n = A.n
    fluxes = a.copy()
    np.fill_diagonal(fluxes, 0.0)
    growth = np.empty(n)
    lo = np.empty(n)
    for i in range(n):
        out = math.fsum(fluxes[:, i])
        g = a[i, i] + out
        # TwoSum: g + residue == a_ii + out exactly
        bv = g - a[i, i]
        lo[i] = (a[i, i] - (g - bv)) + (out - bv)
        growth[i] = g
    return FluxDecomposition(fluxes, growth, lo)


def flux_compose(F: FluxDecomposition) -> MetzlerMatrix:
    """Rebuild the matrix from its fluxes and growth rates (exact inverse of
    :func:`flux_decompose`)."""
    fluxes = np.array(F.fluxes, dtype=float)
    n = fluxes.shape[0]
    if fluxes.shape != (n, n) or F.growth.shape != (n,):
        raise NotSquare(f"fluxes {fluxes.shape} and growth {F.growth.shape} disagree")
    off = ~np.eye(n, dtype=bool)
    if np.any(fluxes[off] < 0):
        i, j = (int(k) for k in np.argwhere(off & (fluxes < 0))[0])
        raise NegativeFlux(f"flux ({i + 1},{j + 1}) = {fluxes[i, j]!r} is negative")
    a = fluxes.copy()
    for i in range(n):
        out = math.fsum(fluxes[off[:, i], i])
        a[i, i] = math.fsum((F.growth[i], F.growth_lo[i], -out))
    return MetzlerMatrix(a)
