"""Complex-valued numerical kernels.

Unitary DFT, banded storage, banded Cholesky with triangular solves, a small
Hermitian eigensolver, the scalar special functions used by the BER
expressions, and a multiplication counter used for complexity reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "OpCounter",
    "BandedLowerTriangular",
    "BandedHermitianMatrix",
    "CholeskyError",
    "dft_unitary",
    "banded_cholesky",
    "forward_substitution",
    "backward_substitution",
    "hermitian_eigenvalues",
    "q_function_approx",
    "erfc",
]

# Pivots at or below this fraction of the largest diagonal entry of Psi are
# treated as a loss of definiteness.
PIVOT_RTOL = 1e-14


class CholeskyError(ArithmeticError):
    """Raised when a banded Cholesky pivot is not safely positive."""

    def __init__(self, index: int, pivot: float):
        self.index = index
        self.pivot = pivot
        super().__init__(f"non-positive pivot {pivot:.3e} at row {index}")


@dataclass
class OpCounter:
    """Running count of complex multiplications and additions.

    One complex multiply (or divide) counts as one multiplication. Counters
    belong to a single thread; merge them with ``+``.
    """

    complex_multiplications: int = 0
    complex_additions: int = 0

    def mul(self, n: int = 1) -> None:
        self.complex_multiplications += int(n)

    def add(self, n: int = 1) -> None:
        self.complex_additions += int(n)

    def reset(self) -> None:
        self.complex_multiplications = 0
        self.complex_additions = 0

    def snapshot(self) -> "OpCounter":
        return OpCounter(self.complex_multiplications, self.complex_additions)

    def __add__(self, other: "OpCounter") -> "OpCounter":
        return OpCounter(
            self.complex_multiplications + other.complex_multiplications,
            self.complex_additions + other.complex_additions,
        )


def _count(counter: OpCounter | None, mults: int, adds: int = 0) -> None:
    if counter is not None:
        counter.complex_multiplications += int(mults)
        counter.complex_additions += int(adds)


def fft_mults(n: int) -> int:
    """Multiplication count charged for one length-``n`` unitary DFT.

    Radix-2 count ``(n/2) log2 n`` plus ``n`` for the unitary scaling; the
    direct ``n**2`` count when ``n`` is not a power of two.
    """
    if n <= 1:
        return n
    if n & (n - 1) == 0:
        return (n // 2) * int(math.log2(n)) + n
    return n * n


def dft_unitary(v, inverse: bool = False, counter: OpCounter | None = None, axis: int = -1):
    """Unitary DFT (``1/sqrt(N)`` scaling) along ``axis``.

    Backed by ``numpy.fft`` which is O(N log N) for every length, including
    the non-power-of-two sizes used by small experiments.
    """
    v = np.asarray(v, dtype=complex)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("dft_unitary needs a non-empty input")
    n = v.shape[axis]
    if counter is not None:
        counter.mul(fft_mults(n) * (v.size // n))
    if inverse:
        return np.fft.ifft(v, axis=axis, norm="ortho")
    return np.fft.fft(v, axis=axis, norm="ortho")


@dataclass
class BandedLowerTriangular:
    """Lower-triangular matrix with ``bandwidth`` stored sub-diagonals.

    Diagonal-major storage: ``diagonals[k, i]`` holds entry ``(i, i - k)``.
    Positions with ``i < k`` fall outside the matrix and are kept at zero.
    """

    diagonals: np.ndarray

    def __post_init__(self):
        self.diagonals = np.atleast_2d(np.asarray(self.diagonals, dtype=complex))
        q1, n = self.diagonals.shape
        if q1 > n:
            raise ValueError("bandwidth must be smaller than the dimension")
        for k in range(1, q1):
            self.diagonals[k, :k] = 0.0

    @property
    def n(self) -> int:
        return self.diagonals.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.diagonals.shape[0] - 1

    @classmethod
    def from_dense(cls, matrix, bandwidth: int) -> "BandedLowerTriangular":
        matrix = np.asarray(matrix, dtype=complex)
        n = matrix.shape[0]
        diags = np.zeros((bandwidth + 1, n), dtype=complex)
        for k in range(bandwidth + 1):
            diags[k, k:] = np.diagonal(matrix, -k)
        return cls(diags)

    def to_dense(self) -> np.ndarray:
        n = self.n
        out = np.zeros((n, n), dtype=complex)
        rows = np.arange(n)
        for k in range(self.bandwidth + 1):
            out[rows[k:], rows[k:] - k] = self.diagonals[k, k:]
        return out

    def row_band(self) -> np.ndarray:
        """Row-major view ``W[i, t] = L(i, i - q + t)``, zero outside the matrix."""
        return self.diagonals[::-1].T.copy()

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        out = self.diagonals[0] * v
        for k in range(1, self.bandwidth + 1):
            out[k:] += self.diagonals[k, k:] * v[:-k]
        return out

    def rmatvec(self, v) -> np.ndarray:
        """Conjugate-transpose product ``L^H v``."""
        v = np.asarray(v, dtype=complex)
        out = np.conj(self.diagonals[0]) * v
        for k in range(1, self.bandwidth + 1):
            out[:-k] += np.conj(self.diagonals[k, k:]) * v[k:]
        return out


@dataclass
class BandedHermitianMatrix:
    """Hermitian matrix with half-bandwidth ``bandwidth``.

    Only the lower band is stored, diagonal-major like
    :class:`BandedLowerTriangular`; the upper band is implied by conjugate
    symmetry.
    """

    lower: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_2d(np.asarray(self.lower, dtype=complex))
        for k in range(1, self.lower.shape[0]):
            self.lower[k, :k] = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.lower.shape[0] - 1

    @classmethod
    def from_dense(cls, matrix, bandwidth: int) -> "BandedHermitianMatrix":
        return cls(BandedLowerTriangular.from_dense(matrix, bandwidth).diagonals)

    def to_dense(self) -> np.ndarray:
        low = BandedLowerTriangular(self.lower.copy()).to_dense()
        return low + np.tril(low, -1).conj().T

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        out = self.lower[0] * v
        for k in range(1, self.bandwidth + 1):
            out[k:] += self.lower[k, k:] * v[:-k]
            out[:-k] += np.conj(self.lower[k, k:]) * v[k:]
        return out


def banded_cholesky(psi: BandedHermitianMatrix, counter: OpCounter | None = None) -> BandedLowerTriangular:
    """Factor ``psi = L L^H`` keeping every inner sum inside the band.

    Row ``i`` only touches columns ``max(0, i - q) .. i``. Raises
    :class:`CholeskyError` when a pivot drops to ``PIVOT_RTOL`` times the
    largest diagonal entry or below.
    """
    n, q = psi.n, psi.bandwidth
    # psi_rows[i, t] = Psi(i, i - q + t), same layout as the factor W
    psi_rows = BandedLowerTriangular(psi.lower.copy()).row_band()
    diag = psi.lower[0].real
    tol = PIVOT_RTOL * float(np.max(diag)) if n else 0.0
    w = np.zeros((n, q + 1), dtype=complex)
    mults = 0
    for i in range(n):
        js = max(0, i - q)
        for j in range(js, i + 1):
            # L(i, p) for p in [js, j) and L(j, p) for the same p
            li = w[i, js - i + q : j - i + q]
            if j == i:
                pivot = (psi_rows[i, q] - np.vdot(li, li)).real
                mults += len(li)
                if not pivot > tol:
                    raise CholeskyError(i, float(pivot))
                w[i, q] = math.sqrt(pivot)
            else:
                lj = w[j, js - j + q : q]
                acc = psi_rows[i, j - i + q] - np.dot(li, np.conj(lj))
                w[i, j - i + q] = acc / w[j, q]
                mults += len(li) + 1
    _count(counter, mults, mults)
    return BandedLowerTriangular(w[:, ::-1].T.copy())


def forward_substitution(L: BandedLowerTriangular, b, counter: OpCounter | None = None) -> np.ndarray:
    """Solve ``L z = b`` with band-limited inner sums."""
    b = np.asarray(b, dtype=complex)
    n, q = L.n, L.bandwidth
    if b.shape != (n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({n},)")
    w = L.row_band()
    if np.any(w[:, q] == 0):
        raise ZeroDivisionError("triangular factor has a zero diagonal entry")
    z = np.zeros(n, dtype=complex)
    mults = 0
    for i in range(n):
        js = max(0, i - q)
        acc = b[i] - np.dot(w[i, js - i + q : q], z[js:i])
        z[i] = acc / w[i, q]
        mults += i - js + 1
    _count(counter, mults, mults)
    return z


def backward_substitution(L: BandedLowerTriangular, z, counter: OpCounter | None = None) -> np.ndarray:
    """Solve ``L^H s = z``; the sum for row ``i`` runs up to ``min(N-1, i+q)``."""
    z = np.asarray(z, dtype=complex)
    n, q = L.n, L.bandwidth
    if z.shape != (n,):
        raise ValueError(f"right-hand side has shape {z.shape}, expected ({n},)")
    d = L.diagonals
    if np.any(d[0] == 0):
        raise ZeroDivisionError("triangular factor has a zero diagonal entry")
    # column i of L below the diagonal: L(i + k, i) = d[k, i + k]
    cols = np.zeros((n, q + 1), dtype=complex)
    for k in range(q + 1):
        cols[: n - k, k] = d[k, k:]
    s = np.zeros(n, dtype=complex)
    mults = 0
    for i in range(n - 1, -1, -1):
        je = min(n - 1, i + q)
        acc = z[i] - np.dot(np.conj(cols[i, 1 : je - i + 1]), s[i + 1 : je + 1])
        s[i] = acc / np.conj(cols[i, 0])
        mults += je - i + 1
    _count(counter, mults, mults)
    return s


def hermitian_eigenvalues(theta, rtol: float = 1e-10) -> tuple[np.ndarray, int]:
    """Eigenvalues (descending) and numerical rank of a PSD Hermitian matrix.

    Accepts a single ``(P, P)`` matrix or a stack ``(..., P, P)``. Negative
    round-off values are clamped to zero; the rank counts eigenvalues above
    ``rtol`` times the largest one. For a stack the returned rank is an array.
    """
    theta = np.asarray(theta, dtype=complex)
    if theta.shape[-1] != theta.shape[-2]:
        raise ValueError("matrix must be square")
    asym = np.max(np.abs(theta - np.conj(np.swapaxes(theta, -1, -2))), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(theta), initial=0.0)))
    if asym > 1e-10 * scale:
        raise ValueError(f"matrix is not Hermitian (asymmetry {asym:.2e})")
    lam = np.linalg.eigvalsh(theta)[..., ::-1]
    # Gram matrices are PSD: negative values are round-off
    lam = np.maximum(lam, 0.0)
    top = lam[..., :1]
    rank = np.sum(lam > rtol * np.maximum(top, 1e-300), axis=-1)
    if lam.ndim == 1:
        return lam, int(rank)
    return lam, rank


def q_function_approx(x):
    """Two-exponential approximation ``exp(-x²/2)/12 + exp(-2x²/3)/4``."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / 12.0 + np.exp(-2.0 * x * x / 3.0) / 4.0
    return float(out) if out.ndim == 0 else out


def erfc(x):
    """Complementary error function (scipy's Cody rational approximations)."""
    out = special.erfc(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out
