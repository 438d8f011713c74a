"""ML, conventional MMSE, banded-Cholesky MMSE and MRC-TD detectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import TdChannelMatrix
from .modulation import slice_symbols
from .numerics import (
    BandedHermitianMatrix,
    OpCounter,
    backward_substitution,
    banded_cholesky,
    forward_substitution,
)
from .waveform import DaftOperator

__all__ = [
    "ML",
    "MmseConventional",
    "MmseBanded",
    "MrcTd",
    "DetectorKind",
    "DetectionResult",
    "SearchSpaceError",
    "ML_SEARCH_CAP",
    "detect_ml",
    "ml_decisions",
    "detect_mmse_conventional",
    "mmse_conventional_batch",
    "conventional_mmse_mults",
    "build_psi",
    "detect_mmse_banded",
    "detect_mrc_td",
    "detector_from_name",
]

ML_SEARCH_CAP = 2**20


class SearchSpaceError(ValueError):
    """Exhaustive enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class ML:
    name: str = field(default="ml", init=False)


@dataclass(frozen=True)
class MmseConventional:
    name: str = field(default="mmse", init=False)


@dataclass(frozen=True)
class MmseBanded:
    name: str = field(default="mmse-banded", init=False)


@dataclass(frozen=True)
class MrcTd:
    k: int = 30
    eps: float = 1e-8
    literal_count: bool = False
    name: str = field(default="mrc-td", init=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("MRC-TD needs at least one iteration")
        if not self.eps > 0:
            raise ValueError("MRC-TD threshold must be positive")


DetectorKind = ML | MmseConventional | MmseBanded | MrcTd


def detector_from_name(name: str, k: int = 30, eps: float = 1e-8) -> DetectorKind:
    name = name.lower()
    if name == "ml":
        return ML()
    if name in ("mmse", "mmse-conv", "mmse-conventional"):
        return MmseConventional()
    if name in ("mmse-banded", "mmse-chol", "banded"):
        return MmseBanded()
    if name in ("mrc-td", "mrc"):
        return MrcTd(k=k, eps=eps)
    raise ValueError(f"unknown detector {name!r}")


@dataclass
class DetectionResult:
    soft_estimate: np.ndarray
    hard_symbols: np.ndarray
    iterations_used: int = 0
    converged: bool = True
    zero_columns: int = 0
    ops: OpCounter = field(default_factory=OpCounter)
    time_domain: np.ndarray | None = field(default=None, repr=False)


def _candidates(order: int, n: int, start: int, stop: int) -> np.ndarray:
    """Index vectors ``start..stop`` of the lexicographic enumeration of ``order**n``."""
    idx = np.arange(start, stop)
    powers = order ** np.arange(n - 1, -1, -1)
    return (idx[:, None] // powers) % order


def ml_decisions(y, h_eff, alphabet, chunk: int = 4096) -> np.ndarray:
    """Exhaustive ML decisions for a batch ``y (B, N)``, ``h_eff (B, N, N)``.

    Returns ``(B, N)`` alphabet indices; exact ties keep the lexicographically
    smallest index vector.
    """
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    h_eff = np.asarray(h_eff, dtype=complex)
    if h_eff.ndim == 2:
        h_eff = h_eff[None]
    alphabet = np.asarray(alphabet, dtype=complex)
    b, n = y.shape
    m = len(alphabet)
    total = m**n
    if total > ML_SEARCH_CAP:
        raise SearchSpaceError(f"ML search space {m}^{n} exceeds cap {ML_SEARCH_CAP}")
    best_cost = np.full(b, np.inf)
    best_idx = np.zeros(b, dtype=np.int64)
    for start in range(0, total, chunk):
        stop = min(total, start + chunk)
        cand = alphabet[_candidates(m, n, start, stop)]  # (C, N)
        diff = y[:, :, None] - h_eff @ cand.T  # (B, N, C)
        cost = np.sum(diff.real**2 + diff.imag**2, axis=1)
        local = np.argmin(cost, axis=1)
        lc = cost[np.arange(b), local]
        better = lc < best_cost
        best_cost[better] = lc[better]
        best_idx[better] = start + local[better]
    return (best_idx[:, None] // m ** np.arange(n - 1, -1, -1)) % m


def detect_ml(y, h_eff, alphabet, gamma_s: float | None = None) -> DetectionResult:
    """Exhaustive search ``argmin ||y - H_eff x||²`` over the alphabet."""
    alphabet = np.asarray(alphabet, dtype=complex)
    idx = ml_decisions(y, h_eff, alphabet)[0]
    n, m = len(idx), len(alphabet)
    ops = OpCounter(complex_multiplications=m**n * n * (n + 1))
    return DetectionResult(alphabet[idx], idx, ops=ops)


def conventional_mmse_mults(n: int) -> int:
    """Dense flow: Gram matrix, inversion, ``G_AF = inv @ H^H``, then ``G_AF y``."""
    return 3 * n**3 + n**2


def mmse_conventional_batch(y, h_eff, gamma_s: float) -> np.ndarray:
    """``(H^H H + I/gamma)^-1 H^H y`` for stacks, via a dense solve."""
    y = np.asarray(y, dtype=complex)
    h_eff = np.asarray(h_eff, dtype=complex)
    hh = np.conj(np.swapaxes(h_eff, -1, -2))
    n = h_eff.shape[-1]
    gram = hh @ h_eff + np.eye(n) / gamma_s
    rhs = (hh @ y[..., None])
    return np.linalg.solve(gram, rhs)[..., 0]


def detect_mmse_conventional(y, h_eff, gamma_s: float, alphabet=None) -> DetectionResult:
    if not (np.isfinite(gamma_s) and gamma_s > 0):
        raise ValueError("gamma_s must be finite and positive")
    try:
        x_hat = mmse_conventional_batch(y, h_eff, gamma_s)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"MMSE normal equations are singular: {exc}") from exc
    n = len(x_hat)
    hard = slice_symbols(x_hat, alphabet) if alphabet is not None else np.zeros(0, dtype=int)
    return DetectionResult(x_hat, hard, ops=OpCounter(conventional_mmse_mults(n), 3 * n**3))


def build_psi(h: TdChannelMatrix, gamma_s: float, counter: OpCounter | None = None) -> BandedHermitianMatrix:
    """Band of ``Psi = H^H H + I/gamma`` from the banded time-domain channel.

    ``Psi(i, i-d)`` is the inner product of columns ``i`` and ``i-d`` over
    their common non-zero rows ``i .. min(N-1, i-d+Q)``; evaluated for all
    ``i`` at once per (offset, row-shift) pair.
    """
    if h.banded is None:
        raise ValueError("banded MMSE needs a zero-padded (banded) channel")
    diag = h.banded.diagonals
    q, n = h.banded.bandwidth, h.n
    lower = np.zeros((q + 1, n), dtype=complex)
    mults = 0
    for d in range(q + 1):
        for k in range(q - d + 1):
            # rows p = i + k, i in [d, n - 1 - k]
            i0, i1 = d, n - k
            if i1 <= i0:
                continue
            lower[d, i0:i1] += np.conj(diag[k, i0 + k : i1 + k]) * diag[k + d, i0 + k : i1 + k]
            mults += i1 - i0
    lower[0] += 1.0 / gamma_s
    if counter is not None:
        counter.mul(mults)
        counter.add(mults + n)
    lower[0] = lower[0].real
    return BandedHermitianMatrix(lower)


def detect_mmse_banded(r, h: TdChannelMatrix, gamma_s: float, op: DaftOperator,
                       alphabet=None, _perturb=None) -> DetectionResult:
    """Time-domain MMSE through a banded Cholesky factor of ``Psi``.

    Steps: band of ``Psi``; ``Psi = L L^H``; ``b = H^H r``; ``L z = b``;
    ``L^H s = z``; ``x = A s``.
    """
    if not (np.isfinite(gamma_s) and gamma_s > 0):
        raise ValueError("gamma_s must be finite and positive")
    r = np.asarray(r, dtype=complex)
    ops = OpCounter()
    psi = build_psi(h, gamma_s, ops)
    L = banded_cholesky(psi, ops)
    if _perturb is not None:
        _perturb(L)
    b = h.banded.rmatvec(r)
    nz = sum(h.n - k for k in range(h.bandwidth + 1))
    ops.mul(nz)
    ops.add(nz)
    z = forward_substitution(L, b, ops)
    s_hat = backward_substitution(L, z, ops)
    x_hat = op.daft(s_hat, counter=ops)
    hard = slice_symbols(x_hat, alphabet) if alphabet is not None else np.zeros(0, dtype=int)
    return DetectionResult(x_hat, hard, ops=ops, time_domain=s_hat)


def detect_mrc_td(r, h: TdChannelMatrix, gamma_s: float, k: int, eps: float, op: DaftOperator,
                  alphabet=None, literal_count: bool = False) -> DetectionResult:
    """Iterative MRC with residual cancellation on the time-domain channel.

    Symbols are swept in ascending order; each update combines column ``n``
    against the running residual and then removes its own change from the
    residual. Stops once ``||s_k - s_{k-1}||_2 < eps`` or after ``k`` sweeps.
    The column energies ``d_n`` are iteration-invariant and computed once;
    ``literal_count`` charges them on every sweep instead.
    """
    if h.banded is None:
        raise ValueError("MRC-TD needs a zero-padded (banded) channel")
    if k < 1 or not eps > 0:
        raise ValueError("need k >= 1 and eps > 0")
    n = h.n
    inv_snr = 1.0 / gamma_s
    diag = h.banded.diagonals
    delays = sorted(h.delays)
    cols = []
    energy = []
    zero_cols = 0
    for col in range(n):
        rows = [col + l for l in delays if col + l < n]
        coefs = [complex(diag[l, col + l]) for l in delays if col + l < n]
        d_n = sum(c.real * c.real + c.imag * c.imag for c in coefs)
        if d_n == 0.0:
            zero_cols += 1
        cols.append((rows, coefs))
        energy.append(d_n)
    support = sum(len(rows) for rows, _ in cols)

    residual = [complex(v) for v in r]
    s_hat = [0j] * n
    iters = 0
    converged = False
    for it in range(1, k + 1):
        iters = it
        change = 0.0
        for col in range(n):
            rows, coefs = cols[col]
            d_n = energy[col]
            old = s_hat[col]
            if d_n == 0.0:
                new = 0j
            else:
                g = d_n * old
                for p, c in zip(rows, coefs):
                    g += c.conjugate() * residual[p]
                new = g / (d_n + inv_snr)
            delta = new - old
            if delta != 0:
                for p, c in zip(rows, coefs):
                    residual[p] -= c * delta
            s_hat[col] = new
            change += delta.real * delta.real + delta.imag * delta.imag
        if change ** 0.5 < eps:
            converged = True
            break

    ops = OpCounter()
    # per sweep: combining |P_n| + 1, division 1, residual update |P_n|
    ops.mul(iters * (2 * support + 2 * n) + support * (iters if literal_count else 1) + iters * n)
    ops.add(iters * (2 * support + n))
    s_vec = np.asarray(s_hat, dtype=complex)
    x_hat = op.daft(s_vec, counter=ops)
    hard = slice_symbols(x_hat, alphabet) if alphabet is not None else np.zeros(0, dtype=int)
    return DetectionResult(x_hat, hard, iterations_used=iters, converged=converged,
                           zero_columns=zero_cols, ops=ops, time_domain=s_vec)
