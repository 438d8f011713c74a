"""Analytical BER predictors: the ML union bound and the MMSE SINR closed form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelProfile, sample_paths, subchannel_matrix, td_matrices_dense
from .detectors import SearchSpaceError
from .modulation import ModulationKind, ModulationScheme, parse_kind
from .numerics import erfc, hermitian_eigenvalues
from .waveform import AfdmConfig, DaftOperator

__all__ = [
    "ModulationBerConstants",
    "PairwiseErrorContext",
    "modulation_constants",
    "pairwise_context",
    "pep_unconditional",
    "pep_from_eigenvalues",
    "difference_table",
    "ml_union_bound",
    "ml_union_bound_naive",
    "ml_union_bound_averaged",
    "mmse_bias_matrix",
    "mmse_diag_t",
    "mmse_theoretical_ber",
    "mmse_theoretical_ber_averaged",
    "UNION_BOUND_CAP",
]

UNION_BOUND_CAP = 2**20


@dataclass(frozen=True)
class ModulationBerConstants:
    a: float
    b: float


_BER_CONSTANTS = {
    ModulationKind.BPSK: ModulationBerConstants(0.5, 1.0),
    ModulationKind.QPSK: ModulationBerConstants(0.5, 0.5),
    ModulationKind.QAM16: ModulationBerConstants(0.375, 0.1),
}


def modulation_constants(modulation) -> ModulationBerConstants:
    """``(a_M, b_M)`` with per-bit BER ≈ ``a_M erfc(sqrt(b_M * SINR))`` under Gray labelling."""
    kind = modulation.kind if isinstance(modulation, ModulationScheme) else parse_kind(modulation)
    try:
        return _BER_CONSTANTS[kind]
    except KeyError:
        raise ValueError(f"no BER constants for {kind}") from None


@dataclass
class PairwiseErrorContext:
    delta: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    eigenvalues: np.ndarray
    rank: int


def pairwise_context(delta, subchannels) -> PairwiseErrorContext:
    """Build ``Phi(delta) = [H_1 delta, ..., H_P delta]`` and its Gram eigenvalues."""
    delta = np.asarray(delta, dtype=complex)
    phi = np.stack([hi @ delta for hi in subchannels], axis=1)
    theta = phi.conj().T @ phi
    lam, rank = hermitian_eigenvalues(theta)
    return PairwiseErrorContext(delta, phi, theta, lam, rank)


def pep_from_eigenvalues(lam, gamma_s, p: int) -> np.ndarray:
    """Rayleigh-averaged PEP for eigenvalue rows ``lam (..., P)`` and SNRs ``gamma_s (S,)``.

    Zero eigenvalues contribute a factor of one, so the product over all of
    them equals the product over the rank.
    """
    lam = np.asarray(lam, dtype=float)[..., None, :]
    g = np.atleast_1d(np.asarray(gamma_s, dtype=float))[:, None]
    t1 = np.prod(1.0 / (1.0 + lam * g / (4 * p)), axis=-1)
    t2 = np.prod(1.0 / (1.0 + lam * g / (3 * p)), axis=-1)
    return t1 / 12.0 + t2 / 4.0


def pep_unconditional(ctx: PairwiseErrorContext, gamma_s, p: int):
    out = pep_from_eigenvalues(ctx.eigenvalues, gamma_s, p)
    return float(out[0]) if np.ndim(gamma_s) == 0 else out


def difference_table(modulation: ModulationScheme):
    """Distinct per-symbol differences with pair counts and total bit errors."""
    alpha = modulation.alphabet
    labels = modulation.labels
    m = len(alpha)
    diffs = (alpha[:, None] - alpha[None, :]).ravel()
    errs = np.sum(labels[:, None, :] != labels[None, :, :], axis=-1).ravel()
    keys = np.round(diffs.real, 9) + 1j * np.round(diffs.imag, 9)
    uniq, inv = np.unique(keys, return_inverse=True)
    counts = np.bincount(inv, minlength=len(uniq)).astype(float)
    bit_errs = np.bincount(inv, weights=errs, minlength=len(uniq))
    # representative exact difference for each class
    rep = np.zeros(len(uniq), dtype=complex)
    rep[inv] = diffs
    assert m * m == counts.sum()
    return rep, counts, bit_errs


def _grouped_deltas(modulation: ModulationScheme, n: int):
    """All non-zero difference vectors with their summed bit-error weights.

    For a difference vector with per-position classes ``k_j`` the weight is
    ``sum_j E(k_j) prod_{i != j} C(k_i)``, i.e. the total bit errors over
    every ordered pair of symbol vectors producing that difference.
    """
    rep, counts, bit_errs = difference_table(modulation)
    k = len(rep)
    if k**n > UNION_BOUND_CAP:
        raise SearchSpaceError(f"union bound enumeration {k}^{n} exceeds cap {UNION_BOUND_CAP}")
    idx = (np.arange(k**n)[:, None] // k ** np.arange(n - 1, -1, -1)) % k
    deltas = rep[idx]
    keep = np.any(np.abs(deltas) > 1e-12, axis=1)
    idx, deltas = idx[keep], deltas[keep]
    c = counts[idx]
    e = bit_errs[idx]
    prod_all = np.prod(c, axis=1)
    # c > 0 for every class, so prod_{i != j} = prod_all / c_j
    weights = np.sum(e * (prod_all[:, None] / c), axis=1)
    return deltas, weights


def _subchannel_stack(config: AfdmConfig, delays, dopplers) -> np.ndarray:
    return np.stack([subchannel_matrix(l, v, config) for l, v in zip(delays, dopplers)])


def _eigs_for_deltas(hstack, deltas, chunk: int = 8192) -> np.ndarray:
    out = []
    for s in range(0, len(deltas), chunk):
        d = deltas[s : s + chunk]
        phi = np.einsum("pij,dj->dip", hstack, d)
        theta = np.conj(np.swapaxes(phi, -1, -2)) @ phi
        lam, _ = hermitian_eigenvalues(theta)
        out.append(lam)
    return np.concatenate(out)


def ml_union_bound(config: AfdmConfig, delays, dopplers, gamma_s, modulation: ModulationScheme,
                   clip: bool = True):
    """Union bound on the ML bit error rate for one path geometry.

    Pairs are grouped by their difference vector, which fixes both the PEP
    and the bit-error weight. Returns an array over ``gamma_s``; clipped to 1
    unless ``clip`` is false.
    """
    n = config.n
    p = len(delays)
    hstack = _subchannel_stack(config, delays, dopplers)
    deltas, weights = _grouped_deltas(modulation, n)
    lam = _eigs_for_deltas(hstack, deltas)
    pep = pep_from_eigenvalues(lam, gamma_s, p)  # (D, S)
    norm = modulation.order**n * n * modulation.bits_per_symbol
    bound = weights @ pep / norm
    if clip:
        bound = np.minimum(bound, 1.0)
    return bound


def ml_union_bound_naive(config: AfdmConfig, delays, dopplers, gamma_s, modulation: ModulationScheme):
    """Direct double sum over ordered symbol-vector pairs (small ``N`` only)."""
    n = config.n
    p = len(delays)
    m = modulation.order
    hstack = _subchannel_stack(config, delays, dopplers)
    idx = (np.arange(m**n)[:, None] // m ** np.arange(n - 1, -1, -1)) % m
    vecs = modulation.alphabet[idx]
    bits = modulation.labels[idx].reshape(m**n, -1)
    g = np.atleast_1d(np.asarray(gamma_s, dtype=float))
    total = np.zeros(len(g))
    for a in range(m**n):
        for b in range(m**n):
            if a == b:
                continue
            ctx = pairwise_context(vecs[a] - vecs[b], hstack)
            e = int(np.sum(bits[a] != bits[b]))
            total += e * pep_from_eigenvalues(ctx.eigenvalues, g, p)
    return total / (m**n * n * modulation.bits_per_symbol)


def ml_union_bound_averaged(config: AfdmConfig, profile: ChannelProfile, gamma_s,
                            modulation: ModulationScheme, draws: int, rng: np.random.Generator):
    """Mean and standard error of the (unclipped) bound over Jakes Doppler draws."""
    g = np.atleast_1d(np.asarray(gamma_s, dtype=float))
    _, dopplers = sample_paths(profile, rng, draws)
    vals = np.array([ml_union_bound(config, profile.delays, dop, g, modulation, clip=False)
                     for dop in dopplers])
    mean = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(draws) if draws > 1 else np.zeros_like(mean)
    return mean, stderr


def mmse_bias_matrix(h_eff, gamma_s: float):
    """``T = G_AF H_eff`` and per-subcarrier SINR ``T(i,i) / (1 - T(i,i))``."""
    if not (np.isfinite(gamma_s) and gamma_s > 0):
        raise ValueError("gamma_s must be finite and positive")
    h_eff = np.asarray(h_eff, dtype=complex)
    n = h_eff.shape[-1]
    gram = h_eff.conj().T @ h_eff
    t = np.linalg.solve(gram + np.eye(n) / gamma_s, gram)
    d = np.diag(t)
    if np.max(np.abs(d.imag)) > 1e-10:
        raise ArithmeticError("diagonal of T is not real")
    d = d.real
    if np.any(d <= 0) or np.any(d >= 1):
        raise ArithmeticError("diagonal of T outside (0, 1)")
    return t, d / (1 - d)


def mmse_diag_t(h_eff, gamma_s) -> np.ndarray:
    """``diag(T)`` for many SNRs from one eigendecomposition of ``H^H H``.

    ``h_eff`` may be a stack ``(R, N, N)``; returns ``(R, S, N)`` (or ``(S, N)``).
    """
    h_eff = np.asarray(h_eff, dtype=complex)
    single = h_eff.ndim == 2
    if single:
        h_eff = h_eff[None]
    gram = np.conj(np.swapaxes(h_eff, -1, -2)) @ h_eff
    mu, v = np.linalg.eigh(gram)
    mu = np.maximum(mu, 0.0)
    w = np.abs(v) ** 2  # (R, N, K)
    g = np.atleast_1d(np.asarray(gamma_s, dtype=float))
    shrink = mu[:, None, :] / (mu[:, None, :] + 1.0 / g[None, :, None])  # (R, S, K)
    out = np.einsum("rik,rsk->rsi", w, shrink)
    return out[0] if single else out


def _ber_from_diag(diag_t, modulation) -> np.ndarray:
    consts = modulation_constants(modulation)
    d = np.clip(diag_t, 0.0, 1.0 - 1e-300)
    sinr = d / (1.0 - d)
    return np.mean(consts.a * erfc(np.sqrt(consts.b * sinr)), axis=-1)


def mmse_theoretical_ber(h_eff, gamma_s, modulation):
    """SINR-based MMSE BER for one effective channel (or a stack, averaged)."""
    ber = _ber_from_diag(mmse_diag_t(h_eff, gamma_s), modulation)
    if ber.ndim == 2:
        ber = ber.mean(axis=0)
    return float(ber[0]) if np.ndim(gamma_s) == 0 else ber


def mmse_theoretical_ber_averaged(config: AfdmConfig, profile: ChannelProfile, gamma_s,
                                  modulation, realizations: int, rng: np.random.Generator,
                                  batch: int = 64):
    """Mean and standard error of the closed form over random channel realizations.

    ``gamma_s`` is the detector-side SNR (after any power normalization).
    """
    op = DaftOperator(config)
    g = np.atleast_1d(np.asarray(gamma_s, dtype=float))
    vals = []
    done = 0
    while done < realizations:
        size = min(batch, realizations - done)
        gains, dopplers = sample_paths(profile, rng, size)
        h = td_matrices_dense(gains, dopplers, profile.delays, config)
        heff = op.conjugate_sandwich(h)
        vals.append(_ber_from_diag(mmse_diag_t(heff, g), modulation))
        done += size
    vals = np.concatenate(vals)  # (R, S)
    mean = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else np.zeros_like(mean)
    return mean, stderr
