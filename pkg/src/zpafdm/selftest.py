"""Small-N structural and oracle-equivalence checks run by ``zpafdm selftest``."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import ml_union_bound, ml_union_bound_naive, mmse_diag_t
from .channel import (
    ChannelProfile,
    ChannelRealization,
    build_td_matrix,
    complex_noise,
    effective_matrix,
    propagate,
    sample_realization,
    subchannel_matrix,
)
from .detectors import MmseConventional, detect_mmse_banded, detect_mmse_conventional, detect_mrc_td
from .modulation import ModulationKind, get_modulation
from .numerics import BandedHermitianMatrix, banded_cholesky, backward_substitution, forward_substitution
from .simulator import Arm, ExperimentSpec, normalize_power, run_ber_sweep
from .waveform import AfdmConfig, DaftOperator, PrefixMode, assemble_frame

__all__ = ["CheckResult", "run_selftest", "FAULTS"]

FAULTS = ("cholesky",)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    seconds: float = 0.0
    error: str = ""


def _corrupt_cholesky(L) -> None:
    # flip one sub-diagonal entry of the factor: a silent numerical bug
    L.diagonals[1, L.n // 2] += 0.25


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(20240, spawn_key=(tag,)))


def _check_daft_unitary() -> float:
    op = DaftOperator(AfdmConfig.for_doppler(16, 4, "zp", nu_max=1))
    a = op.matrix()
    return float(np.max(np.abs(a @ a.conj().T - np.eye(16))))


def _check_daft_fast_vs_matrix() -> float:
    rng = _rng(1)
    op = DaftOperator(AfdmConfig.for_doppler(16, 4, "zp", nu_max=2))
    v = complex_noise(rng, 16)
    return float(np.max(np.abs(op.daft(v) - op.matrix() @ v)))


def _sandwich_error(mode: str) -> float:
    worst = 0.0
    cfg = AfdmConfig.for_doppler(16, 4, mode, nu_max=1)
    op = DaftOperator(cfg)
    for delay, doppler in [(0, 0.0), (1, 0.37), (2, -0.81), (3, 1.0), (4, -0.5)]:
        real = ChannelRealization(np.array([1.0 + 0j]), (delay,), np.array([doppler]))
        constructive = effective_matrix(build_td_matrix(real, cfg), op)
        worst = max(worst, float(np.max(np.abs(subchannel_matrix(delay, doppler, cfg) - constructive))))
    return worst


def _check_propagation() -> float:
    rng = _rng(2)
    worst = 0.0
    for mode in ("zp", "cpp"):
        cfg = AfdmConfig.for_doppler(16, 4, mode, nu_max=1)
        real = sample_realization(ChannelProfile(3, 1.0), rng)
        s = complex_noise(rng, 16)
        rx = propagate(assemble_frame(s, cfg)[None], real.gains[None], real.dopplers[None], real.delays, cfg)[0]
        kept = rx[cfg.prefix_len: cfg.prefix_len + 16]
        worst = max(worst, float(np.max(np.abs(kept - build_td_matrix(real, cfg).matvec(s)))))
    return worst


def _random_psi(rng, n, q):
    h = sum(np.diag(complex_noise(rng, n - k), -k) for k in range(q + 1))
    psi = h.conj().T @ h + 0.1 * np.eye(n)
    return BandedHermitianMatrix.from_dense(psi, q), psi


def _check_cholesky(fault: str | None) -> float:
    rng = _rng(3)
    worst = 0.0
    for n, q in [(8, 1), (16, 3), (24, 5)]:
        psi_b, psi = _random_psi(rng, n, q)
        L = banded_cholesky(psi_b)
        if fault == "cholesky":
            _corrupt_cholesky(L)
        worst = max(worst, float(np.max(np.abs(L.to_dense() - np.linalg.cholesky(psi)))))
    return worst


def _check_substitution() -> float:
    rng = _rng(4)
    psi_b, psi = _random_psi(rng, 20, 3)
    L = banded_cholesky(psi_b)
    b = complex_noise(rng, 20)
    s = backward_substitution(L, forward_substitution(L, b))
    return float(np.max(np.abs(s - np.linalg.solve(psi, b))))


def _check_detector_equivalence(fault: str | None) -> float:
    rng = _rng(5)
    perturb = _corrupt_cholesky if fault == "cholesky" else None
    worst = 0.0
    for n, p in [(16, 3), (16, 5), (32, 4)]:
        cfg = AfdmConfig.for_doppler(n, p - 1, "zp", nu_max=1)
        op = DaftOperator(cfg)
        real = sample_realization(ChannelProfile(p, 1.0), rng)
        h = build_td_matrix(real, cfg)
        r = h.matvec(op.idaft(complex_noise(rng, n))) + complex_noise(rng, n, 0.1)
        conv = detect_mmse_conventional(op.daft(r), effective_matrix(h, op), 10.0)
        band = detect_mmse_banded(r, h, 10.0, op, _perturb=perturb)
        worst = max(worst, float(np.max(np.abs(conv.soft_estimate - band.soft_estimate))))
    return worst


def _check_mrc_fixed_point() -> float:
    rng = _rng(6)
    worst = 0.0
    for _ in range(5):
        cfg = AfdmConfig.for_doppler(16, 2, "zp", nu_max=1)
        op = DaftOperator(cfg)
        h = build_td_matrix(sample_realization(ChannelProfile(3, 1.0), rng), cfg)
        r = h.matvec(op.idaft(complex_noise(rng, 16))) + complex_noise(rng, 16, 0.1)
        res = detect_mrc_td(r, h, 10.0, 2000, 1e-12, op)
        hd = h.to_dense()
        resid = (hd.conj().T @ hd + np.eye(16) / 10.0) @ res.time_domain - hd.conj().T @ r
        worst = max(worst, float(np.max(np.abs(resid))) if res.converged else np.inf)
    return worst


def _check_union_bound() -> float:
    cfg = AfdmConfig.for_doppler(3, 1, "zp", nu_max=1)
    g = np.array([1.0, 10.0, 100.0])
    worst = 0.0
    for mod in (get_modulation("bpsk"), get_modulation("qpsk")):
        n = 3 if mod.order == 2 else 2
        c = AfdmConfig(n, 1, PrefixMode.ZERO_PAD, cfg.c1, cfg.c2)
        args = (c, (0, 1), np.array([0.3, -0.7]), g, mod)
        a = ml_union_bound(*args, clip=False)
        b = ml_union_bound_naive(*args)
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    return worst


def _check_gray_bijection() -> float:
    bad = 0
    for kind in ModulationKind:
        mod = get_modulation(kind)
        bits = mod.labels.reshape(-1)  # every label once, in index order
        idx = mod.bits_to_indices(bits)
        bad += int(np.any(idx != np.arange(mod.order)))
        bad += int(np.any(mod.indices_to_bits(idx) != bits))
        bad += int(len(np.unique(np.round(mod.alphabet, 12))) != mod.order)
        bad += int(abs(np.mean(np.abs(mod.alphabet) ** 2) - 1) > 1e-12)
    return float(bad)


def _check_gray_adjacency() -> float:
    bad = 0
    for kind in ModulationKind:
        mod = get_modulation(kind)
        a = mod.alphabet
        d = np.abs(a[:, None] - a[None, :])
        np.fill_diagonal(d, np.inf)
        dmin = d.min()
        for i, j in zip(*np.nonzero(np.isclose(d, dmin))):
            bad += int(np.sum(mod.labels[i] != mod.labels[j]) != 1)
    return float(bad)


def _check_mmse_scalar() -> float:
    # one tap: T = |h|² γ / (|h|² γ + 1)
    h = np.array([[0.6 - 0.3j]])
    g = np.array([0.5, 5.0, 50.0])
    t = mmse_diag_t(h, g)[:, 0]
    expect = abs(h[0, 0]) ** 2 * g / (abs(h[0, 0]) ** 2 * g + 1)
    return float(np.max(np.abs(t - expect)))


def _check_energy_audit() -> float:
    rng = _rng(7)
    mod = get_modulation("qpsk")
    x = mod.alphabet[rng.integers(0, 4, size=(4000, 32))]
    energy = {}
    for mode in ("zp", "cpp"):
        cfg = AfdmConfig.for_doppler(32, 8, mode, nu_max=1)
        frame, _ = normalize_power(assemble_frame(DaftOperator(cfg).idaft(x), cfg), cfg)
        energy[mode] = float(np.mean(np.sum(np.abs(frame) ** 2, axis=1)))
    return abs(energy["zp"] / energy["cpp"] - 1)


def _check_worker_determinism() -> float:
    from .results import RunManifest, ber_curve_table, render_csv

    cfg = AfdmConfig.for_doppler(8, 2, "zp", nu_max=1)
    spec = ExperimentSpec([Arm("zp-afdm:mmse", cfg, MmseConventional())], ChannelProfile(3, 1.0),
                          "qpsk", (0.0, 10.0), master_seed=9, frames_per_point=64, chunk_size=8,
                          chunks_per_round=4)
    manifest = RunManifest("selftest", {"sim.master_seed": 9}, "selftest", "1970-01-01T00:00:00Z", 9)
    texts = []
    for workers in (1, 2):
        rows, notes = ber_curve_table(run_ber_sweep(spec, workers=workers)[0])
        texts.append(render_csv(manifest, ["snr_db"], rows, notes))
    return float(texts[0] != texts[1])


def _checks(fault: str | None) -> list[tuple[str, Callable[[], float], float]]:
    return [
        ("daft unitarity (N=16)", _check_daft_unitary, 1e-10),
        ("daft fast path vs matrix", _check_daft_fast_vs_matrix, 1e-10),
        ("zp subchannel closed form vs A.H.A^H (N=16)", lambda: _sandwich_error("zp"), 1e-9),
        ("cpp subchannel closed form vs A.H.A^H (N=16)", lambda: _sandwich_error("cpp"), 1e-9),
        ("frame propagation vs time-domain matrix", _check_propagation, 1e-10),
        ("banded cholesky vs dense oracle", lambda: _check_cholesky(fault), 1e-9),
        ("banded substitution vs dense solve", _check_substitution, 1e-9),
        ("banded mmse vs conventional mmse", lambda: _check_detector_equivalence(fault), 1e-8),
        ("mrc-td fixed point residual", _check_mrc_fixed_point, 1e-8),
        ("grouped vs naive union bound (relative)", _check_union_bound, 1e-12),
        ("gray mapping bijection and unit energy", _check_gray_bijection, 0.0),
        ("gray nearest neighbours differ in one bit", _check_gray_adjacency, 0.0),
        ("mmse bias diagonal, single tap", _check_mmse_scalar, 1e-12),
        ("zp vs cpp frame energy (relative)", _check_energy_audit, 5e-3),
        ("csv identical for 1 and 2 workers", _check_worker_determinism, 0.0),
    ]


def run_selftest(fault: str | None = None, report: Callable[[CheckResult], None] | None = None
                 ) -> list[CheckResult]:
    """Run all checks; ``fault`` injects a known defect to prove the checks bite."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    results = []
    for name, fn, limit in _checks(fault):
        t0 = time.perf_counter()
        error = ""
        try:
            value = fn()
        except Exception as exc:  # a crashing check is a failing check
            value, error = float("inf"), f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(value <= limit), value, limit, time.perf_counter() - t0, error)
        results.append(res)
        if report is not None:
            report(res)
    return results
