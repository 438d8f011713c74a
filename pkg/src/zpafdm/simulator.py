"""Monte-Carlo BER engine and the operation-count census.

Frames are processed in fixed-size chunks. Chunk ``c`` draws all of its
randomness (bits, channel, unit noise) from ``SeedSequence(master_seed,
spawn_key=(c,))`` and every SNR point reuses the same chunks, so results do
not depend on the number of worker processes or on scheduling order. All arms
of an experiment see the same bits, channel and noise in every frame.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .channel import ChannelProfile, build_td_matrix, ChannelRealization, propagate, sample_paths, \
    td_matrices_dense, complex_noise
from .detectors import (
    ML,
    DetectorKind,
    MmseBanded,
    MmseConventional,
    MrcTd,
    conventional_mmse_mults,
    detect_mmse_banded,
    detect_mrc_td,
    ml_decisions,
    mmse_conventional_batch,
)
from .modulation import ModulationScheme, get_modulation, slice_symbols
from .waveform import AfdmConfig, DaftOperator, assemble_frame, strip_frame

__all__ = [
    "Arm",
    "ExperimentSpec",
    "BerPoint",
    "BerCurve",
    "normalize_power",
    "power_scale",
    "binomial_ci",
    "run_ber_sweep",
    "run_complexity_census",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Arm:
    """One curve: a waveform configuration paired with a detector."""

    label: str
    waveform: AfdmConfig
    detector: DetectorKind


@dataclass(frozen=True)
class ExperimentSpec:
    arms: tuple[Arm, ...]
    profile: ChannelProfile
    modulation: ModulationScheme
    snr_db: tuple[float, ...]
    master_seed: int = 0
    target_bit_errors: int | None = 500
    frames_per_point: int | None = None
    max_frames: int = 1_000_000
    min_frames: int = 0
    chunk_size: int = 128
    chunks_per_round: int = 4

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if isinstance(self.modulation, str):
            object.__setattr__(self, "modulation", get_modulation(self.modulation))
        if not self.arms:
            raise ValueError("an experiment needs at least one arm")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ValueError("SNR grid must be strictly increasing")
        if not self.snr_db:
            raise ValueError("SNR grid is empty")
        geom = {(a.waveform.n, a.waveform.guard_len) for a in self.arms}
        if len(geom) != 1:
            raise ValueError("all arms must share N and the guard length")
        n, guard = geom.pop()
        if self.profile.max_delay >= n:
            raise ValueError("delay spread does not fit the block")
        for arm in self.arms:
            if not arm.waveform.is_zero_pad and guard < self.profile.max_delay:
                raise ValueError(f"arm {arm.label!r}: prefix shorter than the delay spread")
            if isinstance(arm.detector, (MmseBanded, MrcTd)) and not arm.waveform.is_zero_pad:
                raise ValueError(f"arm {arm.label!r}: {arm.detector.name} needs a zero-padded frame")
        if guard < self.profile.max_delay:
            log.warning("zero-padding guard %d is shorter than the delay spread %d",
                        guard, self.profile.max_delay)
        if self.chunk_size < 1 or self.chunks_per_round < 1:
            raise ValueError("chunk sizes must be positive")

    @property
    def frame_cap(self) -> int:
        return self.frames_per_point if self.frames_per_point is not None else self.max_frames

    @property
    def n(self) -> int:
        return self.arms[0].waveform.n

    @property
    def frame_len(self) -> int:
        return self.arms[0].waveform.frame_len


@dataclass
class BerPoint:
    snr_db: float
    frames: int = 0
    bits: int = 0
    bit_errors: int = 0
    failures: int = 0
    nonconverged: int = 0
    mults: int = 0
    iterations: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float("nan")

    @property
    def ci(self) -> tuple[float, float]:
        return binomial_ci(self.bit_errors, self.bits)

    @property
    def mean_mults(self) -> float:
        ok = self.frames - self.failures
        return self.mults / ok if ok else float("nan")

    @property
    def mean_iters(self) -> float:
        ok = self.frames - self.failures
        return self.iterations / ok if ok else float("nan")


@dataclass
class BerCurve:
    arm: Arm
    points: list[BerPoint] = field(default_factory=list)

    @property
    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])


def binomial_ci(errors: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    alpha = 1.0 - level
    lo = 0.0 if errors == 0 else float(stats.beta.ppf(alpha / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(stats.beta.ppf(1 - alpha / 2, errors + 1, trials - errors))
    return lo, hi


def power_scale(config: AfdmConfig) -> tuple[float, float]:
    """``(amplitude, snr multiplier)`` giving ZP frames the total energy of a CPP frame."""
    if not config.is_zero_pad:
        return 1.0, 1.0
    energy = (config.n + config.guard_len) / config.n
    return math.sqrt(energy), energy


def normalize_power(frame, config: AfdmConfig):
    """Scale a frame for equal total transmit power; returns the frame and the
    factor by which the detector-side SNR grows."""
    amp, mult = power_scale(config)
    return np.asarray(frame, dtype=complex) * amp, mult


@dataclass
class _ChunkResult:
    # [arm][snr position] -> counters
    counts: list[list[BerPoint]]


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def _run_chunk(spec: ExperimentSpec, chunk: int, snr_positions: list[int], frames: int) -> _ChunkResult:
    rng = _chunk_rng(spec.master_seed, chunk)
    mod = spec.modulation
    n, k = spec.n, mod.bits_per_symbol
    bits = rng.integers(0, 2, size=(frames, n * k), dtype=np.int64)
    gains, dopplers = sample_paths(spec.profile, rng, frames)
    noise = complex_noise(rng, (frames, spec.frame_len))
    delays = spec.profile.delays
    idx_tx = mod.bits_to_indices(bits)
    x = mod.alphabet[idx_tx]

    counts = [[BerPoint(spec.snr_db[s]) for s in snr_positions] for _ in spec.arms]
    by_wave: dict[AfdmConfig, list[int]] = {}
    for a, arm in enumerate(spec.arms):
        by_wave.setdefault(arm.waveform, []).append(a)

    for cfg, arm_ids in by_wave.items():
        op = DaftOperator(cfg)
        frame, gmult = normalize_power(assemble_frame(op.idaft(x), cfg), cfg)
        amp = math.sqrt(gmult)
        clean = propagate(frame, gains, dopplers, delays, cfg)
        kinds = [spec.arms[a].detector for a in arm_ids]
        heff = None
        if any(isinstance(d, (ML, MmseConventional)) for d in kinds):
            heff = op.conjugate_sandwich(td_matrices_dense(gains, dopplers, delays, cfg))
        td = None
        if any(isinstance(d, (MmseBanded, MrcTd)) for d in kinds):
            td = [build_td_matrix(ChannelRealization(gains[f], delays, dopplers[f]), cfg)
                  for f in range(frames)]
        for j, s in enumerate(snr_positions):
            gamma = 10.0 ** (spec.snr_db[s] / 10.0)
            rx = clean + noise / math.sqrt(gamma)
            r = strip_frame(rx, cfg) / amp
            gamma_det = gamma * gmult
            y = op.daft(r) if heff is not None else None
            for a in arm_ids:
                det = spec.arms[a].detector
                pt = counts[a][j]
                hard, fails, mults, iters, nonconv = _detect_batch(det, r, y, heff, td, gamma_det, op, mod)
                ok = np.ones(frames, dtype=bool)
                ok[fails] = False
                rx_bits = mod.indices_to_bits(hard)
                pt.frames += frames
                pt.failures += len(fails)
                pt.bits += int(ok.sum()) * n * k
                pt.bit_errors += int(np.sum(rx_bits[ok] != bits[ok]))
                pt.mults += mults
                pt.iterations += iters
                pt.nonconverged += nonconv
    return _ChunkResult(counts)


def _detect_batch(det, r, y, heff, td, gamma, op, mod):
    frames = r.shape[0]
    fails: list[int] = []
    if isinstance(det, ML):
        hard = ml_decisions(y, heff, mod.alphabet)
        n, m = r.shape[1], mod.order
        return hard, fails, frames * m**n * n * (n + 1), 0, 0
    if isinstance(det, MmseConventional):
        x_hat = mmse_conventional_batch(y, heff, gamma)
        return slice_symbols(x_hat, mod.alphabet), fails, frames * conventional_mmse_mults(r.shape[1]), 0, 0
    hard = np.zeros(r.shape, dtype=np.int64)
    mults = iters = nonconv = 0
    for f in range(frames):
        try:
            if isinstance(det, MmseBanded):
                res = detect_mmse_banded(r[f], td[f], gamma, op, mod.alphabet)
            else:
                res = detect_mrc_td(r[f], td[f], gamma, det.k, det.eps, op, mod.alphabet,
                                    literal_count=det.literal_count)
        except ArithmeticError as exc:
            log.warning("detector %s failed on a frame: %s", det.name, exc)
            fails.append(f)
            continue
        hard[f] = res.hard_symbols
        mults += res.ops.complex_multiplications
        iters += res.iterations_used
        nonconv += int(not res.converged)
    return hard, fails, mults, iters, nonconv


def _merge(into: BerPoint, other: BerPoint) -> None:
    into.frames += other.frames
    into.bits += other.bits
    into.bit_errors += other.bit_errors
    into.failures += other.failures
    into.nonconverged += other.nonconverged
    into.mults += other.mults
    into.iterations += other.iterations


def _point_done(spec: ExperimentSpec, pts: list[BerPoint]) -> bool:
    frames = pts[0].frames
    if frames >= spec.frame_cap:
        return True
    if spec.frames_per_point is not None or spec.target_bit_errors is None:
        return False
    return frames >= spec.min_frames and min(p.bit_errors for p in pts) >= spec.target_bit_errors


def run_ber_sweep(spec: ExperimentSpec, workers: int = 1, progress=None) -> list[BerCurve]:
    """Simulate every arm over the SNR grid; one :class:`BerCurve` per arm."""
    curves = [BerCurve(arm, [BerPoint(s) for s in spec.snr_db]) for arm in spec.arms]
    active = list(range(len(spec.snr_db)))
    cap = spec.frame_cap
    chunk = 0
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while active:
            jobs = []
            for c in range(chunk, chunk + spec.chunks_per_round):
                start = c * spec.chunk_size
                if start >= cap:
                    break
                jobs.append((c, min(spec.chunk_size, cap - start)))
            chunk += spec.chunks_per_round
            if not jobs:
                break
            args = [(spec, c, list(active), size) for c, size in jobs]
            if pool is None:
                results = [_run_chunk(*a) for a in args]
            else:
                results = list(pool.map(_run_chunk, *zip(*args)))
            for res in results:
                for a, per_arm in enumerate(res.counts):
                    for j, s in enumerate(active):
                        _merge(curves[a].points[s], per_arm[j])
            active = [s for s in active if not _point_done(spec, [c.points[s] for c in curves])]
            if progress is not None:
                progress(chunk, active)
    finally:
        if pool is not None:
            pool.shutdown()
    return curves


def run_complexity_census(n_grid, q: int, k: int = 30, gamma_s: float = 100.0, trials: int = 10,
                          seed: int = 0, eps: float = 1e-8, nu_max: float = 1.0):
    """Mean multiplication counts per detector over random ZP instances.

    Returns rows ``(n, detector, mean_mults, mean_iters)``. Channels use
    ``q + 1`` paths at delays ``0..q``.
    """
    rows = []
    profile = ChannelProfile(q + 1, nu_max)
    for n in n_grid:
        cfg = AfdmConfig.for_doppler(n, q, "zp", nu_max=nu_max)
        op = DaftOperator(cfg)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
        banded, mrc, iters = [], [], []
        for _ in range(trials):
            gains, dopplers = sample_paths(profile, rng, 1)
            h = build_td_matrix(ChannelRealization(gains[0], profile.delays, dopplers[0]), cfg)
            x = op.idaft(complex_noise(rng, n))
            r = h.matvec(x) + complex_noise(rng, n, 1.0 / gamma_s)
            banded.append(detect_mmse_banded(r, h, gamma_s, op).ops.complex_multiplications)
            res = detect_mrc_td(r, h, gamma_s, k, eps, op)
            mrc.append(res.ops.complex_multiplications)
            iters.append(res.iterations_used)
        rows.append((n, "mmse", float(conventional_mmse_mults(n)), 0.0))
        rows.append((n, "mmse-banded", float(np.mean(banded)), 0.0))
        rows.append((n, "mrc-td", float(np.mean(mrc)), float(np.mean(iters))))
    return rows
