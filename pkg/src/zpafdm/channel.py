"""Doubly-selective channel: sampling, time-domain matrices and the
affine-frequency-domain effective channel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import BandedLowerTriangular
from .waveform import AfdmConfig, DaftOperator

__all__ = [
    "ChannelProfile",
    "ChannelRealization",
    "TdChannelMatrix",
    "sample_realization",
    "sample_paths",
    "build_td_matrix",
    "td_matrices_dense",
    "propagate",
    "apply_channel",
    "complex_noise",
    "effective_matrix",
    "subchannel_entry",
    "subchannel_matrix",
]

# Below this per-step phase (radians, modulo 2π) the geometric-series form of
# the Doppler sum loses precision and the near-constant form is used.
ZETA_PHASE_TOL = 1e-9


@dataclass(frozen=True)
class ChannelProfile:
    """Path count, maximum normalized Doppler and the fixed delay set.

    Delays default to ``0 .. P-1`` so the delay spread is ``P - 1``.
    """

    p: int
    nu_max: float = 0.0
    delays: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.nu_max < 0:
            raise ValueError("nu_max must be non-negative")
        delays = tuple(range(self.p)) if self.delays is None else tuple(int(d) for d in self.delays)
        if len(delays) != self.p:
            raise ValueError(f"expected {self.p} delays, got {len(delays)}")
        if len(set(delays)) != len(delays) or min(delays) < 0:
            raise ValueError("delays must be distinct non-negative integers")
        object.__setattr__(self, "delays", delays)

    @property
    def max_delay(self) -> int:
        return max(self.delays)

    @property
    def gain_variance(self) -> float:
        return 1.0 / self.p


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gains", np.asarray(self.gains, dtype=complex).ravel())
        object.__setattr__(self, "delays", np.asarray(self.delays, dtype=int).ravel())
        object.__setattr__(self, "dopplers", np.asarray(self.dopplers, dtype=float).ravel())
        if not (len(self.gains) == len(self.delays) == len(self.dopplers)):
            raise ValueError("gains, delays and dopplers must have equal length")

    @property
    def p(self) -> int:
        return len(self.gains)

    @property
    def max_delay(self) -> int:
        return int(self.delays.max())


def complex_noise(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_paths(profile: ChannelProfile, rng: np.random.Generator, size: int):
    """Draw ``size`` realizations at once as ``(gains, dopplers)`` arrays of shape ``(size, P)``.

    Gains are CN(0, 1/P); Dopplers follow Jakes, ``nu_max * cos(theta)`` with
    ``theta`` uniform on ``[-pi, pi]``.
    """
    gains = complex_noise(rng, (size, profile.p), profile.gain_variance)
    theta = rng.uniform(-np.pi, np.pi, (size, profile.p))
    dopplers = profile.nu_max * np.cos(theta)
    return gains, dopplers


def sample_realization(profile: ChannelProfile, rng: np.random.Generator) -> ChannelRealization:
    gains, dopplers = sample_paths(profile, rng, 1)
    return ChannelRealization(gains[0], profile.delays, dopplers[0])


def _doppler_phase(dopplers, n: int, times) -> np.ndarray:
    # exp(-j 2π nu t / N), broadcast as (..., P, len(times))
    return np.exp(-2j * np.pi * np.asarray(dopplers)[..., None] * np.asarray(times, dtype=float) / n)


def _cpp_phase(c1: float, n: int, positions) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)
    return np.exp(-2j * np.pi * np.mod(c1 * (n * n + 2 * n * pos), 1.0))


@dataclass
class TdChannelMatrix:
    """Time-domain channel ``H = sum_i h_i Δ_{nu_i} Π^{l_i}`` for one block.

    ZP blocks keep a banded lower-triangular form; CPP blocks are dense with
    the wrapped (upper-right) entries carrying the prefix phase.
    """

    config: AfdmConfig
    delays: tuple[int, ...]
    banded: BandedLowerTriangular | None = None
    dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def bandwidth(self) -> int:
        return max(self.delays)

    def to_dense(self) -> np.ndarray:
        if self.dense is None:
            self.dense = self.banded.to_dense()
        return self.dense

    def matvec(self, s) -> np.ndarray:
        if self.banded is not None:
            return self.banded.matvec(s)
        return self.dense @ np.asarray(s, dtype=complex)

    def column_rows(self, col: int) -> np.ndarray:
        """Row indices that can be non-zero in column ``col`` (ZP form)."""
        rows = col + np.asarray(sorted(self.delays))
        return rows[rows < self.n]


def build_td_matrix(real: ChannelRealization, config: AfdmConfig) -> TdChannelMatrix:
    n = config.n
    if real.max_delay >= n:
        raise ValueError(f"delay {real.max_delay} does not fit a block of {n} samples")
    delays = tuple(sorted(set(int(d) for d in real.delays)))
    q = max(delays)
    rows = np.arange(n)
    diags = np.zeros((q + 1, n), dtype=complex)
    phases = _doppler_phase(real.dopplers, n, rows)
    for h, l, ph in zip(real.gains, real.delays, phases):
        diags[l] += h * ph
    banded = BandedLowerTriangular(diags)
    if config.is_zero_pad:
        return TdChannelMatrix(config, delays, banded=banded)
    dense = banded.to_dense()
    for h, l, ph in zip(real.gains, real.delays, phases):
        if l == 0:
            continue
        p = np.arange(l)
        # row p reads prefix sample p - l, i.e. block sample N + p - l
        dense[p, n + p - l] += h * ph[p] * _cpp_phase(config.c1, n, p - l)
    return TdChannelMatrix(config, delays, banded=None, dense=dense)


def td_matrices_dense(gains, dopplers, delays, config: AfdmConfig) -> np.ndarray:
    """Dense ``(B, N, N)`` time-domain matrices for a batch of realizations."""
    gains = np.atleast_2d(gains)
    dopplers = np.atleast_2d(dopplers)
    n = config.n
    rows = np.arange(n)
    out = np.zeros((gains.shape[0], n, n), dtype=complex)
    phases = _doppler_phase(dopplers, n, rows)  # (B, P, N)
    for i, l in enumerate(delays):
        coef = gains[:, i, None] * phases[:, i, :]
        out[:, rows[l:], rows[l:] - l] += coef[:, l:]
        if not config.is_zero_pad and l > 0:
            p = rows[:l]
            out[:, p, n + p - l] += coef[:, :l] * _cpp_phase(config.c1, n, p - l)
    return out


def propagate(frame, gains, dopplers, delays, config: AfdmConfig) -> np.ndarray:
    """Noiseless sample-by-sample time-varying convolution over a full frame.

    ``frame`` may be ``(L,)`` or ``(B, L)``; gains/dopplers ``(P,)`` or ``(B, P)``.
    The Doppler clock starts at the first data sample.
    """
    frame = np.asarray(frame, dtype=complex)
    gains = np.asarray(gains, dtype=complex)
    dopplers = np.asarray(dopplers, dtype=float)
    length = frame.shape[-1]
    times = np.arange(length) - config.prefix_len
    phases = _doppler_phase(dopplers, config.n, times)  # (..., P, L)
    out = np.zeros(np.broadcast_shapes(frame.shape, gains.shape[:-1] + (length,)), dtype=complex)
    for i, l in enumerate(delays):
        l = int(l)
        if l >= length:
            continue
        shifted = np.zeros_like(frame)
        shifted[..., l:] = frame[..., : length - l]
        out += gains[..., i, None] * phases[..., i, :] * shifted
    return out


def apply_channel(frame, real: ChannelRealization, sigma2: float, rng: np.random.Generator,
                  config: AfdmConfig) -> np.ndarray:
    """Pass a frame through the channel and add CN(0, sigma2) noise on every sample."""
    r = propagate(frame, real.gains, real.dopplers, real.delays, config)
    if sigma2 > 0:
        r = r + complex_noise(rng, r.shape, sigma2)
    return r


def effective_matrix(h: TdChannelMatrix | np.ndarray, op: DaftOperator) -> np.ndarray:
    """``H_eff = A H A^H`` through the fast transforms."""
    dense = h.to_dense() if isinstance(h, TdChannelMatrix) else np.asarray(h, dtype=complex)
    return op.conjugate_sandwich(dense)


def _zeta(theta, l: int, n: int):
    """``sum_{k=l}^{N-1} exp(-j theta k)`` with a safe branch near theta = 0 mod 2π."""
    theta = np.asarray(theta, dtype=float)
    resid = theta - 2 * np.pi * np.round(theta / (2 * np.pi))
    small = np.abs(resid) < ZETA_PHASE_TOL
    safe = np.where(small, 1.0, resid)
    geo = (np.exp(-1j * safe * l) - np.exp(-1j * safe * n)) / (1 - np.exp(-1j * safe))
    flat = (n - l) * np.exp(-0.5j * resid * (n - 1 + l))
    return np.where(small, flat, geo)


def subchannel_entry(delay: int, doppler: float, p: int, q: int, config: AfdmConfig) -> complex:
    """Closed-form ``(p, q)`` entry of ``A Δ_nu Π^l A^H`` for a zero-padded block."""
    n, c1, c2 = config.n, config.c1, config.c2
    if not (0 <= p < n and 0 <= q < n):
        raise IndexError("entry index out of range")
    return complex(subchannel_matrix(delay, doppler, config, rows=[p], cols=[q])[0, 0])


def subchannel_matrix(delay: int, doppler: float, config: AfdmConfig, rows=None, cols=None) -> np.ndarray:
    """Per-path affine-domain matrix.

    ZP blocks use the closed form; CPP blocks are built as ``A H_path A^H``.
    """
    n, c1, c2 = config.n, config.c1, config.c2
    p = np.arange(n) if rows is None else np.asarray(rows)
    q = np.arange(n) if cols is None else np.asarray(cols)
    if not config.is_zero_pad:
        real = ChannelRealization([1.0], [delay], [doppler])
        full = effective_matrix(build_td_matrix(real, config), DaftOperator(config))
        return full[np.ix_(p, q)]
    pp, qq = p[:, None].astype(float), q[None, :].astype(float)
    l = int(delay)
    theta = 2 * np.pi / n * (pp - qq + doppler + 2 * n * c1 * l)
    cycles = c1 * l * l - qq * l / n + c2 * (qq * qq - pp * pp)
    prefactor = np.exp(2j * np.pi * np.mod(cycles, 1.0)) / n
    return prefactor * _zeta(theta, l, n)
