"""Chirp transforms (DAFT/IDAFT) and frame assembly with ZP or CPP guards."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .numerics import OpCounter, dft_unitary

__all__ = [
    "PrefixMode",
    "AfdmConfig",
    "DaftOperator",
    "default_chirp_params",
    "assemble_frame",
    "strip_frame",
]


class PrefixMode(str, enum.Enum):
    ZERO_PAD = "zp"
    CYCLIC_PREFIX = "cpp"


def default_chirp_params(nu_max: float, n: int) -> tuple[float, float]:
    """Default chirp rates ``c1 = (2*ceil(nu_max) + 1) / (2N)``, ``c2 = 1 / (2N²)``."""
    if nu_max < 0:
        raise ValueError("nu_max must be non-negative")
    c1 = (2 * math.ceil(nu_max) + 1) / (2 * n)
    c2 = 1.0 / (2 * n * n)
    return c1, c2


@dataclass(frozen=True)
class AfdmConfig:
    """Frame geometry and chirp rates.

    ``guard_len`` is the ZP length or the CPP length depending on
    ``prefix_mode``. Setting ``c1 = c2 = 0`` gives plain OFDM.
    """

    n: int
    guard_len: int = 0
    prefix_mode: PrefixMode = PrefixMode.ZERO_PAD
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.guard_len < 0:
            raise ValueError("guard_len must be non-negative")
        object.__setattr__(self, "prefix_mode", PrefixMode(self.prefix_mode))

    @classmethod
    def for_doppler(cls, n: int, guard_len: int, prefix_mode=PrefixMode.ZERO_PAD,
                    nu_max: float = 0.0, c1: float | None = None,
                    c2: float | None = None) -> "AfdmConfig":
        """Config with default chirp rates for ``nu_max``; explicit rates win."""
        d1, d2 = default_chirp_params(nu_max, n)
        return cls(n, guard_len, PrefixMode(prefix_mode),
                   d1 if c1 is None else c1, d2 if c2 is None else c2)

    @property
    def frame_len(self) -> int:
        return self.n + self.guard_len

    @property
    def is_zero_pad(self) -> bool:
        return self.prefix_mode is PrefixMode.ZERO_PAD

    @property
    def prefix_len(self) -> int:
        """Samples transmitted before the data block."""
        return 0 if self.is_zero_pad else self.guard_len

    def ofdm(self) -> "AfdmConfig":
        return replace(self, c1=0.0, c2=0.0)


def _chirp(c: float, n: int) -> np.ndarray:
    idx = np.arange(n, dtype=float)
    # reduce the phase in cycles before exponentiating
    cycles = np.mod(c * idx * idx, 1.0)
    return np.exp(-2j * np.pi * cycles)


class DaftOperator:
    """``A = Λ_c2 F Λ_c1`` applied as two chirp scalings around one DFT.

    Every method works along the last axis, so stacks of vectors are fine.
    """

    def __init__(self, config: AfdmConfig):
        self.config = config
        self.n = config.n
        self.chirp1 = _chirp(config.c1, self.n)
        self.chirp2 = _chirp(config.c2, self.n)

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        if v.shape[-1] != self.n:
            raise ValueError(f"expected length {self.n} along the last axis, got {v.shape[-1]}")
        return v

    def daft(self, v, counter: OpCounter | None = None) -> np.ndarray:
        v = self._check(v)
        if counter is not None:
            counter.mul(2 * v.size)
        return self.chirp2 * dft_unitary(self.chirp1 * v, counter=counter)

    def idaft(self, x, counter: OpCounter | None = None) -> np.ndarray:
        x = self._check(x)
        if counter is not None:
            counter.mul(2 * x.size)
        return np.conj(self.chirp1) * dft_unitary(np.conj(self.chirp2) * x, inverse=True,
                                                  counter=counter)

    def matrix(self) -> np.ndarray:
        """Dense ``A`` (rows indexed by output bin)."""
        return self.daft(np.eye(self.n)).T

    def conjugate_sandwich(self, h) -> np.ndarray:
        """``A h A^H`` for a dense ``(..., N, N)`` matrix via fast transforms."""
        h = np.asarray(h, dtype=complex)
        # daft(X) == X @ A.T along the last axis
        ah = np.swapaxes(self.daft(np.swapaxes(h, -1, -2)), -1, -2)
        return np.conj(self.daft(np.conj(ah)))


def assemble_frame(s, config: AfdmConfig) -> np.ndarray:
    """Attach the guard interval to a time-domain block (last axis).

    ZP appends ``guard_len`` zeros. CPP prepends the last ``guard_len``
    samples, each multiplied by ``exp(-j2π c1 (N² + 2 N n))`` for prefix
    position ``n = -guard_len .. -1``.
    """
    s = np.asarray(s, dtype=complex)
    n, g = config.n, config.guard_len
    if s.shape[-1] != n:
        raise ValueError(f"expected length {n}, got {s.shape[-1]}")
    if config.is_zero_pad:
        pad = np.zeros(s.shape[:-1] + (g,), dtype=complex)
        return np.concatenate([s, pad], axis=-1)
    pos = np.arange(-g, 0, dtype=float)
    cycles = np.mod(config.c1 * (n * n + 2 * n * pos), 1.0)
    prefix = s[..., n - g:] * np.exp(-2j * np.pi * cycles)
    return np.concatenate([prefix, s], axis=-1)


def strip_frame(r, config: AfdmConfig) -> np.ndarray:
    """Receiver view: the ``N`` samples aligned with the data block.

    For ZP the samples past index ``N - 1`` are discarded.
    """
    r = np.asarray(r, dtype=complex)
    start = config.prefix_len
    return r[..., start : start + config.n]
