"""Gray-labelled BPSK / QPSK / 16-QAM constellations at unit average energy."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = ["ModulationKind", "ModulationScheme", "get_modulation", "parse_kind", "map_bits", "demap_symbols",
           "slice_symbols"]


class ModulationKind(str, enum.Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"
    QAM16 = "16qam"


# per-axis Gray labels for the 4-level PAM of 16-QAM: bit pair -> level
_PAM4 = {0b00: -3.0, 0b01: -1.0, 0b11: 1.0, 0b10: 3.0}


def _build_alphabet(kind: ModulationKind) -> np.ndarray:
    # index i carries the bit pattern of i written MSB first
    if kind is ModulationKind.BPSK:
        return np.array([1.0, -1.0], dtype=complex)
    if kind is ModulationKind.QPSK:
        pts = [((1 - 2 * (i >> 1)) + 1j * (1 - 2 * (i & 1))) / np.sqrt(2) for i in range(4)]
        return np.array(pts, dtype=complex)
    pts = [(_PAM4[i >> 2] + 1j * _PAM4[i & 3]) / np.sqrt(10) for i in range(16)]
    return np.array(pts, dtype=complex)


@dataclass(frozen=True)
class ModulationScheme:
    kind: ModulationKind
    alphabet: np.ndarray = field(repr=False, compare=False)

    @property
    def order(self) -> int:
        return len(self.alphabet)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @cached_property
    def labels(self) -> np.ndarray:
        """``(M, bits_per_symbol)`` bit labels, MSB first."""
        k = self.bits_per_symbol
        idx = np.arange(self.order)
        return ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)

    def bits_to_indices(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        k = self.bits_per_symbol
        if bits.shape[-1] % k:
            raise ValueError(f"bit count {bits.shape[-1]} is not a multiple of {k}")
        grouped = bits.reshape(bits.shape[:-1] + (-1, k))
        return grouped @ (1 << np.arange(k - 1, -1, -1))

    def indices_to_bits(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        bits = self.labels[indices]
        return bits.reshape(indices.shape[:-1] + (-1,)) if indices.ndim else bits


def parse_kind(kind) -> ModulationKind:
    if isinstance(kind, ModulationKind):
        return kind
    try:
        return ModulationKind(str(kind).lower())
    except ValueError:
        raise ValueError(f"unknown modulation {kind!r}; expected one of "
                         f"{[k.value for k in ModulationKind]}") from None


def get_modulation(kind) -> ModulationScheme:
    kind = parse_kind(kind)
    return ModulationScheme(kind, _build_alphabet(kind))


def map_bits(bits, modulation: ModulationScheme) -> np.ndarray:
    """Gray-map a bit array (last axis) onto constellation points."""
    return modulation.alphabet[modulation.bits_to_indices(bits)]


def demap_symbols(indices, modulation: ModulationScheme) -> np.ndarray:
    return modulation.indices_to_bits(indices)


def slice_symbols(soft, alphabet) -> np.ndarray:
    """Nearest constellation index per entry; exact ties go to the smaller index."""
    soft = np.asarray(soft, dtype=complex)
    alphabet = np.asarray(alphabet, dtype=complex)
    dist = np.abs(soft[..., None] - alphabet) ** 2
    return np.argmin(dist, axis=-1)
