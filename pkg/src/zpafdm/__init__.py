"""Zero-padded AFDM link-level simulator.

Chirp-domain modulation (DAFT), doubly selective channels with zero-padded or
chirp-periodic guards, ML / MMSE / banded-MMSE / MRC-TD detection, analytical
BER predictors and a reproducible Monte-Carlo engine.
"""

from .analysis import (
    ml_union_bound,
    ml_union_bound_averaged,
    mmse_theoretical_ber,
    mmse_theoretical_ber_averaged,
)
from .channel import (
    ChannelProfile,
    ChannelRealization,
    TdChannelMatrix,
    build_td_matrix,
    complex_noise,
    sample_realization,
    subchannel_matrix,
)
from .detectors import (
    ML,
    DetectionResult,
    MmseBanded,
    MmseConventional,
    MrcTd,
    detect_ml,
    detect_mmse_banded,
    detect_mmse_conventional,
    detect_mrc_td,
)
from .modulation import ModulationKind, ModulationScheme, demap_symbols, get_modulation, map_bits
from .numerics import CholeskyError, OpCounter, banded_cholesky, dft_unitary
from .simulator import Arm, BerCurve, BerPoint, ExperimentSpec, run_ber_sweep, run_complexity_census
from .waveform import AfdmConfig, DaftOperator, PrefixMode, assemble_frame, strip_frame

__all__ = [
    "AfdmConfig", "Arm", "BerCurve", "BerPoint", "ChannelProfile", "ChannelRealization",
    "CholeskyError", "DaftOperator", "DetectionResult", "ExperimentSpec", "ML", "MmseBanded",
    "MmseConventional", "ModulationKind", "ModulationScheme", "MrcTd", "OpCounter", "PrefixMode",
    "TdChannelMatrix", "assemble_frame", "banded_cholesky", "build_td_matrix", "complex_noise",
    "demap_symbols",
    "detect_ml", "detect_mmse_banded", "detect_mmse_conventional", "detect_mrc_td", "dft_unitary",
    "get_modulation", "map_bits", "ml_union_bound", "ml_union_bound_averaged",
    "mmse_theoretical_ber", "mmse_theoretical_ber_averaged", "run_ber_sweep",
    "run_complexity_census", "sample_realization", "strip_frame", "subchannel_matrix",
]
