"""Flat ``section.key = value`` configuration files.

A config is a list of assignments, one per line::

    # comment
    waveform.n = 64
    [channel]          # optional section header: prefixes following keys
    p = 3
    nu_max = 1.0

Values are Python literals (numbers, strings, lists, ``None``, ``True``);
anything that does not parse as a literal is kept as a bare string. ``#``
always starts a comment. Every key must be known; unknown keys and badly
typed values raise :class:`ConfigError` carrying the line number and key.
"""

from __future__ import annotations

import ast
import json
from pathlib import Path
from typing import Any

import numpy as np

from .channel import ChannelProfile
from .detectors import DetectorKind, detector_from_name
from .modulation import get_modulation
from .simulator import Arm, ExperimentSpec
from .waveform import AfdmConfig, PrefixMode

__all__ = [
    "ConfigError",
    "DEFAULTS",
    "WAVEFORMS",
    "parse_config_text",
    "load_config",
    "apply_overrides",
    "resolve",
    "build_experiment",
    "waveform_config",
]

MANIFEST_PREFIX = "# manifest: "


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.key = key
        self.line = line


# key -> (default, accepted python types). ``None`` defaults mean "derive".
DEFAULTS: dict[str, tuple[Any, tuple[type, ...]]] = {
    "name": ("run", (str,)),
    "waveform.n": (64, (int,)),
    "waveform.guard": (16, (int,)),
    "waveform.c1": (None, (float, int, type(None))),
    "waveform.c2": (None, (float, int, type(None))),
    "waveform.nu_design": (None, (float, int, type(None))),
    "channel.p": (3, (int,)),
    "channel.nu_max": (1.0, (float, int)),
    "channel.delays": (None, (list, tuple, type(None))),
    "modulation": ("qpsk", (str,)),
    "detector.mrc_td.k": (30, (int,)),
    "detector.mrc_td.eps": (1e-8, (float,)),
    "detector.mrc_td.literal_count": (False, (bool,)),
    "sim.arms": (["zp-afdm:mmse"], (list, tuple, str)),
    "sim.snr_db": ([0, 5, 10, 15, 20], (list, tuple)),
    "sim.master_seed": (0, (int,)),
    "sim.target_bit_errors": (500, (int, type(None))),
    "sim.frames_per_point": (None, (int, type(None))),
    "sim.max_frames": (1_000_000, (int,)),
    "sim.min_frames": (0, (int,)),
    "sim.chunk_size": (128, (int,)),
    "sim.chunks_per_round": (4, (int,)),
    "theory.mode": ("mmse", (str,)),
    "theory.waveform": ("zp-afdm", (str,)),
    "theory.doppler_draws": (100, (int,)),
    "theory.dopplers": (None, (list, tuple, type(None))),
    "theory.realizations": (1000, (int,)),
    "theory.seed": (1, (int,)),
    "complexity.n": ([64, 128, 256, 512], (list, tuple)),
    "complexity.q": (4, (int,)),
    "complexity.k": (30, (int,)),
    "complexity.eps": (1e-8, (float,)),
    "complexity.trials": (10, (int,)),
    "complexity.snr_db": (20.0, (float, int)),
    "complexity.seed": (0, (int,)),
}

# waveform token -> (prefix mode, chirped?)
WAVEFORMS = {
    "zp-afdm": (PrefixMode.ZERO_PAD, True),
    "cpp-afdm": (PrefixMode.CYCLIC_PREFIX, True),
    "zp-ofdm": (PrefixMode.ZERO_PAD, False),
    "cp-ofdm": (PrefixMode.CYCLIC_PREFIX, False),
}


def _literal(text: str) -> Any:
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse config text (or a CSV whose header embeds a run manifest)."""
    for raw in text.splitlines():
        if raw.startswith(MANIFEST_PREFIX):
            manifest = json.loads(raw[len(MANIFEST_PREFIX):])
            return dict(manifest["config"])
    out: dict[str, Any] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError("empty section header", line=lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("missing key", line=lineno)
        full = f"{section}.{key}" if section else key
        _check_key(full, lineno)
        out[full] = _check_type(full, _literal(value), lineno)
    return out


def _check_key(key: str, line: int | None = None) -> None:
    if key not in DEFAULTS:
        raise ConfigError("unknown key", key=key, line=line)


def _check_type(key: str, value: Any, line: int | None = None) -> Any:
    default, types = DEFAULTS[key]
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"expected {_type_names(types)}, got a boolean", key=key, line=line)
    if not isinstance(value, types):
        raise ConfigError(f"expected {_type_names(types)}, got {value!r}", key=key, line=line)
    if isinstance(value, tuple):
        value = list(value)
    return value


def _type_names(types) -> str:
    return " or ".join("None" if t is type(None) else t.__name__ for t in types)


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text)


def apply_overrides(config: dict[str, Any], overrides) -> dict[str, Any]:
    """Apply ``key=value`` strings on top of ``config`` (returns a new dict)."""
    out = dict(config)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        _check_key(key)
        out[key] = _check_type(key, _literal(value), None)
    return out


def resolve(config: dict[str, Any]) -> dict[str, Any]:
    """Materialize every default, including the derived chirp rates and delays."""
    for key, value in config.items():
        _check_key(key)
        _check_type(key, value)
    out = {key: default for key, (default, _) in DEFAULTS.items()}
    out.update(config)
    if isinstance(out["sim.arms"], str):
        out["sim.arms"] = [a.strip() for a in out["sim.arms"].split(",") if a.strip()]
    if out["channel.delays"] is None:
        out["channel.delays"] = list(range(out["channel.p"]))
    if out["waveform.nu_design"] is None:
        out["waveform.nu_design"] = float(out["channel.nu_max"])
    try:
        probe = AfdmConfig.for_doppler(out["waveform.n"], out["waveform.guard"], PrefixMode.ZERO_PAD,
                                       out["waveform.nu_design"], out["waveform.c1"], out["waveform.c2"])
    except ValueError as exc:
        raise ConfigError(str(exc), key="waveform.n") from exc
    out["waveform.c1"] = float(probe.c1)
    out["waveform.c2"] = float(probe.c2)
    out["channel.nu_max"] = float(out["channel.nu_max"])
    out["sim.snr_db"] = [float(s) for s in out["sim.snr_db"]]
    out["complexity.snr_db"] = float(out["complexity.snr_db"])
    try:
        get_modulation(out["modulation"])
    except ValueError:
        raise ConfigError(f"unknown modulation {out['modulation']!r}", key="modulation") from None
    if out["theory.mode"] not in ("mmse", "ml-bound"):
        raise ConfigError("expected 'mmse' or 'ml-bound'", key="theory.mode")
    dop = out["theory.dopplers"]
    if dop is not None and len(dop) != out["channel.p"]:
        raise ConfigError(f"expected {out['channel.p']} Doppler values", key="theory.dopplers")
    for arm in out["sim.arms"]:
        _parse_arm(arm, out)
    waveform_config(out["theory.waveform"], out)
    return out


def waveform_config(token: str, cfg: dict[str, Any]) -> AfdmConfig:
    try:
        mode, chirped = WAVEFORMS[token]
    except KeyError:
        raise ConfigError(f"unknown waveform {token!r}; expected one of {sorted(WAVEFORMS)}") from None
    n, guard = cfg["waveform.n"], cfg["waveform.guard"]
    try:
        if chirped:
            return AfdmConfig(n, guard, mode, cfg["waveform.c1"], cfg["waveform.c2"])
        return AfdmConfig(n, guard, mode, 0.0, 0.0)
    except ValueError as exc:
        raise ConfigError(str(exc), key="waveform.n") from exc


def _parse_arm(text: str, cfg: dict[str, Any]) -> Arm:
    if ":" not in text:
        raise ConfigError(f"arm {text!r} must look like 'waveform:detector'", key="sim.arms")
    wave, det = (part.strip() for part in text.split(":", 1))
    try:
        detector: DetectorKind = detector_from_name(det, cfg["detector.mrc_td.k"],
                                                    cfg["detector.mrc_td.eps"])
    except ValueError as exc:
        raise ConfigError(str(exc), key="sim.arms") from exc
    if detector.name == "mrc-td" and cfg["detector.mrc_td.literal_count"]:
        detector = type(detector)(detector.k, detector.eps, True)
    return Arm(f"{wave}:{detector.name}", waveform_config(wave, cfg), detector)


def channel_profile(cfg: dict[str, Any]) -> ChannelProfile:
    try:
        return ChannelProfile(cfg["channel.p"], cfg["channel.nu_max"], tuple(cfg["channel.delays"]))
    except ValueError as exc:
        raise ConfigError(str(exc), key="channel.p") from exc


def build_experiment(cfg: dict[str, Any]) -> ExperimentSpec:
    """Experiment for a resolved config."""
    arms = [_parse_arm(a, cfg) for a in cfg["sim.arms"]]
    labels = [a.label for a in arms]
    if len(set(labels)) != len(labels):
        raise ConfigError("duplicate arm", key="sim.arms")
    try:
        return ExperimentSpec(
            arms=arms,
            profile=channel_profile(cfg),
            modulation=get_modulation(cfg["modulation"]),
            snr_db=tuple(cfg["sim.snr_db"]),
            master_seed=cfg["sim.master_seed"],
            target_bit_errors=cfg["sim.target_bit_errors"],
            frames_per_point=cfg["sim.frames_per_point"],
            max_frames=cfg["sim.max_frames"],
            min_frames=cfg["sim.min_frames"],
            chunk_size=cfg["sim.chunk_size"],
            chunks_per_round=cfg["sim.chunks_per_round"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def snr_linear(snr_db) -> np.ndarray:
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
