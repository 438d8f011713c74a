"""Run manifests and CSV rendering for simulation, theory and census output."""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .simulator import BerCurve

__all__ = [
    "CSV_SCHEMA",
    "SNR_NOTE",
    "RunManifest",
    "tool_version",
    "format_value",
    "render_csv",
    "write_files_atomic",
    "ber_curve_table",
    "loglog_slope",
    "gnuplot_script",
]

CSV_SCHEMA = "zpafdm-csv/1"
SNR_NOTE = ("snr_db is the per-symbol SNR of the cyclic-prefix reference frame; zero-padded "
            "frames carry the same total energy and their detector SNR is scaled by (N+guard)/N")

BER_COLUMNS = ("snr_db", "bits", "bit_errors", "ber", "ci_low", "ci_high", "mean_mults", "mean_iters")
THEORY_COLUMNS = ("snr_db", "bound_or_ber", "std_err", "mode")
COMPLEXITY_COLUMNS = ("n", "detector", "mean_mults")


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = float(epoch) if epoch else time.time()
    return datetime.fromtimestamp(when, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to regenerate an output file.

    ``config`` is the fully resolved flat configuration (every default
    materialized, chirp rates and delays included).
    """

    command: str
    config: dict
    version: str
    timestamp: str
    master_seed: int
    schema: str = CSV_SCHEMA

    @classmethod
    def create(cls, command: str, config: dict[str, Any], seed_key: str) -> "RunManifest":
        return cls(command, dict(config), tool_version(), _timestamp(), int(config[seed_key]))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def render_csv(manifest: RunManifest, columns: Sequence[str], rows: Iterable[Sequence],
               notes: Sequence[str] = (), footer: Sequence[str] = ()) -> str:
    lines = [f"# {CSV_SCHEMA}", f"# manifest: {manifest.to_json()}", f"# {SNR_NOTE}"]
    lines += [f"# {note}" for note in notes]
    lines.append(",".join(columns))
    lines += [",".join(format_value(v) for v in row) for row in rows]
    lines += [f"# {item}" for item in footer]
    return "\n".join(lines) + "\n"


def write_files_atomic(files: dict[Path, str]) -> list[Path]:
    """Write every file to a temporary sibling first, then rename them all.

    If anything fails before the renames, no target file is touched.
    """
    staged: list[tuple[str, Path]] = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)
    return [path for _, path in staged]


def ber_curve_table(curve: BerCurve) -> tuple[list[tuple], list[str]]:
    """CSV rows plus per-point bookkeeping notes (frames, failures, non-convergence)."""
    rows, notes = [], []
    for p in curve.points:
        lo, hi = p.ci
        rows.append((p.snr_db, p.bits, p.bit_errors, p.ber, lo, hi, p.mean_mults, p.mean_iters))
        notes.append(f"snr_db={format_value(p.snr_db)} frames={p.frames} failures={p.failures} "
                     f"nonconverged={p.nonconverged}")
    return rows, notes


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def gnuplot_script(title: str, series: Sequence[tuple[str, str, int]], logx: bool = False,
                   xlabel: str = "SNR (dB)", ylabel: str = "BER") -> str:
    """Plot script for ``(file, label, y column)`` series with x in column 1."""
    out = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set logscale y",
        "set grid",
        "set key bottom left",
    ]
    if logx:
        out.append("set logscale x")
    plots = [f"'{f}' every ::1 using 1:{col} with linespoints title '{label}'" for f, label, col in series]
    out.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(out) + "\n"
