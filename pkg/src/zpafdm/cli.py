"""Command line front end: ``zpafdm {ber-sim,ber-theory,complexity,selftest}``.

Exit codes: 0 success, 1 selftest failure, 2 configuration error,
3 numerical failure, 4 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .analysis import ml_union_bound, ml_union_bound_averaged, mmse_theoretical_ber_averaged
from .config import ConfigError
from .detectors import SearchSpaceError
from .modulation import get_modulation
from .results import (
    BER_COLUMNS,
    COMPLEXITY_COLUMNS,
    THEORY_COLUMNS,
    RunManifest,
    ber_curve_table,
    gnuplot_script,
    loglog_slope,
    render_csv,
    write_files_atomic,
)
from .selftest import FAULTS, run_selftest
from .simulator import power_scale, run_ber_sweep, run_complexity_census

log = logging.getLogger("zpafdm")

OUT_DIR_ENV = "ZPAFDM_OUT_DIR"

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CAP = 0, 1, 2, 3, 4


def list_presets() -> list[str]:
    root = resources.files("zpafdm") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> dict:
    path = resources.files("zpafdm") / "presets" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return cfgmod.parse_config_text(path.read_text(encoding="utf-8"))


def _resolved_config(args, seed_key: str) -> dict:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.config:
        raw = cfgmod.load_config(args.config)
    elif args.preset:
        raw = load_preset(args.preset)
    else:
        raw = {}
    raw = cfgmod.apply_overrides(raw, args.set)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        raw[seed_key] = args.seed
    return cfgmod.resolve(raw)


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def _safe(label: str) -> str:
    return label.replace(":", "_").replace("/", "_")


def cmd_ber_sim(args) -> int:
    cfg = _resolved_config(args, "sim.master_seed")
    spec = cfgmod.build_experiment(cfg)
    manifest = RunManifest.create("ber-sim", cfg, "sim.master_seed")

    def progress(chunk, active):
        log.info("chunk %d done, %d SNR point(s) still running", chunk, len(active))

    curves = run_ber_sweep(spec, workers=args.workers, progress=progress)
    out = _out_dir(args)
    files = {}
    series = []
    for curve in curves:
        rows, notes = ber_curve_table(curve)
        notes = [f"arm: {curve.arm.label}"] + notes
        path = out / f"{cfg['name']}_{_safe(curve.arm.label)}.csv"
        files[path] = render_csv(manifest, BER_COLUMNS, rows, notes)
        series.append((path.name, curve.arm.label, 4))
    if args.gnuplot:
        files[out / f"{cfg['name']}_sim.gp"] = gnuplot_script(cfg["name"], series)
    for path in write_files_atomic(files):
        print(path)
    return EXIT_OK


def cmd_ber_theory(args) -> int:
    cfg = _resolved_config(args, "theory.seed")
    wave = cfgmod.waveform_config(cfg["theory.waveform"], cfg)
    profile = cfgmod.channel_profile(cfg)
    mod = get_modulation(cfg["modulation"])
    snr = np.asarray(cfg["sim.snr_db"], dtype=float)
    gamma = cfgmod.snr_linear(snr) * power_scale(wave)[1]
    rng = np.random.default_rng(cfg["theory.seed"])
    mode = cfg["theory.mode"]
    notes = [f"waveform: {cfg['theory.waveform']}"]
    if mode == "ml-bound":
        if cfg["theory.dopplers"] is not None:
            raw = ml_union_bound(wave, profile.delays, np.asarray(cfg["theory.dopplers"], float),
                                 gamma, mod, clip=False)
            err = np.zeros_like(raw)
            notes.append("doppler geometry fixed by theory.dopplers")
        else:
            raw, err = ml_union_bound_averaged(wave, profile, gamma, mod, cfg["theory.doppler_draws"], rng)
            notes.append(f"bound averaged over {cfg['theory.doppler_draws']} Jakes Doppler draws")
        notes += [f"unclipped snr_db={s:.17g} bound={b:.17g}" for s, b in zip(snr, raw)]
        mean = np.minimum(raw, 1.0)
    else:
        mean, err = mmse_theoretical_ber_averaged(wave, profile, gamma, mod, cfg["theory.realizations"], rng)
        notes.append(f"closed form averaged over {cfg['theory.realizations']} channel realizations")
    rows = [(s, m, e, mode) for s, m, e in zip(snr, mean, err)]
    manifest = RunManifest.create("ber-theory", cfg, "theory.seed")
    out = _out_dir(args)
    path = out / f"{cfg['name']}_theory.csv"
    files = {path: render_csv(manifest, THEORY_COLUMNS, rows, notes)}
    if args.gnuplot:
        files[out / f"{cfg['name']}_theory.gp"] = gnuplot_script(cfg["name"], [(path.name, mode, 2)])
    for p in write_files_atomic(files):
        print(p)
    return EXIT_OK


def cmd_complexity(args) -> int:
    cfg = _resolved_config(args, "complexity.seed")
    gamma = float(cfgmod.snr_linear(cfg["complexity.snr_db"]))
    rows = run_complexity_census(cfg["complexity.n"], cfg["complexity.q"], k=cfg["complexity.k"],
                                 gamma_s=gamma, trials=cfg["complexity.trials"],
                                 seed=cfg["complexity.seed"], eps=cfg["complexity.eps"],
                                 nu_max=cfg["channel.nu_max"])
    detectors = list(dict.fromkeys(r[1] for r in rows))
    footer = []
    for det in detectors:
        pts = [(r[0], r[2]) for r in rows if r[1] == det]
        if len(pts) > 1:
            footer.append(f"slope,{det},{loglog_slope(*zip(*pts)):.17g}")
        iters = [r[3] for r in rows if r[1] == det and r[3]]
        if iters:
            footer.append(f"mean_iters,{det},{','.join('%.17g' % i for i in iters)}")
    manifest = RunManifest.create("complexity", cfg, "complexity.seed")
    out = _out_dir(args)
    path = out / f"{cfg['name']}_complexity.csv"
    files = {path: render_csv(manifest, COMPLEXITY_COLUMNS, [r[:3] for r in rows],
                              [f"q: {cfg['complexity.q']}, k: {cfg['complexity.k']}"], footer)}
    if args.gnuplot:
        series = [(path.name, det, f"(strcol(2) eq '{det}' ? $3 : NaN)") for det in detectors]
        files[out / f"{cfg['name']}_complexity.gp"] = gnuplot_script(
            cfg["name"], series, logx=True, xlabel="N", ylabel="complex multiplications")
    for p in write_files_atomic(files):
        print(p)
    return EXIT_OK


def cmd_selftest(args) -> int:
    width = 48
    print(f"{'check':<{width}} {'result':>6} {'value':>11} {'limit':>9} {'time':>7}")

    def report(res):
        status = "PASS" if res.passed else "FAIL"
        print(f"{res.name:<{width}} {status:>6} {res.value:>11.3e} {res.limit:>9.1e} {res.seconds:>6.2f}s")
        if res.error:
            print(f"    error: {res.error}")

    results = run_selftest(args.inject_fault, report)
    failed = sum(not r.passed for r in results)
    print(f"{len(results)} checks run, {len(results) - failed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zpafdm", description="Zero-padded AFDM link simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file (or a CSV produced by this tool)")
        p.add_argument("--preset", help="bundled preset name (see: zpafdm presets)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or .)")
        p.add_argument("--seed", type=int, help="seed for this command's random streams")
        p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")

    p = sub.add_parser("ber-sim", help="Monte-Carlo BER sweep")
    common(p)
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_ber_sim)

    p = sub.add_parser("ber-theory", help="ML union bound or MMSE closed-form BER")
    common(p)
    p.set_defaults(func=cmd_ber_theory)

    p = sub.add_parser("complexity", help="multiplication counts per detector")
    common(p)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    p.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)

    sub.add_parser("presets", help="list bundled presets").set_defaults(
        func=lambda args: print("\n".join(list_presets())) or EXIT_OK)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SearchSpaceError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
