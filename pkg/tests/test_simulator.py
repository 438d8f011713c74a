import math

import numpy as np
import pytest

from zpafdm.channel import ChannelProfile
from zpafdm.detectors import ML, MmseBanded, MmseConventional, MrcTd
from zpafdm.modulation import get_modulation
from zpafdm.simulator import (
    Arm,
    BerPoint,
    ExperimentSpec,
    binomial_ci,
    normalize_power,
    power_scale,
    run_ber_sweep,
    run_complexity_census,
)
from zpafdm.waveform import AfdmConfig, DaftOperator, assemble_frame


def flat_rayleigh_bpsk(gamma):
    """Exact BPSK BER over a flat Rayleigh channel with coherent detection."""
    return 0.5 * (1 - math.sqrt(gamma / (1 + gamma)))


def small_spec(**kw):
    zp = AfdmConfig.for_doppler(8, 2, "zp", nu_max=1)
    base = dict(
        arms=(Arm("zp-mmse", zp, MmseConventional()), Arm("zp-banded", zp, MmseBanded()),
              Arm("cpp-mmse", AfdmConfig.for_doppler(8, 2, "cpp", nu_max=1), MmseConventional())),
        profile=ChannelProfile(3, 1.0),
        modulation="qpsk",
        snr_db=(0.0, 10.0, 20.0),
        master_seed=11,
        target_bit_errors=None,
        frames_per_point=600,
        chunk_size=100,
        chunks_per_round=2,
    )
    base.update(kw)
    return ExperimentSpec(**base)


class TestPowerNormalization:
    def test_no_guard_is_identity(self):
        assert power_scale(AfdmConfig(16, 0, "zp")) == (1.0, 1.0)

    def test_cpp_not_scaled(self):
        assert power_scale(AfdmConfig(16, 4, "cpp")) == (1.0, 1.0)

    def test_n256_g64(self):
        amp, mult = power_scale(AfdmConfig(256, 64, "zp"))
        assert amp == pytest.approx(math.sqrt(1.25), rel=1e-15)
        assert mult == pytest.approx(1.25, rel=1e-15)

    def test_energy_audit(self):
        rng = np.random.default_rng(0)
        mod = get_modulation("qpsk")
        n, g, frames = 64, 16, 10_000
        x = mod.alphabet[rng.integers(0, 4, (frames, n))]
        energies = {}
        for mode in ("zp", "cpp"):
            cfg = AfdmConfig.for_doppler(n, g, mode, nu_max=0.5)
            tx, _ = normalize_power(assemble_frame(DaftOperator(cfg).idaft(x), cfg), cfg)
            energies[mode] = np.mean(np.sum(np.abs(tx) ** 2, axis=-1))
        assert abs(energies["zp"] / energies["cpp"] - 1) <= 0.005
        assert energies["cpp"] == pytest.approx(n + g, rel=0.005)


class TestSpecValidation:
    def test_needs_arms(self):
        with pytest.raises(ValueError):
            small_spec(arms=())

    def test_snr_increasing(self):
        with pytest.raises(ValueError):
            small_spec(snr_db=(10.0, 5.0))

    def test_mismatched_geometry(self):
        with pytest.raises(ValueError):
            small_spec(arms=(Arm("a", AfdmConfig(8, 2), ML()), Arm("b", AfdmConfig(16, 2), ML())))

    def test_banded_needs_zero_pad(self):
        with pytest.raises(ValueError):
            small_spec(arms=(Arm("a", AfdmConfig.for_doppler(8, 2, "cpp", nu_max=1), MmseBanded()),))

    def test_short_cyclic_prefix(self):
        with pytest.raises(ValueError):
            small_spec(arms=(Arm("a", AfdmConfig(8, 1, "cpp"), MmseConventional()),))


class TestStatistics:
    def test_ci_contains_ber(self):
        for e, n in [(0, 100), (5, 100), (100, 100), (37, 12345)]:
            lo, hi = binomial_ci(e, n)
            assert lo <= e / n <= hi

    def test_ci_matches_known_value(self):
        # Clopper-Pearson, 0 successes in 10 trials: upper = 1 - 0.025^(1/10)
        assert binomial_ci(0, 10)[1] == pytest.approx(1 - 0.025**0.1, rel=1e-10)

    def test_point_accessors(self):
        pt = BerPoint(5.0, frames=10, bits=200, bit_errors=4, failures=2, mults=80, iterations=16)
        assert pt.ber == 0.02
        assert pt.mean_mults == 10.0 and pt.mean_iters == 2.0


class TestSweep:
    def test_deterministic_across_workers(self):
        spec = small_spec()
        a = run_ber_sweep(spec, workers=1)
        b = run_ber_sweep(spec, workers=2)
        assert [[vars(p) for p in c.points] for c in a] == [[vars(p) for p in c.points] for c in b]

    def test_frame_budget_and_counts(self):
        curves = run_ber_sweep(small_spec())
        for c in curves:
            for p in c.points:
                assert p.frames == 600 and p.bits == 600 * 16 and 0 <= p.bit_errors <= p.bits
                lo, hi = p.ci
                assert lo <= p.ber <= hi

    def test_banded_and_conventional_identical(self):
        curves = run_ber_sweep(small_spec())
        assert [p.bit_errors for p in curves[0].points] == [p.bit_errors for p in curves[1].points]

    def test_ber_monotone(self):
        for c in run_ber_sweep(small_spec(frames_per_point=1200)):
            for lo_pt, hi_pt in zip(c.points, c.points[1:]):
                # the higher-SNR point may not exceed the lower one beyond the CIs
                assert hi_pt.ci[0] <= lo_pt.ci[1]
            assert c.points[-1].ber < c.points[0].ber

    def test_noiseless(self):
        zp = AfdmConfig.for_doppler(8, 2, "zp", nu_max=1)
        spec = small_spec(arms=(Arm("ml", AfdmConfig.for_doppler(4, 2, "zp", nu_max=1), ML()),),
                          profile=ChannelProfile(3, 1.0), snr_db=(120.0,), frames_per_point=100)
        assert run_ber_sweep(spec)[0].points[0].bit_errors == 0
        spec = small_spec(arms=(Arm("a", zp, MmseConventional()), Arm("b", zp, MmseBanded()),
                                Arm("c", zp, MrcTd(k=3000))), snr_db=(120.0,), frames_per_point=100)
        for c in run_ber_sweep(spec):
            assert c.points[0].bit_errors == 0

    def test_stops_on_target(self):
        spec = small_spec(target_bit_errors=50, frames_per_point=None, max_frames=100_000)
        curves = run_ber_sweep(spec)
        low = [c.points[0] for c in curves]
        assert min(p.bit_errors for p in low) >= 50
        assert low[0].frames < 100_000

    def test_ml_not_worse_than_mmse_paired(self):
        cfg = AfdmConfig.for_doppler(4, 2, "zp", nu_max=1)
        spec = small_spec(arms=(Arm("ml", cfg, ML()), Arm("mmse", cfg, MmseConventional())),
                          snr_db=(5.0, 10.0, 15.0), frames_per_point=4000, chunk_size=1000)
        ml, mmse = run_ber_sweep(spec)
        for a, b in zip(ml.points, mmse.points):
            assert a.bit_errors <= b.bit_errors

    def test_flat_rayleigh_end_to_end(self):
        # one symbol per frame, so every bit sees an independent fade and the binomial CI applies
        cfg = AfdmConfig.for_doppler(1, 0, "zp", nu_max=0)
        spec = ExperimentSpec(arms=(Arm("zp", cfg, MmseConventional()),), profile=ChannelProfile(1, 0.0),
                              modulation="bpsk", snr_db=(0.0, 6.0), master_seed=2, target_bit_errors=2000,
                              max_frames=200_000, chunk_size=1000)
        for p in run_ber_sweep(spec)[0].points:
            ref = flat_rayleigh_bpsk(10 ** (p.snr_db / 10))
            sigma = math.sqrt(ref * (1 - ref) / p.bits)
            assert abs(p.ber - ref) <= 3 * sigma

    def test_nonconverged_counted(self):
        zp = AfdmConfig.for_doppler(8, 2, "zp", nu_max=1)
        spec = small_spec(arms=(Arm("mrc", zp, MrcTd(k=1)),), snr_db=(20.0,), frames_per_point=50)
        pt = run_ber_sweep(spec)[0].points[0]
        assert pt.nonconverged > 0 and pt.iterations == 50


class TestComplexityCensus:
    @pytest.fixture(scope="class")
    @classmethod
    def rows(cls):
        return run_complexity_census([128, 256], q=4, trials=3, seed=1)

    def lookup(self, rows, n, det):
        return next(r[2] for r in rows if r[0] == n and r[1] == det)

    def test_conventional_cube_law(self, rows):
        assert 7 <= self.lookup(rows, 256, "mmse") / self.lookup(rows, 128, "mmse") <= 9

    def test_banded_linear(self, rows):
        assert 1.8 <= self.lookup(rows, 256, "mmse-banded") / self.lookup(rows, 128, "mmse-banded") <= 2.4

    def test_conventional_dominates(self, rows):
        assert self.lookup(rows, 256, "mmse") > 20 * self.lookup(rows, 256, "mmse-banded")
        assert self.lookup(rows, 256, "mmse") > 20 * self.lookup(rows, 256, "mrc-td")

    def test_rows_shape(self, rows):
        assert len(rows) == 6
        assert {r[1] for r in rows} == {"mmse", "mmse-banded", "mrc-td"}
        assert all(r[3] == 0.0 for r in rows if r[1] != "mrc-td")
        assert all(1 <= r[3] <= 30 for r in rows if r[1] == "mrc-td")
