import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erfc as scipy_erfc
from scipy.stats import norm

from zpafdm.analysis import (
    ml_union_bound,
    ml_union_bound_averaged,
    ml_union_bound_naive,
    mmse_bias_matrix,
    mmse_diag_t,
    mmse_theoretical_ber,
    mmse_theoretical_ber_averaged,
    modulation_constants,
    pairwise_context,
    pep_from_eigenvalues,
)
from zpafdm.channel import ChannelProfile, complex_noise, subchannel_matrix
from zpafdm.detectors import SearchSpaceError
from zpafdm.modulation import get_modulation, slice_symbols
from zpafdm.waveform import AfdmConfig


def exact_gray_ber(mod, gamma):
    """Exact per-bit error rate of a square QAM/PAM alphabet with per-axis slicing over AWGN."""
    a, lab = mod.alphabet, mod.labels
    sigma = np.sqrt(1 / (2 * gamma))
    re = np.unique(np.round(a.real, 12))
    im = np.unique(np.round(a.imag, 12))

    def region_probs(x, levels):
        b = np.concatenate([[-np.inf], (levels[1:] + levels[:-1]) / 2, [np.inf]])
        return norm.cdf((b[1:] - x) / sigma) - norm.cdf((b[:-1] - x) / sigma)

    total = 0.0
    for i, x in enumerate(a):
        pr, pi = region_probs(x.real, re), region_probs(x.imag, im)
        for u, ru in enumerate(re):
            for v, iv in enumerate(im):
                j = int(np.argmin(np.abs(a - (ru + 1j * iv))))
                total += pr[u] * pi[v] * np.sum(lab[i] != lab[j])
    return total / (mod.order * mod.bits_per_symbol)


class TestPep:
    def test_zero_snr(self):
        assert pep_from_eigenvalues([[1.0, 2.0]], [0.0], 2)[0, 0] == pytest.approx(1 / 3, abs=1e-15)

    def test_hand_value(self):
        p = 3
        lam = np.array([[4.0 * p, 0.0, 0.0]])
        assert pep_from_eigenvalues(lam, [1.0], p)[0, 0] == pytest.approx(1 / 24 + 3 / 28, rel=1e-14)

    def test_symmetric_in_delta(self):
        rng = np.random.default_rng(0)
        cfg = AfdmConfig.for_doppler(6, 2, "zp", nu_max=1)
        subs = [subchannel_matrix(l, v, cfg) for l, v in zip((0, 1, 2), (0.3, -0.7, 0.9))]
        d = complex_noise(rng, 6)
        a = pep_from_eigenvalues(pairwise_context(d, subs).eigenvalues, [5.0], 3)
        b = pep_from_eigenvalues(pairwise_context(-d, subs).eigenvalues, [5.0], 3)
        assert a[0] == pytest.approx(b[0], rel=1e-12)

    @pytest.mark.parametrize("rank", [1, 2, 3, 4])
    def test_diversity_slope(self, rank):
        lam = np.zeros((1, 4))
        lam[0, :rank] = np.linspace(0.5, 2.0, rank)
        g = 10 ** (np.linspace(30, 60, 7) / 10)
        pep = pep_from_eigenvalues(lam, g, 4)[0]
        slope = np.polyfit(np.log10(g), np.log10(pep), 1)[0]
        assert abs(slope + rank) <= 0.05

    def test_rank_from_context(self):
        cfg = AfdmConfig.for_doppler(6, 1, "zp", nu_max=1)
        subs = [subchannel_matrix(0, 0.0, cfg), subchannel_matrix(1, 0.5, cfg)]
        ctx = pairwise_context(np.eye(6)[0] * 2, subs)
        assert ctx.rank == 2
        assert ctx.theta.shape == (2, 2)
        np.testing.assert_allclose(ctx.theta, ctx.theta.conj().T, atol=1e-14)


class TestUnionBound:
    def test_single_symbol_closed_form(self):
        cfg = AfdmConfig.for_doppler(1, 0, "zp", nu_max=0)
        g = np.array([0.5, 3.0, 100.0])
        bound = ml_union_bound(cfg, (0,), (0.0,), g, get_modulation("bpsk"), clip=False)
        # one difference of magnitude 2 per error event: Θ = 4, P = 1
        expect = 1 / (12 * (1 + g)) + 1 / (4 * (1 + 4 * g / 3))
        np.testing.assert_allclose(bound, expect, rtol=1e-12)

    @pytest.mark.parametrize("n,mod", [(2, "qpsk"), (3, "bpsk"), (2, "16qam")])
    def test_grouped_equals_naive(self, n, mod):
        cfg = AfdmConfig.for_doppler(n, 1, "zp", nu_max=1)
        g = np.array([1.0, 10.0, 100.0])
        m = get_modulation(mod)
        fast = ml_union_bound(cfg, (0, 1), (0.4, -0.8), g, m, clip=False)
        slow = ml_union_bound_naive(cfg, (0, 1), (0.4, -0.8), g, m)
        # the unclipped 16QAM bound is O(10) at low SNR, so compare relative to its size
        assert np.max(np.abs(fast - slow) / np.maximum(1.0, np.abs(slow))) <= 1e-12

    def test_diversity_ordering(self):
        cfg = AfdmConfig.for_doppler(6, 3, "zp", nu_max=1)
        mod = get_modulation("bpsk")
        dops = (0.9, -0.4, 0.65, -1.0)
        vals = [ml_union_bound(cfg, tuple(range(p)), dops[:p], [100.0], mod)[0] for p in (2, 3, 4)]
        assert vals[0] > vals[1] > vals[2]

    def test_clipped_at_one(self):
        cfg = AfdmConfig.for_doppler(4, 1, "zp", nu_max=1)
        b = ml_union_bound(cfg, (0, 1), (0.2, 0.5), [1e-3], get_modulation("qpsk"))
        assert b[0] <= 1.0

    @given(seed=st.integers(0, 2**31))
    @settings(max_examples=15, deadline=None)
    def test_monotone_in_snr(self, seed):
        rng = np.random.default_rng(seed)
        cfg = AfdmConfig.for_doppler(4, 2, "zp", nu_max=1)
        g = 10 ** (np.arange(0, 41, 5) / 10)
        b = ml_union_bound(cfg, (0, 1, 2), rng.uniform(-1, 1, 3), g, get_modulation("bpsk"), clip=False)
        assert np.all(np.diff(b) < 0)

    def test_cap(self):
        cfg = AfdmConfig(16, 0)
        with pytest.raises(SearchSpaceError):
            ml_union_bound(cfg, (0,), (0.0,), [1.0], get_modulation("qpsk"))

    def test_averaged_reproducible(self):
        cfg = AfdmConfig.for_doppler(4, 1, "zp", nu_max=1)
        prof = ChannelProfile(2, 1.0)
        a = ml_union_bound_averaged(cfg, prof, [10.0], get_modulation("bpsk"), 20, np.random.default_rng(1))
        b = ml_union_bound_averaged(cfg, prof, [10.0], get_modulation("bpsk"), 20, np.random.default_rng(1))
        assert a[0][0] == b[0][0] and a[1][0] > 0


class TestMmseTheory:
    def test_identity_bias(self):
        t, sinr = mmse_bias_matrix(np.eye(5), 7.0)
        np.testing.assert_allclose(t, np.eye(5) * 7 / 8, atol=1e-14)
        np.testing.assert_allclose(sinr, 7.0, rtol=1e-12)

    def test_diag_in_unit_interval_and_matches_solve(self):
        rng = np.random.default_rng(2)
        h = complex_noise(rng, (8, 8))
        t, _ = mmse_bias_matrix(h, 10.0)
        d = mmse_diag_t(h, [10.0])[0]
        np.testing.assert_allclose(d, np.diag(t).real, atol=1e-12)
        assert np.all((d > 0) & (d < 1))

    def test_high_snr_limit(self):
        h = complex_noise(np.random.default_rng(3), (6, 6)) + 2 * np.eye(6)
        assert np.max(np.abs(mmse_diag_t(h, [1e6])[0] - 1)) <= 1e-4

    def test_monotone_in_snr(self):
        h = complex_noise(np.random.default_rng(4), (6, 6))
        d = mmse_diag_t(h, 10 ** (np.arange(-10, 41, 5) / 10))
        assert np.all(np.diff(d, axis=0) > 0)

    def test_invalid_snr(self):
        with pytest.raises(ValueError):
            mmse_bias_matrix(np.eye(2), 0.0)

    def test_interference_plus_noise_variance(self):
        """Monte-Carlo check: Var(x̂_i - T_ii x_i) = T_ii (1 - T_ii) for unit-energy symbols."""
        rng = np.random.default_rng(5)
        n, gamma, trials = 6, 5.0, 100_000
        h = complex_noise(rng, (n, n))
        t, _ = mmse_bias_matrix(h, gamma)
        gmat = np.linalg.solve(h.conj().T @ h + np.eye(n) / gamma, h.conj().T)
        x = complex_noise(rng, (trials, n))
        y = x @ h.T + complex_noise(rng, (trials, n), 1 / gamma)
        est = y @ gmat.T
        d = np.diag(t).real
        var = np.mean(np.abs(est - d * x) ** 2, axis=0)
        np.testing.assert_allclose(var, d * (1 - d), rtol=0.03)

    @pytest.mark.parametrize("kind,expect", [("bpsk", 0.5 * scipy_erfc(np.sqrt(10.0))),
                                             ("qpsk", 0.5 * scipy_erfc(np.sqrt(5.0)))])
    def test_identity_awgn_ber(self, kind, expect):
        assert mmse_theoretical_ber(np.eye(4), 10.0, get_modulation(kind)) == pytest.approx(expect, rel=1e-10)

    def test_qpsk_value(self):
        assert mmse_theoretical_ber(np.eye(4), 10.0, get_modulation("qpsk")) == pytest.approx(7.83e-4, rel=1e-3)

    @pytest.mark.parametrize("kind", ["bpsk", "qpsk", "16qam"])
    @pytest.mark.parametrize("snr_db", [10, 15, 20])
    def test_constants_against_exact_awgn(self, kind, snr_db):
        mod = get_modulation(kind)
        c = modulation_constants(mod)
        g = 10 ** (snr_db / 10)
        approx = c.a * scipy_erfc(np.sqrt(c.b * g))
        assert approx == pytest.approx(exact_gray_ber(mod, g), rel=0.05)

    def test_exact_oracle_against_simulation(self):
        rng = np.random.default_rng(6)
        mod = get_modulation("16qam")
        g = 10.0
        idx = rng.integers(0, 16, 200_000)
        y = mod.alphabet[idx] + complex_noise(rng, idx.size, 1 / g)
        errs = np.sum(mod.labels[slice_symbols(y, mod.alphabet)] != mod.labels[idx])
        assert errs / (idx.size * 4) == pytest.approx(exact_gray_ber(mod, g), rel=0.03)

    def test_averaged_stack(self):
        cfg = AfdmConfig.for_doppler(16, 2, "zp", nu_max=1)
        mean, se = mmse_theoretical_ber_averaged(cfg, ChannelProfile(3, 1.0), [1.0, 100.0],
                                                 get_modulation("qpsk"), 50, np.random.default_rng(7))
        assert mean[0] > mean[1] > 0
        assert np.all(se >= 0)
