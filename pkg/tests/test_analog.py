import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzris.analog import (AnalogArchitecture, DelayPlan, bit_ratio, build_analog_beamformer, delay_grid,
                           delay_ranges_tc, dirichlet, gain_brute_force, gain_closed_form, ideal_delays,
                           phase_error, ps_phase, ps_phases, quantize_delay, quantize_phase, required_bits,
                           split_direction, steering_weights, wrap_phase)
from thzris.channel import SystemConfig, subcarrier_frequencies, ula_response

CFG = SystemConfig()
PS = AnalogArchitecture.ps_only()
SINGLE = AnalogArchitecture.single_layer(32, 8, delay_step_tc=None)
DOUBLE = AnalogArchitecture.double_layer(8, 4, 8, 4, delay_step_tc=None)


class TestArchitecture:
    def test_counts(self):
        assert (SINGLE.ttd_count, SINGLE.total_bits, SINGLE.subarray_size(128)) == (32, 256, 4)
        assert (DOUBLE.ttd_count, DOUBLE.total_bits, DOUBLE.subarray_size(128)) == (40, 192, 4)
        assert PS.subarray_size(128) == 128

    def test_divisibility(self):
        with pytest.raises(ValueError):
            AnalogArchitecture.single_layer(3).subarray_size(128)

    @pytest.mark.parametrize("kw", [dict(U=0), dict(P_s=-1), dict(delay_step_tc=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AnalogArchitecture("single", **kw)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            AnalogArchitecture("triple")


class TestPhases:
    def test_ps_phase_examples(self):
        assert ps_phase(1, 0.7, CFG) == 0
        assert ps_phase(7, 0.0, CFG) == 0
        assert ps_phase(2, math.pi / 4, CFG) == pytest.approx(math.pi * math.sin(math.pi / 4), rel=1e-12)
        assert ps_phase(2, math.pi / 4, CFG) == pytest.approx(2.2214, abs=1e-4)

    def test_wrap(self):
        assert wrap_phase(-0.5) == pytest.approx(2 * math.pi - 0.5)
        assert 0 <= wrap_phase(100.0) < 2 * math.pi

    def test_phase_error_zero_at_center(self):
        n = np.arange(1, 129)
        for arch in (PS, SINGLE, DOUBLE):
            assert np.all(phase_error(arch, n, CFG.f_c, 0.6, CFG) == 0)

    def test_double_error_zero_at_subarray_heads(self):
        heads = np.arange(1, 129, 4)
        assert np.all(phase_error(DOUBLE, heads, 315e9, 0.6, CFG) == 0)

    def test_single_and_double_share_errors_when_sizes_match(self):
        n = np.arange(1, 129)
        assert np.array_equal(phase_error(SINGLE, n, 315e9, 0.6, CFG), phase_error(DOUBLE, n, 315e9, 0.6, CFG))

    def test_error_periodic_and_ps_increasing(self):
        n = np.arange(1, 129)
        e = phase_error(DOUBLE, n, 315e9, 0.6, CFG)
        assert np.allclose(e[4:], e[:-4])
        assert np.all(np.diff(phase_error(PS, n, 315e9, 0.6, CFG)) > 0)

    def test_error_equals_weight_residual(self):
        # oracle: phase of w_n conj(a_n) for the ideal-delay weights
        n = np.arange(1, 129)
        w = steering_weights(DOUBLE, 0.6, 315e9, CFG)
        a = ula_response(0.6, 315e9, 128, CFG)
        resid = np.angle(a * w.conj() * np.exp(-1j * np.angle(a[0] * w[0].conj())))
        expected = np.angle(np.exp(1j * phase_error(DOUBLE, n, 315e9, 0.6, CFG)))
        assert np.allclose(resid, expected, atol=1e-9)


class TestSplitDirection:
    def test_trivial_cases(self):
        assert split_direction(0.4, CFG.f_c, CFG) == pytest.approx(0.4)
        assert split_direction(0.0, 330e9, CFG) == 0

    def test_value(self):
        assert split_direction(math.pi / 4, 315e9, CFG) == pytest.approx(math.asin(300 / 315 * math.sin(math.pi / 4)))
        assert split_direction(math.pi / 4, 315e9, CFG) == pytest.approx(0.7388, abs=1e-4)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            split_direction(math.pi / 2, 280e9, CFG)


class TestDelays:
    def test_broadside_zero(self):
        plan = ideal_delays(DOUBLE, 0.0, CFG)
        assert np.all(plan.second == 0) and np.all(plan.first == 0)

    def test_single_endfire_max(self):
        plan = ideal_delays(SINGLE, math.pi / 2, CFG)
        assert plan.second[-1] == pytest.approx((32 - 1) * 4 * CFG.T_d)

    def test_double_example(self):
        plan = ideal_delays(DOUBLE, math.pi / 4, CFG)
        # (k_h - 1) K_L P T_d sin(theta0) with K_L P = 16 and T_d = T_c / 2
        assert plan.second[1] / CFG.T_c == pytest.approx(8 * math.sin(math.pi / 4), rel=1e-12)
        assert plan.second[2] / CFG.T_c == pytest.approx(11.314, abs=1e-3)

    @given(st.floats(-math.pi / 2, math.pi / 2))
    @settings(max_examples=50, deadline=None)
    def test_non_negative_and_aligned(self, theta):
        arch = AnalogArchitecture.double_layer(8, 4, 8, 4, delay_step_tc=0.25)
        plan = ideal_delays(arch, theta, CFG)
        assert np.all(plan.second >= 0) and np.all(plan.first >= 0)
        tau = plan.per_antenna(arch, 128)
        heads = tau[::4]
        # relative delays between subarray heads follow the steering direction
        expected = np.arange(32) * 4 * CFG.T_d * math.sin(theta)
        assert np.allclose(heads - heads[0], expected - expected[0], atol=1e-24)

    def test_quantize_examples(self):
        D = 1.0
        assert quantize_delay(0.0, 4, D) == 0
        assert quantize_delay(1.4, 4, D) == 1.0
        assert quantize_delay(1.5, 4, D) == 1.0
        assert quantize_delay(1.6, 4, D) == 2.0
        assert quantize_delay(99.0, 4, D) == 15.0

    def test_quantize_rejects_negative(self):
        with pytest.raises(ValueError):
            quantize_delay(-1.0, 3, 1.0)

    @given(st.floats(0, 50), st.integers(0, 8), st.floats(0.01, 2))
    @settings(max_examples=100, deadline=None)
    def test_quantize_is_nearest_grid_point(self, tau, bits, D):
        q = quantize_delay(tau, bits, D)
        grid = delay_grid(bits, D)
        assert np.min(np.abs(grid - q)) <= 1e-12 * max(1.0, q)
        assert abs(tau - q) <= np.min(np.abs(grid - tau)) + 1e-9 * D


class TestPhaseQuantization:
    def test_one_bit(self):
        vals, idx = quantize_phase(np.array([0.1, 3.0, 4.0, 6.2]), 1)
        assert idx.tolist() == [0, 1, 1, 0]
        assert set(np.round(vals, 12)) <= {0.0, round(math.pi, 12)}

    def test_ties(self):
        _, idx = quantize_phase(np.array([math.pi / 2, 3 * math.pi / 2]), 1)
        assert idx.tolist() == [0, 0]

    def test_infinite_resolution(self):
        vals, _ = quantize_phase(np.array([0.3]), 0)
        assert vals[0] == 0.3

    @given(st.floats(-20, 20), st.integers(1, 6))
    @settings(max_examples=100, deadline=None)
    def test_chordal_nearest(self, psi, bits):
        val, idx = quantize_phase(np.array([psi]), bits)
        grid = 2 * np.pi * np.arange(2 ** bits) / 2 ** bits
        dist = np.abs(np.exp(1j * grid) - np.exp(1j * psi))
        assert dist[idx[0]] <= dist.min() + 1e-9


class TestBits:
    def test_minimum_bits_at_45_degrees(self):
        rd = required_bits(DOUBLE, math.pi / 4, CFG)
        rs = required_bits(SINGLE, math.pi / 4, CFG)
        assert (rd.P_L, rd.P_H, rs.P_s) == (3, 6, 6)
        assert rd.subarray_bound == 2

    def test_broadside_sentinel(self):
        assert required_bits(DOUBLE, 0.0, CFG).no_delay_needed

    def test_ratio(self):
        assert bit_ratio(8, 6, 4, 3, 32, 6) == 0.75

    def test_ranges(self):
        assert delay_ranges_tc(SINGLE, CFG) == {"tau_u": 62.0}
        assert delay_ranges_tc(DOUBLE, CFG) == {"tau_second": 56.0, "tau_first": 6.0}


class TestGain:
    def test_dirichlet_limit(self):
        assert dirichlet(0.0, 7) == 7
        assert dirichlet(1e-15, 7) == 7
        x = 0.3
        assert dirichlet(x, 5) == pytest.approx(math.sin(math.pi * 5 * x / 2) / math.sin(math.pi * x / 2))

    @pytest.mark.parametrize("arch", [PS, SINGLE, DOUBLE])
    def test_center_unity(self, arch):
        assert gain_brute_force(arch, CFG.f_c, 0.8, CFG) == pytest.approx(1.0, abs=1e-12)
        assert gain_closed_form(arch, CFG.f_c, 0.8, CFG) == pytest.approx(1.0, abs=1e-12)

    def test_ordering_at_band_edges(self):
        fine = AnalogArchitecture.double_layer(16, 4, delay_step_tc=None)   # P = 2 <= S = 4
        for f in subcarrier_frequencies(CFG)[[0, -1]]:
            g_ps, g_s, g_d = (gain_closed_form(a, f, math.pi / 4, CFG) for a in (PS, SINGLE, fine))
            assert g_ps <= g_s <= g_d

    def test_ps_drops_at_edges_double_stays_high(self):
        f_edge = subcarrier_frequencies(CFG)[-1]
        assert gain_brute_force(PS, f_edge, math.pi / 4, CFG) < 0.5
        assert np.all(gain_brute_force(DOUBLE, subcarrier_frequencies(CFG), math.pi / 4, CFG) >= 0.9)

    def test_quantized_never_beats_ideal_at_edges(self):
        q = AnalogArchitecture.double_layer(8, 4, 8, 4, delay_step_tc=0.25)
        for theta in np.linspace(-1.2, 1.2, 13):
            for f in subcarrier_frequencies(CFG)[[0, -1]]:
                assert gain_brute_force(q, f, theta, CFG, quantized=True) <= gain_brute_force(q, f, theta, CFG) + 1e-12


class TestBeamformer:
    ANGLES = [0.5, -0.3, 0.9, -1.1]

    def build(self, arch):
        return build_analog_beamformer(arch, self.ANGLES, CFG)

    def test_column_energy(self):
        bf = self.build(AnalogArchitecture.double_layer(8, 4, 8, 4, delay_step_tc=0.15, ps_bits=2))
        F = bf.compose(subcarrier_frequencies(CFG))
        energy = np.einsum("mnc,mnc->mc", F.conj(), F).real
        assert np.allclose(energy, 32.0)

    def test_factorization(self):
        bf = self.build(AnalogArchitecture.double_layer(8, 4, 8, 4, delay_step_tc=0.15))
        f = 310e9
        assert np.allclose(bf.F_A @ bf.F_L(f) @ bf.F_H(f), bf.compose(f), atol=1e-12)

    def test_entries_and_grids(self):
        arch = AnalogArchitecture.double_layer(8, 4, 8, 4, delay_step_tc=0.15, ps_bits=1)
        bf = self.build(arch)
        nz = bf.F_A[np.abs(bf.F_A) > 0]
        assert nz.size == 128 * 4
        assert np.allclose(np.abs(nz), 0.5)
        phase = np.mod(np.angle(nz), 2 * np.pi)
        assert np.all(np.isclose(phase, 0, atol=1e-9) | np.isclose(phase, np.pi, atol=1e-9))
        D = 0.15 * CFG.T_c
        for tau, bits in ((bf.tau_first, 4), (bf.tau_second, 8)):
            k = tau / D
            assert np.allclose(k, np.round(k), atol=1e-9)
            assert k.min() >= 0 and k.max() <= 2 ** bits - 1 + 1e-9

    def test_steering_gain(self):
        bf = self.build(AnalogArchitecture.double_layer(8, 4, delay_step_tc=None))
        F = bf.compose(CFG.f_c)
        for r, th in enumerate(self.ANGLES):
            assert abs(ula_response(th, CFG.f_c, 128, CFG).conj() @ F[:, r]) == pytest.approx(math.sqrt(32), rel=1e-12)

    def test_angle_count(self):
        with pytest.raises(ValueError):
            build_analog_beamformer(DOUBLE, [0.1, 0.2], CFG)

    def test_ps_phases_follow_subarray_position(self):
        psi = ps_phases(DOUBLE, 0.5, CFG, quantized=False)
        assert np.allclose(psi[:4], ps_phase(np.arange(1, 5), 0.5, CFG))
        assert np.allclose(psi[4:8], psi[:4])
