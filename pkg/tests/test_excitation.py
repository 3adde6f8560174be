import numpy as np
import pytest

from vehsbi.excitation import (ExcitationProfile, NoiseSpec, add_measurement_noise,
                               input_at, sample_initial_state, sample_noise_spec,
                               sample_stiffness_noise)
from vehsbi.rng import RngStream, substream
from vehsbi.vehicle import Measurement, VehicleConstants


class TestInputProfile:
    def setup_method(self):
        self.p = ExcitationProfile()

    def test_start(self):
        u = input_at(0.0, self.p)
        assert u.delta == 0.0
        assert u.T_tr_f == self.p.torque_amplitude and u.T_br_f == 0.0

    def test_quarter_period_steering(self):
        u = input_at(1.0, ExcitationProfile(steer_amplitude=0.04))
        assert u.delta == pytest.approx(0.04)

    def test_braking_phase(self):
        u = input_at(2.6, self.p)
        assert u.T_tr_f == 0.0
        assert u.T_br_f == pytest.approx(-0.6 * self.p.torque_amplitude)
        assert u.T_br_r == pytest.approx(-0.4 * self.p.torque_amplitude)

    def test_square_wave_half_duty(self):
        t = np.linspace(0, 5, 10001)[:-1]
        phases = [input_at(float(tt), self.p).T_tr_f > 0 for tt in t]
        assert sum(phases) == len(phases) // 2

    def test_torque_signs(self):
        for tt in np.linspace(0, 4.99, 57):
            u = input_at(float(tt), self.p)
            u.validate()


class TestStiffnessNoise:
    def setup_method(self):
        self.const = VehicleConstants()

    def test_degenerate_mixture_zero(self):
        spec = NoiseSpec()
        assert np.all(sample_stiffness_noise(RngStream(0, 1), spec) == 0.0)

    def test_single_replicated_component_deterministic(self):
        means = np.full((4, 10), 0.03)
        spec = NoiseSpec(mixture_means=means, mixture_stds=np.zeros((4, 10)))
        out = sample_stiffness_noise(RngStream(5, 6), spec)
        np.testing.assert_allclose(out, 0.03)

    def test_empirical_mean_matches_mixture_mean(self):
        spec = sample_noise_spec(substream(21, "noise_setup"), self.const)
        gen_means = spec.mixture_means.mean(axis=1)
        n = 100_000
        draws = np.stack([sample_stiffness_noise(substream(9, "round_sim", 0, i), spec)
                          for i in range(n)])
        emp = draws.mean(axis=0)
        # SE of the mixture mean per channel
        second = (spec.mixture_stds**2 + spec.mixture_means**2).mean(axis=1)
        se = np.sqrt((second - gen_means**2) / n)
        assert np.all(np.abs(emp - gen_means) < 3 * se + 1e-12)

    def test_components_bounded_by_cap(self):
        spec = sample_noise_spec(substream(3, "noise_setup"), self.const)
        caps = 0.05 * np.array([1e5, 1e5, 6e4, 6e4]) / 1e5
        assert np.all(np.abs(spec.mixture_means) <= caps[:, None])
        assert np.all(spec.mixture_stds > 0)
        assert np.all(spec.mixture_stds <= caps[:, None])


class TestMeasurementNoise:
    def test_zero_clean_zero_noise(self):
        spec = NoiseSpec()
        clean = Measurement(0.0, 0.0, 0.0, 0.0, 0.0)
        noisy = add_measurement_noise(RngStream(1, 1), clean, spec)
        assert noisy.as_array().tolist() == [0.0] * 5

    def test_rotational_std_fraction(self):
        # w = 30 rad/s at 5% relative noise -> std 1.5
        spec = NoiseSpec()
        draws = np.array([add_measurement_noise(
            RngStream(2, i), Measurement(0, 0, 0, 30.0, 0), spec).w_f
            for i in range(40_000)])
        assert draws.std() == pytest.approx(1.5, rel=0.03)
        assert draws.mean() == pytest.approx(30.0, abs=3 * 1.5 / np.sqrt(40_000))

    def test_accel_std_fraction(self):
        spec = NoiseSpec()
        draws = np.array([add_measurement_noise(
            RngStream(3, i), Measurement(2.0, 0, 0, 0, 0), spec).a_x
            for i in range(40_000)])
        assert draws.std() == pytest.approx(0.2, rel=0.03)

    def test_noise_scales_linearly_with_clean(self):
        spec = NoiseSpec()
        n1 = add_measurement_noise(RngStream(7, 9), Measurement(1, 0, 0, 0, 0), spec)
        n2 = add_measurement_noise(RngStream(7, 9), Measurement(2, 0, 0, 0, 0), spec)
        assert (n2.a_x - 2.0) == pytest.approx(2 * (n1.a_x - 1.0), rel=1e-12)


class TestInitialState:
    def test_speed_range(self):
        spec = NoiseSpec()
        vals = [sample_initial_state(RngStream(4, i), spec, 0.305).V_x
                for i in range(5000)]
        assert min(vals) >= 10.0 and max(vals) <= 11.0

    def test_rolling_equilibrium_wheel_speeds(self):
        spec = NoiseSpec(v0_range=(10.675, 10.675))
        st = sample_initial_state(RngStream(1, 1), spec, 0.305)
        assert st.w_f == pytest.approx(35.0, rel=1e-12)
        assert st.w_r == pytest.approx(35.0, rel=1e-12)

    def test_per_axle_radii_and_zero_slips(self):
        spec = NoiseSpec(v0_range=(10.0, 10.0))
        st = sample_initial_state(RngStream(1, 2), spec, (0.30, 0.31))
        assert st.w_f == pytest.approx(10 / 0.30)
        assert st.w_r == pytest.approx(10 / 0.31)
        assert st.a_hat_f == st.a_hat_r == st.k_hat_f == st.k_hat_r == 0.0
        assert st.V_y == 0.0 and st.r == 0.0


def test_stream_determinism():
    a = RngStream(123, 45).generator().standard_normal(8)
    b = RngStream(123, 45).generator().standard_normal(8)
    c = RngStream(123, 46).generator().standard_normal(8)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_substream_distinct_stages():
    s1 = substream(9, "pilot_sim", 1, 2)
    s2 = substream(9, "round_sim", 1, 2)
    s3 = substream(9, "pilot_sim", 1, 3)
    assert len({s1.stream_id, s2.stream_id, s3.stream_id}) == 3
