import numpy as np
import pytest

from vehsbi.rng import RngStream
from vehsbi.simulator import TrajectoryRecord
from vehsbi.summaries import (ACF_LAGS, SUMMARY_LENGTH, Normalizer,
                              fit_normalizer, normalize, read_normalizer,
                              summarize, summary_layout, write_normalizer)
from vehsbi.vehicle import IdentifiedParams

THETA = IdentifiedParams(1.3, 0.5, 0, 0, 0, 0)


def record_from(channels):
    channels = np.asarray(channels, float)
    n = channels.shape[0]
    return TrajectoryRecord(t=np.arange(n) / 200.0, channels=channels,
                            theta_used=THETA, seed=RngStream(0, 0), valid=True)


class TestSummarize:
    def test_length_and_layout(self):
        assert SUMMARY_LENGTH == 35
        names = summary_layout()
        assert len(names) == 35
        assert names[0] == "mean:a_x"
        assert names[5] == "logvar:a_x"
        assert names[10] == "acf10:a_x"
        assert names[-1] == "xcorr:w_f:w_r"

    def test_constant_channel_conventions(self):
        ch = np.zeros((1000, 5))
        ch[:, 0] = 3.0
        s = summarize(record_from(ch))
        names = summary_layout()
        sv = dict(zip(names, s.values))
        assert sv["mean:a_x"] == 3.0
        assert sv["logvar:a_x"] == pytest.approx(np.log(1e-12))
        for lag in ACF_LAGS:
            assert sv[f"acf{lag}:a_x"] == 0.0
        assert sv["xcorr:a_x:a_y"] == 0.0

    def test_alternating_channel(self):
        ch = np.zeros((1000, 5))
        ch[:, 1] = np.where(np.arange(1000) % 2 == 0, 1.0, -1.0)
        s = summarize(record_from(ch))
        sv = dict(zip(summary_layout(), s.values))
        assert sv["mean:a_y"] == 0.0
        assert sv["logvar:a_y"] == pytest.approx(0.0, abs=1e-11)

    def test_identical_channels_perfectly_correlated(self):
        gen = np.random.default_rng(0)
        x = gen.standard_normal(1000)
        ch = np.zeros((1000, 5))
        ch[:, 0] = x
        ch[:, 1] = x
        s = summarize(record_from(ch))
        sv = dict(zip(summary_layout(), s.values))
        assert sv["xcorr:a_x:a_y"] == pytest.approx(1.0, abs=1e-12)

    def test_acf_of_white_noise_near_zero(self):
        gen = np.random.default_rng(1)
        ch = gen.standard_normal((4000, 5))
        s = summarize(record_from(ch))
        sv = dict(zip(summary_layout(), s.values))
        for lag in ACF_LAGS:
            assert abs(sv[f"acf{lag}:r"]) < 4 / np.sqrt(4000)

    def test_acf_matches_direct_definition(self):
        gen = np.random.default_rng(2)
        x = np.cumsum(gen.standard_normal(1000)) * 0.1
        ch = np.zeros((1000, 5))
        ch[:, 2] = x
        s = summarize(record_from(ch))
        sv = dict(zip(summary_layout(), s.values))
        d = x - x.mean()
        expect = np.dot(d[:-20], d[20:]) / np.dot(d, d)
        assert sv["acf20:r"] == pytest.approx(expect, rel=1e-12)

    def test_invalid_record_rejected(self):
        rec = record_from(np.zeros((1000, 5)))
        rec.valid = False
        with pytest.raises(ValueError):
            summarize(rec)

    def test_nonfinite_rejected(self):
        ch = np.zeros((1000, 5))
        ch[5, 2] = np.nan
        with pytest.raises(ValueError):
            summarize(record_from(ch))


class TestNormalizer:
    def test_two_vector_fit(self):
        a = summarize(record_from(np.zeros((1000, 5))))
        b = summarize(record_from(np.zeros((1000, 5))))
        a.values = np.zeros(35)
        b.values = np.full(35, 2.0)
        n = fit_normalizer([a, b])
        np.testing.assert_allclose(n.mean, 1.0)
        np.testing.assert_allclose(n.std, np.sqrt(2.0))

    def test_identical_vectors_zero_std(self):
        a = summarize(record_from(np.zeros((1000, 5))))
        b = summarize(record_from(np.zeros((1000, 5))))
        n = fit_normalizer([a, b])
        assert np.all(n.std == 0)

    def test_too_few_rejected(self):
        a = summarize(record_from(np.zeros((1000, 5))))
        with pytest.raises(ValueError):
            fit_normalizer([a])

    def test_normalize_centers_the_fitting_set(self):
        gen = np.random.default_rng(3)
        summaries = [summarize(record_from(gen.standard_normal((200, 5))))
                     for _ in range(50)]
        n = fit_normalizer(summaries)
        z = np.stack([normalize(s, n).values for s in summaries])
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(z.std(axis=0, ddof=1), 1.0, atol=1e-10)

    def test_zero_std_coordinate_maps_to_zero(self):
        s = summarize(record_from(np.zeros((1000, 5))))
        n = Normalizer(mean=np.zeros(35), std=np.zeros(35), pilot_count=2)
        z = normalize(s, n)
        assert np.all(z.values == 0.0)
        assert z.normalized

    def test_double_normalize_rejected(self):
        s = summarize(record_from(np.zeros((1000, 5))))
        n = Normalizer(mean=np.zeros(35), std=np.ones(35), pilot_count=2)
        z = normalize(s, n)
        with pytest.raises(ValueError):
            normalize(z, n)

    def test_io_round_trip(self, tmp_path):
        gen = np.random.default_rng(4)
        n = Normalizer(mean=gen.standard_normal(35),
                       std=np.abs(gen.standard_normal(35)), pilot_count=17)
        path = tmp_path / "norm.json"
        write_normalizer(n, path)
        back = read_normalizer(path)
        np.testing.assert_array_equal(back.mean, n.mean)
        np.testing.assert_array_equal(back.std, n.std)
        assert back.pilot_count == 17
        write_normalizer(back, tmp_path / "norm2.json")
        assert (tmp_path / "norm.json").read_bytes() == \
            (tmp_path / "norm2.json").read_bytes()
