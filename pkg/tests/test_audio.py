import numpy as np
import pytest

from ctse.audio import SAMPLE_RATE, AudioSignal, read_wav, require_rate, write_wav
from ctse.errors import ParameterError


class TestAudioSignal:
    def test_basic_properties(self):
        x = AudioSignal(np.zeros(16000))
        assert len(x) == 16000
        assert x.duration_s == pytest.approx(1.0)
        assert x.sample_rate == SAMPLE_RATE

    def test_rejects_non_mono(self):
        with pytest.raises(ParameterError):
            AudioSignal(np.zeros((2, 100)))

    def test_rejects_nan(self):
        bad = np.zeros(10)
        bad[3] = np.nan
        with pytest.raises(ParameterError):
            AudioSignal(bad)

    def test_rejects_bad_rate(self):
        with pytest.raises(ParameterError):
            AudioSignal(np.zeros(10), sample_rate=0)

    def test_slice_seconds(self, rng):
        x = AudioSignal(rng.standard_normal(16000))
        piece = x.slice_s(0.25, 0.5)
        assert len(piece) == 4000
        np.testing.assert_array_equal(piece.samples, x.samples[4000:8000])

    def test_require_rate(self):
        x = AudioSignal(np.zeros(10), sample_rate=8000)
        with pytest.raises(ParameterError):
            require_rate(x)


class TestWavIO:
    def test_float32_round_trip(self, rng, tmp_path):
        x = AudioSignal(rng.uniform(-0.9, 0.9, 8000))
        path = str(tmp_path / "a.wav")
        write_wav(path, x)
        back = read_wav(path)
        assert back.sample_rate == SAMPLE_RATE
        assert np.max(np.abs(back.samples - x.samples)) < 1e-6

    def test_pcm16_round_trip(self, rng, tmp_path):
        x = AudioSignal(rng.uniform(-0.9, 0.9, 8000))
        path = str(tmp_path / "a.wav")
        write_wav(path, x, encoding="pcm16")
        back = read_wav(path)
        assert np.max(np.abs(back.samples - x.samples)) < 1e-4

    def test_clipping_applied_at_write(self, tmp_path):
        x = AudioSignal(np.array([2.0, -3.0, 0.5]))
        path = str(tmp_path / "hot.wav")
        write_wav(path, x)
        back = read_wav(path)
        np.testing.assert_allclose(back.samples, [1.0, -1.0, 0.5], atol=1e-6)

    def test_wrong_rate_rejected(self, tmp_path):
        from scipy.io import wavfile

        path = str(tmp_path / "b.wav")
        wavfile.write(path, 8000, np.zeros(100, dtype=np.float32))
        with pytest.raises(ParameterError):
            read_wav(path)

    def test_unknown_encoding_rejected(self, tmp_path):
        with pytest.raises(ParameterError):
            write_wav(str(tmp_path / "c.wav"), AudioSignal(np.zeros(10)), encoding="mp3")
