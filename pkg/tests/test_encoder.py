import numpy as np
import pytest
import torch

from ctse.audio import SAMPLE_RATE, AudioSignal
from ctse.dsp import frame_windows
from ctse.encoder import (
    ConditionProjector,
    EncoderConfig,
    EncoderTrainConfig,
    SpeakerEmbedding,
    SpeakerEncoder,
    SpeakerEncoderNet,
    condition_project,
    train_encoder,
)
from ctse.errors import CheckpointError, ParameterError


@pytest.fixture(scope="module")
def encoder():
    torch.manual_seed(7)
    config = EncoderConfig()
    return SpeakerEncoder(SpeakerEncoderNet(config), config)


def _sig(rng, seconds=1.0):
    return AudioSignal(rng.standard_normal(int(seconds * SAMPLE_RATE)) * 0.1)


class TestEncode:
    def test_dim_and_unit_norm(self, encoder, rng):
        e = encoder.encode(_sig(rng))
        assert e.dim == 256
        assert np.linalg.norm(e.vector) == pytest.approx(1.0, abs=1e-5)

    def test_deterministic_in_eval_mode(self, encoder, rng):
        x = _sig(rng)
        a = encoder.encode(x)
        b = encoder.encode(x)
        np.testing.assert_array_equal(a.vector, b.vector)

    def test_too_short_rejected(self, encoder, rng):
        with pytest.raises(ParameterError):
            encoder.encode(_sig(rng, 0.05))

    def test_defaults_match_published_frontend(self):
        cfg = EncoderConfig()
        assert cfg.n_mels == 80
        assert cfg.frame_win_s == 0.025
        assert cfg.frame_hop_s == 0.010
        assert cfg.embed_dim == 256


class TestEncodeWindows:
    def test_count_matches_frame_windows(self, encoder, rng):
        x = _sig(rng, 2.0)
        embs = encoder.encode_windows(x)
        assert len(embs) == len(frame_windows(2.0, 1.5, 0.25)) == 8

    def test_count_property_random_durations(self, encoder, rng):
        for seconds in (0.4, 1.12, 3.75):
            x = _sig(rng, seconds)
            embs = encoder.encode_windows(x)
            assert len(embs) == len(frame_windows(x.duration_s, 1.5, 0.25))

    def test_silent_input_identical_vectors(self, encoder):
        x = AudioSignal(np.zeros(2 * SAMPLE_RATE))
        embs = encoder.encode_windows(x)
        first = embs[0].vector
        for e in embs[1:]:
            np.testing.assert_array_equal(e.vector, first)

    def test_too_short_rejected(self, encoder):
        with pytest.raises(ParameterError):
            encoder.encode_windows(AudioSignal(np.zeros(100)))


class TestConditionProjector:
    def test_outputs_inside_tanh_range(self, rng):
        torch.manual_seed(0)
        proj = ConditionProjector(256, 32)
        e = SpeakerEmbedding(rng.standard_normal(256), 1.0)
        out = condition_project(proj, e)
        assert out.shape == (32,)
        assert np.all(np.abs(out) < 1.0)

    def test_zero_embedding_zero_bias_gives_zero(self):
        proj = ConditionProjector(256, 16)
        with torch.no_grad():
            proj.conv.bias.zero_()
        out = condition_project(proj, SpeakerEmbedding(np.zeros(256), 1.0))
        np.testing.assert_array_equal(out, np.zeros(16))

    def test_dim_matches_extractor_feature_dim(self):
        from ctse.pbsrnn import PBSRNN, PBSRNNConfig

        cfg = PBSRNNConfig()
        model = PBSRNN(cfg)
        assert model.conditioner.target_dim == cfg.feature_dim
        e = SpeakerEmbedding(np.random.default_rng(0).standard_normal(256), 1.0)
        assert condition_project(model.conditioner, e).shape == (cfg.feature_dim,)


class TestCheckpoint:
    def test_save_load_reproduces_embeddings(self, encoder, rng, tmp_path):
        x = _sig(rng)
        before = encoder.encode(x).vector
        path = str(tmp_path / "enc.pt")
        encoder.save(path)
        after = SpeakerEncoder.load(path).encode(x).vector
        assert np.max(np.abs(before - after)) <= 1e-6

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(CheckpointError):
            SpeakerEncoder.load(str(tmp_path / "nope.pt"))

    def test_wrong_kind_rejected(self, encoder, tmp_path):
        path = str(tmp_path / "enc.pt")
        encoder.save(path)
        from ctse.pbsrnn import TargetExtractor

        with pytest.raises(CheckpointError):
            TargetExtractor.load(path)


class TestTraining:
    def test_needs_eight_speakers(self, toy_corpus_small):
        from ctse.simulate import SourceCorpus

        small = SourceCorpus(
            {s: toy_corpus_small.utterances[s] for s in toy_corpus_small.speakers()[:4]},
            toy_corpus_small.noise_pool,
        )
        with pytest.raises(ParameterError):
            train_encoder(small, EncoderConfig(), EncoderTrainConfig(steps=1))
