"""Bundled synthetic corpus: vowel-like speakers, noise, and impulse responses.

Each speaker is a fixed (pitch, formant) voice; utterances are syllable
sequences with per-utterance pitch contours, so within-speaker variation is
real but speakers stay separable. Everything is generated from a seed, so the
test suite runs with no external downloads.
"""

from typing import List, Tuple

import numpy as np
from scipy.signal import lfilter

from .audio import SAMPLE_RATE, AudioSignal
from .simulate import SourceCorpus

TRAIN_SPEAKER_COUNT = 8


def _resonator_coeffs(freq_hz: float, bandwidth_hz: float, sr: int):
    r = np.exp(-np.pi * bandwidth_hz / sr)
    theta = 2.0 * np.pi * freq_hz / sr
    b = [1.0 - r]
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return b, a


class _Voice:
    """Per-speaker synthesis parameters."""

    def __init__(self, rng: np.random.Generator, f0_hz: float):
        self.f0 = f0_hz
        self.formants = (
            float(rng.uniform(320.0, 880.0)),
            float(rng.uniform(1050.0, 2300.0)),
            float(rng.uniform(2500.0, 3500.0)),
        )
        self.bandwidths = tuple(float(rng.uniform(60.0, 130.0)) for _ in range(3))
        self.vibrato_hz = float(rng.uniform(4.0, 7.0))
        self.vibrato_depth = float(rng.uniform(0.01, 0.04))

    def syllable(self, rng: np.random.Generator, dur_s: float, sr: int) -> np.ndarray:
        n = int(round(dur_s * sr))
        t = np.arange(n) / sr
        drift = rng.uniform(-0.06, 0.06)
        f0 = self.f0 * (
            1.0
            + drift * (t / max(dur_s, 1e-6))
            + self.vibrato_depth * np.sin(2.0 * np.pi * self.vibrato_hz * t)
        )
        phase = 2.0 * np.pi * np.cumsum(f0) / sr
        source = 2.0 * ((phase / (2.0 * np.pi)) % 1.0) - 1.0
        source += 0.02 * rng.standard_normal(n)
        out = source
        for fc, bw in zip(self.formants, self.bandwidths):
            b, a = _resonator_coeffs(fc, bw, sr)
            out = lfilter(b, a, out)
        n_edge = max(1, int(0.02 * sr))
        env = np.ones(n)
        env[:n_edge] = np.linspace(0.0, 1.0, n_edge)
        env[-n_edge:] = np.linspace(1.0, 0.0, n_edge)
        return out * env


def _make_utterance(voice: _Voice, rng: np.random.Generator, dur_s: float, sr: int) -> np.ndarray:
    pieces = []
    remaining = dur_s
    while remaining > 0.12:
        syl = float(rng.uniform(0.18, 0.45))
        syl = min(syl, remaining)
        pieces.append(voice.syllable(rng, syl, sr))
        remaining -= syl
        pause = float(rng.uniform(0.03, 0.12))
        pause = min(pause, remaining)
        if pause > 0:
            pieces.append(np.zeros(int(round(pause * sr))))
            remaining -= pause
    x = np.concatenate(pieces) if pieces else np.zeros(int(round(dur_s * sr)))
    rms = np.sqrt(np.mean(x**2)) if x.size else 0.0
    if rms > 0:
        x = x * (float(rng.uniform(0.04, 0.08)) / rms)
    return x


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.maximum(np.fft.rfftfreq(n), 1.0 / n)
    spec = spec / np.sqrt(freqs * n)
    x = np.fft.irfft(spec, n=n)
    return x / (np.max(np.abs(x)) + 1e-12)


def _make_rir(rng: np.random.Generator, sr: int) -> np.ndarray:
    length = int(round(float(rng.uniform(0.10, 0.25)) * sr))
    tau = float(rng.uniform(0.02, 0.08))
    t = np.arange(length) / sr
    tail = rng.standard_normal(length) * np.exp(-t / tau) * 0.25
    h = tail
    h[0] = 1.0
    delay = int(rng.integers(8, 40))
    h[delay] += 0.5
    return h / np.max(np.abs(h))


def make_toy_corpus(
    seed: int = 0,
    n_speakers: int = 12,
    utts_per_speaker: int = 24,
    n_noise: int = 6,
    n_rirs: int = 4,
    utt_dur_range_s: Tuple[float, float] = (2.0, 3.4),
) -> SourceCorpus:
    """Build the in-memory toy corpus. Deterministic given the arguments."""
    sr = SAMPLE_RATE
    rng = np.random.default_rng(seed)
    f0s = np.geomspace(95.0, 285.0, n_speakers) * rng.uniform(0.97, 1.03, n_speakers)
    utterances = {}
    for s in range(n_speakers):
        voice = _Voice(rng, float(f0s[s]))
        spk = f"spk{s:02d}"
        utts: List[AudioSignal] = []
        for _ in range(utts_per_speaker):
            dur = float(rng.uniform(*utt_dur_range_s))
            utts.append(AudioSignal(_make_utterance(voice, rng, dur, sr), sr))
        utterances[spk] = utts
    noise_pool = []
    for k in range(n_noise):
        n = int(round(float(rng.uniform(4.0, 8.0)) * sr))
        x = _pink_noise(rng, n) if k % 2 == 0 else rng.standard_normal(n)
        x = x / (np.max(np.abs(x)) + 1e-12) * 0.3
        noise_pool.append(AudioSignal(x, sr))
    rir_pool = [AudioSignal(_make_rir(rng, sr), sr) for _ in range(n_rirs)]
    return SourceCorpus(utterances=utterances, noise_pool=noise_pool, rir_pool=rir_pool)


def train_eval_split(corpus: SourceCorpus, n_train: int = TRAIN_SPEAKER_COUNT):
    """Split speakers into (train, held-out) sub-corpora sharing noise and RIRs."""
    speakers = corpus.speakers()
    if len(speakers) <= n_train:
        raise ValueError(f"need more than {n_train} speakers to split")
    train = {s: corpus.utterances[s] for s in speakers[:n_train]}
    held = {s: corpus.utterances[s] for s in speakers[n_train:]}
    return (
        SourceCorpus(train, corpus.noise_pool, corpus.rir_pool),
        SourceCorpus(held, corpus.noise_pool, corpus.rir_pool),
    )


def three_way_split(
    corpus: SourceCorpus,
    n_train_speakers: int = TRAIN_SPEAKER_COUNT,
    eval_utts: int = 6,
):
    """(train, held-out-utterance, held-out-speaker) sub-corpora.

    Training sees n_train_speakers with their tail utterances; the held-out
    utterance corpus has the same speakers but only their first eval_utts
    utterances (never used for model training); the remaining speakers form
    the held-out speaker corpus used for encoder generalization checks.
    """
    speakers = corpus.speakers()
    if len(speakers) <= n_train_speakers:
        raise ValueError(f"need more than {n_train_speakers} speakers to split")
    for s in speakers[:n_train_speakers]:
        if len(corpus.utterances[s]) < eval_utts + 2:
            raise ValueError(f"speaker {s} has too few utterances for the split")
    train = {s: corpus.utterances[s][eval_utts:] for s in speakers[:n_train_speakers]}
    held_utts = {s: corpus.utterances[s][:eval_utts] for s in speakers[:n_train_speakers]}
    held_spk = {s: corpus.utterances[s] for s in speakers[n_train_speakers:]}
    return (
        SourceCorpus(train, corpus.noise_pool, corpus.rir_pool),
        SourceCorpus(held_utts, corpus.noise_pool, corpus.rir_pool),
        SourceCorpus(held_spk, corpus.noise_pool, corpus.rir_pool),
    )
