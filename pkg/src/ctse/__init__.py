"""Continuous target-speaker extraction toolkit (desk scale).

Simulates long-form multi-speaker mixtures, trains a band-split masking
extractor and an attention-based target-speaker activity detector, fuses them
three ways, and scores the results with diarization and enhancement metrics.
"""

__version__ = "0.1.0"

from .audio import SAMPLE_RATE, AudioSignal, read_wav, write_wav
from .dsp import ComplexSpectrogram, frame_windows, istft, logmel, stft
from .timeline import ActivityTrack, Segment, Timeline, labels_to_segments, timeline_to_track
from .simulate import (
    MixSpec,
    MixtureManifest,
    SourceCorpus,
    TestConfig,
    TEST_CONFIGS,
    add_noise_at_snr,
    apply_rir_matched,
    scenario_of,
    simulate,
)
from .metrics import DiarScore, EnhanceScore, der, int_leakage, jer, score_run, si_snr

__all__ = [
    "SAMPLE_RATE",
    "AudioSignal",
    "read_wav",
    "write_wav",
    "ComplexSpectrogram",
    "stft",
    "istft",
    "logmel",
    "frame_windows",
    "Timeline",
    "Segment",
    "ActivityTrack",
    "timeline_to_track",
    "labels_to_segments",
    "SourceCorpus",
    "MixSpec",
    "TestConfig",
    "TEST_CONFIGS",
    "MixtureManifest",
    "simulate",
    "apply_rir_matched",
    "add_noise_at_snr",
    "scenario_of",
    "DiarScore",
    "EnhanceScore",
    "der",
    "jer",
    "si_snr",
    "int_leakage",
    "score_run",
]
