"""Waveform container and 16 kHz mono WAV I/O."""

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import ParameterError

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class AudioSignal:
    """1-D sample buffer with its sample rate.

    Samples are stored as float64 with a nominal range of [-1, 1]; values are
    only clipped when written to a PCM WAV file.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ParameterError(f"expected mono 1-D samples, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ParameterError("samples contain NaN or inf")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def slice_s(self, start_s: float, end_s: float) -> "AudioSignal":
        """Return the sub-signal covering [start_s, end_s), clipped to bounds."""
        a = max(0, int(round(start_s * self.sample_rate)))
        b = min(len(self), int(round(end_s * self.sample_rate)))
        return AudioSignal(self.samples[a:b].copy(), self.sample_rate)


def require_rate(signal: AudioSignal, sample_rate: int = SAMPLE_RATE) -> AudioSignal:
    if signal.sample_rate != sample_rate:
        raise ParameterError(
            f"signal at {signal.sample_rate} Hz, this toolkit requires {sample_rate} Hz"
        )
    return signal


def write_wav(path, signal: AudioSignal, encoding: str = "float32") -> None:
    """Write a mono WAV file. `encoding` is 'float32' or 'pcm16'.

    Samples are clipped to [-1, 1] at write time.
    """
    x = np.clip(signal.samples, -1.0, 1.0)
    if encoding == "float32":
        wavfile.write(path, signal.sample_rate, x.astype(np.float32))
    elif encoding == "pcm16":
        wavfile.write(path, signal.sample_rate, np.round(x * 32767.0).astype(np.int16))
    else:
        raise ParameterError(f"unsupported WAV encoding: {encoding}")


def read_wav(path, expected_rate: int = SAMPLE_RATE) -> AudioSignal:
    """Read a mono PCM16 or float32/float64 WAV file."""
    rate, data = wavfile.read(path)
    if expected_rate is not None and rate != expected_rate:
        raise ParameterError(f"{path}: sample rate {rate} != required {expected_rate}")
    if data.ndim != 1:
        raise ParameterError(f"{path}: only mono WAV is supported, got shape {data.shape}")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise ParameterError(f"{path}: unsupported WAV sample format {data.dtype}")
    return AudioSignal(x, rate)
