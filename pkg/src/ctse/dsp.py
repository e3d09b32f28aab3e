"""Deterministic DSP primitives: STFT/iSTFT, log-mel features, window framing.

All transforms are pure functions of their inputs and run in float64, so the
round-trip identity istft(stft(x)) == x holds to well below 1e-6.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .audio import SAMPLE_RATE, AudioSignal
from .errors import ParameterError

# Analysis defaults for the masking front-end: 64 ms Hann window, 16 ms hop.
STFT_WINDOW_S = 0.064
STFT_HOP_S = 0.016

# Filterbank defaults: 80 log-mel bands on 25 ms / 10 ms frames.
LOGMEL_N_MELS = 80
LOGMEL_WIN_S = 0.025
LOGMEL_HOP_S = 0.010
LOGMEL_FLOOR = 1e-10
_LOGMEL_NFFT = 512
_LOGMEL_FMIN_HZ = 20.0


def _to_samples(seconds: float, sample_rate: int, name: str) -> int:
    n = seconds * sample_rate
    n_int = int(round(n))
    if n_int <= 0 or abs(n - n_int) > 1e-6:
        raise ParameterError(f"{name}={seconds} s is not a positive integer number of samples")
    return n_int


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (the DFT-even variant, COLA for hop = n/k)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """F x T complex STFT matrix plus the metadata needed to invert it."""

    bins: np.ndarray
    window_len_s: float
    hop_len_s: float
    window_kind: str = "hann"
    sample_rate: int = SAMPLE_RATE
    n_samples: int = -1

    def __post_init__(self):
        bins = np.asarray(self.bins)
        if bins.ndim != 2 or not np.iscomplexobj(bins):
            raise ParameterError("bins must be a 2-D complex matrix (freq x time)")
        if bins.size and not np.all(np.isfinite(bins)):
            raise ParameterError("spectrogram contains NaN or inf")
        if self.window_kind != "hann":
            raise ParameterError(f"unsupported window kind: {self.window_kind}")
        win_n = _to_samples(self.window_len_s, self.sample_rate, "window_len_s")
        hop_n = _to_samples(self.hop_len_s, self.sample_rate, "hop_len_s")
        if win_n % hop_n != 0:
            raise ParameterError("hop must divide the window evenly (COLA requirement)")
        if bins.shape[0] != win_n // 2 + 1:
            raise ParameterError(
                f"expected {win_n // 2 + 1} frequency rows for a {win_n}-point window, "
                f"got {bins.shape[0]}"
            )
        n_samples = self.n_samples
        if n_samples < 0:
            n_samples = (bins.shape[1] - 1) * hop_n
        object.__setattr__(self, "bins", bins.astype(np.complex128))
        object.__setattr__(self, "n_samples", int(n_samples))

    @property
    def n_freq(self) -> int:
        return self.bins.shape[0]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def window_samples(self) -> int:
        return _to_samples(self.window_len_s, self.sample_rate, "window_len_s")

    @property
    def hop_samples(self) -> int:
        return _to_samples(self.hop_len_s, self.sample_rate, "hop_len_s")


def stft(
    x: AudioSignal,
    window_len_s: float = STFT_WINDOW_S,
    hop_len_s: float = STFT_HOP_S,
) -> ComplexSpectrogram:
    """Short-time Fourier transform with a periodic Hann analysis window.

    The signal is reflect-padded by half a window at both ends so that frame t
    is centered at t * hop; frame count is len(x) // hop + 1.
    """
    win_n = _to_samples(window_len_s, x.sample_rate, "window_len_s")
    hop_n = _to_samples(hop_len_s, x.sample_rate, "hop_len_s")
    if win_n % hop_n != 0:
        raise ParameterError("hop must divide the window evenly (COLA requirement)")
    pad = win_n // 2
    if len(x) <= pad:
        raise ParameterError(f"signal too short for a {window_len_s * 1e3:.0f} ms window")
    padded = np.pad(x.samples, pad, mode="reflect")
    n_frames = len(x) // hop_n + 1
    frames = np.lib.stride_tricks.sliding_window_view(padded, win_n)[::hop_n][:n_frames]
    bins = np.fft.rfft(frames * hann_window(win_n), axis=-1).T
    return ComplexSpectrogram(
        bins=bins,
        window_len_s=window_len_s,
        hop_len_s=hop_len_s,
        sample_rate=x.sample_rate,
        n_samples=len(x),
    )


def istft(spec: ComplexSpectrogram) -> AudioSignal:
    """Inverse STFT via window-square-normalized overlap-add.

    Returns exactly spec.n_samples samples, matching the input length of the
    stft() call that produced the spectrogram.
    """
    win_n = spec.window_samples
    hop_n = spec.hop_samples
    window = hann_window(win_n)
    frames = np.fft.irfft(spec.bins.T, n=win_n, axis=-1) * window
    pad = win_n // 2
    total = (spec.n_frames - 1) * hop_n + win_n
    if spec.n_samples + pad > total:
        raise ParameterError(
            f"n_samples={spec.n_samples} inconsistent with {spec.n_frames} frames"
        )
    acc = np.zeros(total)
    wsum = np.zeros(total)
    wsq = window * window
    for t in range(spec.n_frames):
        start = t * hop_n
        acc[start : start + win_n] += frames[t]
        wsum[start : start + win_n] += wsq
    valid = wsum > 1e-10
    acc[valid] /= wsum[valid]
    out = acc[pad : pad + spec.n_samples]
    return AudioSignal(out, spec.sample_rate)


def apply_mask(spec: ComplexSpectrogram, mask: np.ndarray) -> ComplexSpectrogram:
    """Multiply a spectrogram bin-wise by a (complex or real) mask of equal shape."""
    mask = np.asarray(mask)
    if mask.shape != spec.bins.shape:
        raise ParameterError(f"mask shape {mask.shape} != spectrogram shape {spec.bins.shape}")
    return ComplexSpectrogram(
        bins=spec.bins * mask,
        window_len_s=spec.window_len_s,
        hop_len_s=spec.hop_len_s,
        sample_rate=spec.sample_rate,
        n_samples=spec.n_samples,
    )


def frame_windows(duration_s: float, win_s: float, hop_s: float) -> List[Tuple[float, float]]:
    """Sliding windows [k*hop, k*hop + win) for every start < duration.

    The final windows are right-clipped to the duration, so the union of the
    returned windows is exactly [0, duration).
    """
    if win_s <= 0 or hop_s <= 0:
        raise ParameterError("win_s and hop_s must be positive")
    if duration_s <= 0:
        return []
    n = int(math.floor(duration_s / hop_s - 1e-9)) + 1
    out = []
    for k in range(n):
        start = k * hop_s
        out.append((start, min(start + win_s, duration_s)))
    return out


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int,
    n_fft: int,
    sample_rate: int = SAMPLE_RATE,
    fmin_hz: float = _LOGMEL_FMIN_HZ,
    fmax_hz: float = None,
) -> np.ndarray:
    """Triangular mel filterbank matrix (n_mels x n_fft//2+1)."""
    if n_mels < 1:
        raise ParameterError("n_mels must be >= 1")
    if fmax_hz is None:
        fmax_hz = sample_rate / 2.0
    mel_points = np.linspace(_hz_to_mel(fmin_hz), _hz_to_mel(fmax_hz), n_mels + 2)
    hz_points = _mel_to_hz(mel_points)
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_mels, bin_freqs.size))
    for i in range(n_mels):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        up = (bin_freqs - left) / max(center - left, 1e-9)
        down = (right - bin_freqs) / max(right - center, 1e-9)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


def logmel(
    x: AudioSignal,
    n_mels: int = LOGMEL_N_MELS,
    frame_win_s: float = LOGMEL_WIN_S,
    frame_hop_s: float = LOGMEL_HOP_S,
) -> np.ndarray:
    """Log mel-filterbank energies, shape (n_mels, T_f).

    Framing follows frame_windows(): one frame per window start < duration,
    tail frames zero-padded; energies get an additive floor before the log, so
    silence maps to log(LOGMEL_FLOOR).
    """
    win_n = _to_samples(frame_win_s, x.sample_rate, "frame_win_s")
    hop_n = _to_samples(frame_hop_s, x.sample_rate, "frame_hop_s")
    if n_mels < 1:
        raise ParameterError("n_mels must be >= 1")
    n = len(x)
    if n == 0:
        return np.zeros((n_mels, 0))
    n_frames = (n - 1) // hop_n + 1
    padded = np.zeros((n_frames - 1) * hop_n + win_n)
    padded[:n] = x.samples
    frames = np.lib.stride_tricks.sliding_window_view(padded, win_n)[::hop_n][:n_frames]
    n_fft = max(_LOGMEL_NFFT, win_n)
    spec = np.abs(np.fft.rfft(frames * hann_window(win_n), n=n_fft, axis=-1)) ** 2
    fb = mel_filterbank(n_mels, n_fft, x.sample_rate)
    energies = spec @ fb.T
    return np.log(energies + LOGMEL_FLOOR).T
