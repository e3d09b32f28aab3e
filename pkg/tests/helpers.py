"""Shared test oracles: brute-force scorers and ground-truth model stubs.

Everything here is deliberately independent of the implementation paths it
checks: rasterized scoring instead of interval arithmetic, per-position loops
instead of vectorized morphology, explicit DFT instead of FFT.
"""

from typing import List, Tuple

import numpy as np

from ctse.audio import SAMPLE_RATE, AudioSignal
from ctse.simulate import MixtureManifest
from ctse.timeline import ActivityTrack, Timeline


def raster_der_jer(
    ref: Timeline, hyp: Timeline, target_id: str, grid_s: float = 0.001
) -> Tuple[float, float, float, float, float]:
    """1 ms frame-rasterized brute-force scorer: (der, jer, fa, miss, total)."""
    n = int(round(ref.duration_s / grid_s))
    mids = (np.arange(n) + 0.5) * grid_s
    ref_on = np.zeros(n, dtype=bool)
    for seg in ref.segments:
        if seg.speaker == target_id:
            ref_on |= (mids >= seg.start) & (mids < seg.end)
    speakers = hyp.speakers()
    hyp_spk = target_id if target_id in speakers else (speakers[0] if len(speakers) == 1 else None)
    hyp_on = np.zeros(n, dtype=bool)
    for seg in hyp.segments:
        if seg.speaker == hyp_spk:
            hyp_on |= (mids >= seg.start) & (mids < seg.end)
    fa = grid_s * float(np.sum(hyp_on & ~ref_on))
    miss = grid_s * float(np.sum(ref_on & ~hyp_on))
    total = grid_s * float(np.sum(ref_on))
    union = grid_s * float(np.sum(ref_on | hyp_on))
    der = (fa + miss) / total if total > 0 else (np.inf if fa > 0 else 0.0)
    jer = (fa + miss) / union if union > 0 else 0.0
    return der, jer, fa, miss, total


def si_snr_oracle(s: np.ndarray, s_hat: np.ndarray, eps: float = 1e-8) -> float:
    """Direct projection-formula SI-SNR, clamped like the implementation."""
    alpha = np.sum(s_hat * s) / np.sum(s * s)
    target = alpha * s
    noise = s_hat - target
    value = 10.0 * np.log10((np.sum(target**2) + eps) / (np.sum(noise**2) + eps))
    return float(min(60.0, max(-60.0, value)))


def dilate_oracle(x: np.ndarray, length: int) -> np.ndarray:
    """Per-position loop; out-of-range positions are inactive."""
    r = length // 2
    x = x.astype(bool)
    out = np.zeros(x.size, dtype=bool)
    for i in range(x.size):
        for j in range(i - r, i + r + 1):
            if 0 <= j < x.size and x[j]:
                out[i] = True
                break
    return out


def erode_oracle(x: np.ndarray, length: int) -> np.ndarray:
    r = length // 2
    x = x.astype(bool)
    out = np.ones(x.size, dtype=bool)
    for i in range(x.size):
        for j in range(i - r, i + r + 1):
            if not (0 <= j < x.size) or not x[j]:
                out[i] = False
                break
    return out


def smooth_oracle(x: np.ndarray, dilation_len: int, erosion_len: int) -> np.ndarray:
    """Dilation then erosion on the track embedded in an inactive surround."""
    m = dilation_len // 2 + erosion_len // 2 + 1
    padded = np.concatenate([np.zeros(m, bool), x.astype(bool), np.zeros(m, bool)])
    closed = erode_oracle(dilate_oracle(padded, dilation_len), erosion_len)
    return closed[m:-m]


def dft_frame_oracle(frame: np.ndarray) -> np.ndarray:
    """Explicit O(N^2) real-input DFT of one frame."""
    n = frame.size
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    basis = np.exp(-2j * np.pi * k * t / n)
    return basis @ frame


def conv_oracle(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Direct O(N*K) time-domain convolution (full length)."""
    out = np.zeros(x.size + h.size - 1)
    for k in range(h.size):
        out[k : k + x.size] += h[k] * x
    return out


class OracleActivity:
    """Ground-truth activity model: sample-rate track from the manifest."""

    def __init__(self, manifest: MixtureManifest):
        class _Cfg:
            threshold = 0.5
            dilation_len = 1
            erosion_len = 1
            win_s = 1.0 / SAMPLE_RATE
            hop_s = 1.0 / SAMPLE_RATE

        self.config = _Cfg()
        n = len(manifest.mixture)
        values = np.zeros(n)
        for seg in manifest.timeline.segments_of(manifest.target_id):
            a = int(round(seg.start * SAMPLE_RATE))
            b = int(round(seg.end * SAMPLE_RATE))
            values[a:b] = 1.0
        self.track = ActivityTrack(
            values, 1.0 / SAMPLE_RATE, 1.0 / SAMPLE_RATE, kind="probability"
        )

    def predict(self, y: AudioSignal, e_s) -> ActivityTrack:
        del y, e_s
        return self.track


class OracleStemExtractor:
    """Ground-truth extractor: returns the true target stem slice."""

    def __init__(self, manifest: MixtureManifest):
        self.stem = manifest.stems[manifest.target_id].samples

    def extract(self, y: AudioSignal, e_s, t_offset_s: float = 0.0):
        del e_s
        i0 = int(round(t_offset_s * SAMPLE_RATE))
        return AudioSignal(self.stem[i0 : i0 + len(y)]), None


class StubActivity:
    """Constant-probability activity model at the standard window geometry."""

    def __init__(self, value: float, n_windows: int, hop_s: float = 0.25, win_s: float = 1.5):
        class _Cfg:
            threshold = 0.5
            dilation_len = 1
            erosion_len = 1

        _Cfg.win_s = win_s
        _Cfg.hop_s = hop_s
        self.config = _Cfg()
        self.track = ActivityTrack(
            np.full(n_windows, value), hop_s, win_s, kind="probability"
        )

    def predict(self, y, e_s):
        del y, e_s
        return self.track
