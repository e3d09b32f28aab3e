"""Fusion topologies combining the activity detector and the extractor.

cascade1: detect first, extract only the active spans.
cascade2: extract first, then detect on the extractor output and gate it.
parallel: run both on the mixture and multiply extractor output by the gate.

Binary gates use plateau/ramp envelopes whose crossfade ramps live entirely in
the gated-off region, so gated-off interiors carry exactly zero energy.
"""

import json
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .audio import AudioSignal, write_wav
from .errors import ParameterError
from .timeline import ActivityTrack, Timeline, labels_to_segments, merge_intervals
from .atsvad import smooth, threshold

MODES = ("cascade1", "cascade2", "parallel")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "cascade1"
    cascade1_alpha: float = 0.01
    gate_kind: str = "binary_label"
    crossfade_s: float = 0.010
    span_pad_s: float = 0.25

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown fusion mode: {self.mode}")
        if not 0.0 < self.cascade1_alpha < 1.0:
            raise ParameterError("cascade1_alpha must lie in (0, 1)")
        if self.gate_kind not in ("binary_label", "probability"):
            raise ParameterError(f"unknown gate_kind: {self.gate_kind}")
        if self.crossfade_s < 0 or self.span_pad_s < 0:
            raise ParameterError("crossfade_s and span_pad_s must be >= 0")


class FusionModels(NamedTuple):
    """Duck-typed model pair.

    extractor.extract(y, e_s, t_offset_s=...) -> (AudioSignal, mask or None)
    tsvad.predict(y, e_s) -> probability ActivityTrack; tsvad.config supplies
    the evaluation threshold and morphology kernel lengths.
    """

    extractor: object
    tsvad: object


@dataclass
class ExtractionResult:
    s_hat: AudioSignal
    hyp_track: ActivityTrack
    mode: str
    timings: Dict[str, float] = field(default_factory=dict)

    def save(self, dirpath: str, run_record: Optional[dict] = None) -> None:
        os.makedirs(dirpath, exist_ok=True)
        write_wav(os.path.join(dirpath, "extracted.wav"), self.s_hat)
        hyp = labels_to_segments(self.hyp_track, self.s_hat.duration_s, "target")
        with open(os.path.join(dirpath, "hypothesis.rttm"), "w") as f:
            f.write(hyp.to_rttm(os.path.basename(dirpath) or "rec"))
        record = {"mode": self.mode, "timings": self.timings}
        record.update(run_record or {})
        with open(os.path.join(dirpath, "run.json"), "w") as f:
            json.dump(record, f, indent=1)


class IdentityExtractor:
    """Passes the input through unchanged (the timestamps-only baseline)."""

    def extract(self, y: AudioSignal, e_s, t_offset_s: float = 0.0):
        del e_s, t_offset_s
        return y, None


def _smoothed_labels(models: FusionModels, track: ActivityTrack, alpha: float) -> ActivityTrack:
    cfg = models.tsvad.config
    return smooth(threshold(track, alpha), cfg.dilation_len, cfg.erosion_len)


def _envelope(n: int, sample_rate: int, intervals, crossfade_s: float) -> np.ndarray:
    """1.0 inside each interval, linear ramps to 0 outside the edges."""
    env = np.zeros(n)
    c = int(round(crossfade_s * sample_rate))
    for a_s, b_s in intervals:
        a = max(0, int(round(a_s * sample_rate)))
        b = min(n, int(round(b_s * sample_rate)))
        if b <= a:
            continue
        env[a:b] = 1.0
        if c > 0:
            lo = max(0, a - c)
            ramp = (np.arange(lo, a) - (a - c)) / c
            env[lo:a] = np.maximum(env[lo:a], ramp)
            hi = min(n, b + c)
            ramp = ((b + c) - np.arange(b, hi)) / c
            env[b:hi] = np.maximum(env[b:hi], ramp)
    return env


def _zoh_intervals(track: ActivityTrack, duration_s: float) -> List[Tuple[float, float]]:
    """Active intervals of a label track under zero-order hold at the frame hop."""
    hop = track.frame_hop_s
    v = track.values.astype(bool)
    out = []
    k = 0
    while k < v.size:
        if v[k]:
            j = k
            while j + 1 < v.size and v[j + 1]:
                j += 1
            out.append((k * hop, min((j + 1) * hop, duration_s)))
            k = j + 1
        else:
            k += 1
    return merge_intervals(out)


def _zoh_gate(track: ActivityTrack, n: int, sample_rate: int, crossfade_s: float) -> np.ndarray:
    """Probability gate: zero-order hold to sample rate, then a moving average
    of the crossfade width (plateau values are preserved)."""
    hop_n = int(round(track.frame_hop_s * sample_rate))
    gate = np.repeat(track.values, hop_n)
    if gate.size < n:
        pad_value = track.values[-1] if len(track) else 0.0
        gate = np.concatenate([gate, np.full(n - gate.size, pad_value)])
    gate = gate[:n]
    c = int(round(crossfade_s * sample_rate))
    if c > 1:
        padded = np.pad(gate, c, mode="edge")
        kernel = np.ones(c) / c
        gate = np.convolve(padded, kernel, mode="same")[c:-c]
    return gate


def _merge_close(intervals, min_gap: float):
    out = []
    for s, e in intervals:
        if out and s - out[-1][1] < min_gap:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


def run_cascade1(
    y: AudioSignal, e_s, models: FusionModels, cfg: FusionConfig
) -> ExtractionResult:
    """Detect target activity first, then extract only the active spans.

    Spans are padded for extractor context; outputs are placed back at their
    original offsets with ramps confined to the gated-off side. An empty
    active set yields an all-zero output.
    """
    sr = y.sample_rate
    t0 = time.perf_counter()
    probs = models.tsvad.predict(y, e_s)
    t_vad = time.perf_counter() - t0
    labels = _smoothed_labels(models, probs, cfg.cascade1_alpha)
    spans = [
        (seg.start, seg.end)
        for seg in labels_to_segments(labels, y.duration_s, "target").segments
    ]
    spans = _merge_close(spans, 2.0 * cfg.crossfade_s)
    out = np.zeros(len(y))
    t0 = time.perf_counter()
    min_len_s = getattr(getattr(models.extractor, "config", None), "window_len_s", 0.064)
    for a, b in spans:
        a_pad = max(0.0, a - cfg.span_pad_s)
        b_pad = min(y.duration_s, b + cfg.span_pad_s)
        if b_pad - a_pad < min_len_s:
            b_pad = min(y.duration_s, a_pad + min_len_s)
            a_pad = max(0.0, b_pad - min_len_s)
        piece = y.slice_s(a_pad, b_pad)
        s_span, _ = models.extractor.extract(piece, e_s, t_offset_s=a_pad)
        env = _envelope(len(piece), sr, [(a - a_pad, b - a_pad)], cfg.crossfade_s)
        i0 = int(round(a_pad * sr))
        out[i0 : i0 + len(piece)] += s_span.samples * env
    t_ext = time.perf_counter() - t0
    return ExtractionResult(
        s_hat=AudioSignal(out, sr),
        hyp_track=labels,
        mode="cascade1",
        timings={"tsvad_s": t_vad, "extract_s": t_ext},
    )


def run_cascade2(
    y: AudioSignal, e_s, models: FusionModels, cfg: FusionConfig
) -> ExtractionResult:
    """Extract first, then detect on the extractor output and gate it."""
    sr = y.sample_rate
    t0 = time.perf_counter()
    s0, _ = models.extractor.extract(y, e_s)
    t_ext = time.perf_counter() - t0
    t0 = time.perf_counter()
    probs = models.tsvad.predict(s0, e_s)
    t_vad = time.perf_counter() - t0
    labels = _smoothed_labels(models, probs, models.tsvad.config.threshold)
    env = _envelope(len(y), sr, _zoh_intervals(labels, y.duration_s), cfg.crossfade_s)
    return ExtractionResult(
        s_hat=AudioSignal(s0.samples * env, sr),
        hyp_track=labels,
        mode="cascade2",
        timings={"extract_s": t_ext, "tsvad_s": t_vad},
    )


def run_parallel(
    y: AudioSignal, e_s, models: FusionModels, cfg: FusionConfig
) -> ExtractionResult:
    """Run both models on the mixture and multiply the outputs."""
    sr = y.sample_rate
    t0 = time.perf_counter()
    s_full, _ = models.extractor.extract(y, e_s)
    t_ext = time.perf_counter() - t0
    t0 = time.perf_counter()
    probs = models.tsvad.predict(y, e_s)
    t_vad = time.perf_counter() - t0
    labels = _smoothed_labels(models, probs, models.tsvad.config.threshold)
    if cfg.gate_kind == "binary_label":
        gate = _envelope(len(y), sr, _zoh_intervals(labels, y.duration_s), cfg.crossfade_s)
    else:
        gate = _zoh_gate(probs, len(y), sr, cfg.crossfade_s)
    return ExtractionResult(
        s_hat=AudioSignal(s_full.samples * gate, sr),
        hyp_track=labels,
        mode="parallel",
        timings={"extract_s": t_ext, "tsvad_s": t_vad},
    )


_RUNNERS = {"cascade1": run_cascade1, "cascade2": run_cascade2, "parallel": run_parallel}


def run_mode(
    mode: str, y: AudioSignal, e_s, models: FusionModels, cfg: Optional[FusionConfig] = None
) -> ExtractionResult:
    if mode not in _RUNNERS:
        raise ParameterError(f"unknown fusion mode: {mode}")
    if cfg is None:
        cfg = FusionConfig(mode=mode)
    return _RUNNERS[mode](y, e_s, models, cfg)
