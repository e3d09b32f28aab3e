"""Speaker-activity timelines, frame-level activity tracks, and their serialization."""

import io
import json
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .dsp import frame_windows
from .errors import ParameterError

_EPS = 1e-9


class Segment(NamedTuple):
    start: float
    end: float
    speaker: str


@dataclass(frozen=True)
class Timeline:
    """Who-spoke-when record: ordered (start, end, speaker) segments.

    Segments of the same speaker must be non-overlapping; different speakers
    may overlap freely.
    """

    segments: Tuple[Segment, ...]
    duration_s: float

    def __post_init__(self):
        segs = tuple(Segment(float(s), float(e), str(spk)) for s, e, spk in self.segments)
        segs = tuple(sorted(segs, key=lambda g: (g.start, g.end, g.speaker)))
        if self.duration_s < 0:
            raise ParameterError("duration_s must be >= 0")
        last_end: Dict[str, float] = {}
        for seg in segs:
            if not (0.0 - _EPS <= seg.start < seg.end <= self.duration_s + _EPS):
                raise ParameterError(f"segment {seg} outside [0, {self.duration_s}]")
            if seg.start < last_end.get(seg.speaker, -1.0) - _EPS:
                raise ParameterError(f"same-speaker overlap at {seg}")
            last_end[seg.speaker] = max(last_end.get(seg.speaker, 0.0), seg.end)
        object.__setattr__(self, "segments", segs)

    def speakers(self) -> List[str]:
        return sorted({s.speaker for s in self.segments})

    def segments_of(self, speaker: str) -> List[Segment]:
        return [s for s in self.segments if s.speaker == speaker]

    def active_intervals(
        self,
        include: Optional[List[str]] = None,
        exclude: Optional[List[str]] = None,
    ) -> List[Tuple[float, float]]:
        """Merged union of segments of the selected speakers."""
        ivs = []
        for seg in self.segments:
            if include is not None and seg.speaker not in include:
                continue
            if exclude is not None and seg.speaker in exclude:
                continue
            ivs.append((seg.start, seg.end))
        return merge_intervals(ivs)

    def total_active(self, speaker: Optional[str] = None) -> float:
        include = None if speaker is None else [speaker]
        return sum(e - s for s, e in self.active_intervals(include=include))

    def overlap_stats(self) -> Tuple[float, float]:
        """(time with >= 2 speakers active, time with >= 1 speaker active)."""
        events = []
        for seg in self.segments:
            events.append((seg.start, 1))
            events.append((seg.end, -1))
        events.sort()
        overlap = speech = 0.0
        count = 0
        prev = 0.0
        for t, d in events:
            if count >= 1:
                speech += t - prev
            if count >= 2:
                overlap += t - prev
            count += d
            prev = t
        return overlap, speech

    def overlap_ratio(self) -> float:
        overlap, speech = self.overlap_stats()
        return overlap / speech if speech > 0 else 0.0

    def to_rttm(self, recording_id: str = "rec") -> str:
        lines = []
        for seg in self.segments:
            lines.append(
                f"SPEAKER {recording_id} 1 {seg.start:.6f} {seg.end - seg.start:.6f} "
                f"<NA> <NA> {seg.speaker} <NA> <NA>"
            )
        return "\n".join(lines) + ("\n" if lines else "")

    @staticmethod
    def from_rttm(text: str, duration_s: float) -> "Timeline":
        segs = []
        for line in io.StringIO(text):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 8 or parts[0] != "SPEAKER":
                raise ParameterError(f"bad RTTM line: {line!r}")
            start = float(parts[3])
            dur = float(parts[4])
            segs.append(Segment(start, start + dur, parts[7]))
        return Timeline(tuple(segs), duration_s)

    def to_json(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "segments": [[s.start, s.end, s.speaker] for s in self.segments],
        }

    @staticmethod
    def from_json(obj: dict) -> "Timeline":
        segs = tuple(Segment(s, e, spk) for s, e, spk in obj["segments"])
        return Timeline(segs, float(obj["duration_s"]))


def merge_intervals(intervals: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Merge overlapping/touching (start, end) intervals; drops empty ones."""
    ivs = sorted((s, e) for s, e in intervals if e - s > 0)
    out: List[Tuple[float, float]] = []
    for s, e in ivs:
        if out and s <= out[-1][1] + _EPS:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


@dataclass(frozen=True)
class ActivityTrack:
    """Frame-rate activity sequence: probabilities in [0,1] or binary labels."""

    values: np.ndarray
    frame_hop_s: float
    frame_win_s: float
    kind: str = "probability"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ParameterError("track values must be 1-D")
        if self.frame_hop_s <= 0 or self.frame_win_s <= 0:
            raise ParameterError("frame hop and window must be positive")
        if self.kind == "probability":
            if values.size and (values.min() < 0.0 or values.max() > 1.0):
                raise ParameterError("probability track values must lie in [0, 1]")
        elif self.kind == "label":
            if values.size and not np.all((values == 0.0) | (values == 1.0)):
                raise ParameterError("label track values must be 0 or 1")
        else:
            raise ParameterError(f"unknown track kind: {self.kind}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def to_csv(self) -> str:
        lines = ["frame_index,start_s,prob"]
        for k, v in enumerate(self.values):
            lines.append(f"{k},{k * self.frame_hop_s:.6f},{v:.6f}")
        return "\n".join(lines) + "\n"


def timeline_to_track(
    timeline: Timeline,
    speaker_id: str,
    frame_hop_s: float,
    frame_win_s: float,
) -> ActivityTrack:
    """Rasterize one speaker's segments to binary frame labels.

    A frame is labeled 1 iff the speaker is active for more than half of the
    (right-clipped) frame window. A speaker absent from the timeline yields an
    all-zero track.
    """
    windows = frame_windows(timeline.duration_s, frame_win_s, frame_hop_s)
    n = len(windows)
    coverage = np.zeros(n)
    if n:
        starts = np.array([w[0] for w in windows])
        ends = np.array([w[1] for w in windows])
        for seg in timeline.segments_of(speaker_id):
            coverage += np.clip(
                np.minimum(ends, seg.end) - np.maximum(starts, seg.start), 0.0, None
            )
        labels = (coverage > 0.5 * (ends - starts)).astype(np.float64)
    else:
        labels = coverage
    return ActivityTrack(labels, frame_hop_s, frame_win_s, kind="label")


def labels_to_segments(
    track: ActivityTrack,
    duration_s: Optional[float] = None,
    speaker_id: str = "target",
) -> Timeline:
    """Convert a binary track to a timeline: each active window contributes its
    full extent [start, start + win], overlapping extents merged."""
    if track.kind != "label":
        raise ParameterError("labels_to_segments requires a label track")
    hop, win = track.frame_hop_s, track.frame_win_s
    if duration_s is None:
        duration_s = (len(track) - 1) * hop + win if len(track) else 0.0
    v = track.values.astype(bool)
    ivs = []
    k = 0
    n = v.size
    while k < n:
        if v[k]:
            j = k
            while j + 1 < n and v[j + 1]:
                j += 1
            ivs.append((k * hop, min(j * hop + win, duration_s)))
            k = j + 1
        else:
            k += 1
    merged = merge_intervals(ivs)
    return Timeline(tuple(Segment(s, e, speaker_id) for s, e in merged), duration_s)
