"""Seedable long-form mixture simulator.

Builds multi-speaker recordings with controlled overlap ratio, silence gaps,
additive noise at a requested SNR, and channel-matched enrollment. Identical
(corpus, spec) pairs, seed included, produce bit-identical manifests.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .audio import SAMPLE_RATE, AudioSignal, read_wav, write_wav
from .errors import CorpusExhaustedError, ParameterError
from .timeline import Segment, Timeline

EDGE_FADE_S = 0.010
# Minimum silence between consecutive segments of the same speaker.
SAME_SPEAKER_GAP_S = 0.050
TARGET_ABSENT_PROB = 0.2
_MAX_PLACEMENT_ATTEMPTS = 8


@dataclass
class SourceCorpus:
    """Clean utterances grouped by speaker, plus noise and impulse-response pools."""

    utterances: Dict[str, List[AudioSignal]]
    noise_pool: List[AudioSignal]
    rir_pool: List[AudioSignal] = field(default_factory=list)

    def __post_init__(self):
        if not self.utterances:
            raise ParameterError("corpus has no speakers")
        for spk, utts in self.utterances.items():
            if len(utts) < 2:
                raise ParameterError(f"speaker {spk!r} needs >= 2 utterances")
            for u in utts:
                if u.sample_rate != SAMPLE_RATE:
                    raise ParameterError(f"speaker {spk!r} has audio not at {SAMPLE_RATE} Hz")
        for pool in (self.noise_pool, self.rir_pool):
            for u in pool:
                if u.sample_rate != SAMPLE_RATE:
                    raise ParameterError(f"pool audio not at {SAMPLE_RATE} Hz")

    def speakers(self) -> List[str]:
        return sorted(self.utterances)


@dataclass(frozen=True)
class MixSpec:
    """Recipe for one simulated recording."""

    n_speakers: int
    overlap_ratio_target: float
    gap_range_s: Tuple[float, float]
    duration_s: float
    snr_db_range: Tuple[float, float] = (0.0, 20.0)
    seed: int = 0
    target_policy: str = "random_speaker"
    allow_target_absent: bool = False
    use_rir: bool = True

    def __post_init__(self):
        if not 2 <= self.n_speakers <= 5:
            raise ParameterError(f"n_speakers must be in [2, 5], got {self.n_speakers}")
        if not 0.0 <= self.overlap_ratio_target <= 0.4:
            raise ParameterError("overlap_ratio_target must be in [0, 0.4]")
        lo, hi = self.gap_range_s
        if not 0.0 <= lo <= hi <= 3.0:
            raise ParameterError("gap range must satisfy 0 <= min <= max <= 3.0 s")
        if self.duration_s <= 0:
            raise ParameterError("duration_s must be positive")
        if self.snr_db_range[0] > self.snr_db_range[1]:
            raise ParameterError("snr_db_range must be (min, max)")
        if self.target_policy != "random_speaker":
            raise ParameterError(f"unknown target_policy: {self.target_policy}")


@dataclass(frozen=True)
class TestConfig:
    """Named evaluation configuration (overlap family and silence style)."""

    name: str
    overlap_ratio_target: float
    gap_range_s: Tuple[float, float]
    duration_s: float = 120.0

    def build_spec(
        self,
        seed: int,
        duration_s: Optional[float] = None,
        n_speakers: Optional[int] = None,
        allow_target_absent: bool = False,
    ) -> MixSpec:
        if n_speakers is None:
            n_speakers = int(np.random.default_rng([seed, 101]).integers(2, 6))
        return MixSpec(
            n_speakers=n_speakers,
            overlap_ratio_target=self.overlap_ratio_target,
            gap_range_s=self.gap_range_s,
            duration_s=self.duration_s if duration_s is None else duration_s,
            seed=seed,
            allow_target_absent=allow_target_absent,
        )


TEST_CONFIGS: Dict[str, TestConfig] = {
    "0L": TestConfig("0L", 0.0, (2.9, 3.0)),
    "0S": TestConfig("0S", 0.0, (0.1, 0.5)),
    "OV10": TestConfig("OV10", 0.10, (0.1, 0.5)),
    "OV20": TestConfig("OV20", 0.20, (0.1, 0.5)),
    "OV30": TestConfig("OV30", 0.30, (0.1, 0.5)),
    "OV40": TestConfig("OV40", 0.40, (0.1, 0.5)),
}


@dataclass
class MixtureManifest:
    """Ground truth for one simulated recording."""

    mixture: AudioSignal
    stems: Dict[str, AudioSignal]
    noise_stem: AudioSignal
    timeline: Timeline
    target_id: str
    enrollment: AudioSignal
    achieved_overlap_ratio: float
    snr_db: float
    seed: int
    used_utterances: Tuple[Tuple[str, int], ...] = ()
    enrollment_utterance: Tuple[str, int] = ("", -1)
    rir_index: Optional[int] = None

    def save(self, dirpath: str) -> None:
        os.makedirs(os.path.join(dirpath, "stems"), exist_ok=True)
        write_wav(os.path.join(dirpath, "mixture.wav"), self.mixture)
        write_wav(os.path.join(dirpath, "noise.wav"), self.noise_stem)
        write_wav(os.path.join(dirpath, "enrollment.wav"), self.enrollment)
        for spk, stem in self.stems.items():
            write_wav(os.path.join(dirpath, "stems", f"{spk}.wav"), stem)
        with open(os.path.join(dirpath, "timeline.rttm"), "w") as f:
            f.write(self.timeline.to_rttm(os.path.basename(dirpath) or "rec"))
        with open(os.path.join(dirpath, "timeline.json"), "w") as f:
            json.dump(self.timeline.to_json(), f, indent=1)
        sidecar = {
            "target_id": self.target_id,
            "snr_db": self.snr_db,
            "seed": self.seed,
            "achieved_overlap_ratio": self.achieved_overlap_ratio,
            "rir_index": self.rir_index,
            "used_utterances": [list(u) for u in self.used_utterances],
            "enrollment_utterance": list(self.enrollment_utterance),
            "speakers": sorted(self.stems),
            "duration_s": self.mixture.duration_s,
        }
        with open(os.path.join(dirpath, "manifest.json"), "w") as f:
            json.dump(sidecar, f, indent=1)

    @staticmethod
    def load(dirpath: str) -> "MixtureManifest":
        with open(os.path.join(dirpath, "manifest.json")) as f:
            sidecar = json.load(f)
        with open(os.path.join(dirpath, "timeline.json")) as f:
            timeline = Timeline.from_json(json.load(f))
        stems = {
            spk: read_wav(os.path.join(dirpath, "stems", f"{spk}.wav"))
            for spk in sidecar["speakers"]
        }
        return MixtureManifest(
            mixture=read_wav(os.path.join(dirpath, "mixture.wav")),
            stems=stems,
            noise_stem=read_wav(os.path.join(dirpath, "noise.wav")),
            timeline=timeline,
            target_id=sidecar["target_id"],
            enrollment=read_wav(os.path.join(dirpath, "enrollment.wav")),
            achieved_overlap_ratio=sidecar["achieved_overlap_ratio"],
            snr_db=sidecar["snr_db"],
            seed=sidecar["seed"],
            used_utterances=tuple(tuple(u) for u in sidecar["used_utterances"]),
            enrollment_utterance=tuple(sidecar["enrollment_utterance"]),
            rir_index=sidecar["rir_index"],
        )


def apply_rir_matched(utterance: AudioSignal, rir: AudioSignal) -> AudioSignal:
    """Convolve with a room impulse response, truncated to the input length and
    peak-normalized back to the input's peak."""
    if len(rir) == 0:
        raise ParameterError("empty impulse response")
    y = fftconvolve(utterance.samples, rir.samples)[: len(utterance)]
    peak_in = float(np.max(np.abs(utterance.samples))) if len(utterance) else 0.0
    peak_out = float(np.max(np.abs(y))) if y.size else 0.0
    if peak_out > 0.0:
        y = y * (peak_in / peak_out)
    return AudioSignal(y, utterance.sample_rate)


def add_noise_at_snr(
    mix: AudioSignal, noise: AudioSignal, snr_db: float
) -> Tuple[AudioSignal, AudioSignal]:
    """Add noise scaled so that 10*log10(E_speech / E_noise) equals snr_db.

    The noise is looped/cropped to the mixture length. Returns the noisy
    mixture and the scaled noise stem.
    """
    n = len(mix)
    e_mix = float(np.dot(mix.samples, mix.samples))
    if e_mix == 0.0:
        raise ParameterError("zero-energy mixture: SNR is undefined")
    if len(noise) == 0:
        raise ParameterError("empty noise signal")
    reps = -(-n // len(noise))
    fitted = np.tile(noise.samples, reps)[:n]
    e_noise = float(np.dot(fitted, fitted))
    if e_noise == 0.0:
        raise ParameterError("zero-energy noise: cannot scale to an SNR")
    scale = np.sqrt(e_mix / (e_noise * 10.0 ** (snr_db / 10.0)))
    scaled = fitted * scale
    return AudioSignal(mix.samples + scaled, mix.sample_rate), AudioSignal(
        scaled, mix.sample_rate
    )


def scenario_of(manifest: MixtureManifest, t0: float, t1: float) -> str:
    """Classify [t0, t1) as A (target overlapped by an interferer), B (target,
    no simultaneous interferer), C (interferers only) or D (nobody).

    A requires simultaneous activity: some instant in the window where the
    target and an interferer speak at once. Zero-overlap recordings therefore
    never produce A even when a window straddles two adjacent utterances.
    """
    if not 0.0 <= t0 < t1 <= manifest.timeline.duration_s + 1e-9:
        raise ParameterError(f"window [{t0}, {t1}) outside the recording")
    tl = manifest.timeline
    t_ivs = tl.active_intervals(include=[manifest.target_id])
    i_ivs = tl.active_intervals(exclude=[manifest.target_id])
    target_on = any(s < t1 and e > t0 for s, e in t_ivs)
    interf_on = any(s < t1 and e > t0 for s, e in i_ivs)
    both_on = any(
        max(ts, is_, t0) < min(te, ie, t1)
        for ts, te in t_ivs
        for is_, ie in i_ivs
    )
    if both_on:
        return "A"
    if target_on:
        return "B"
    if interf_on:
        return "C"
    return "D"


def _edge_fades(x: np.ndarray, sr: int, fade_s: float = EDGE_FADE_S) -> np.ndarray:
    n_fade = min(int(round(fade_s * sr)), x.size // 2)
    if n_fade <= 0:
        return x
    out = x.copy()
    ramp = np.linspace(0.0, 1.0, n_fade, endpoint=False)
    out[:n_fade] *= ramp
    out[-n_fade:] *= ramp[::-1]
    return out


def _interval_stats(intervals: List[Tuple[int, int]]) -> Tuple[int, int]:
    """(samples with >= 2 active, samples with >= 1 active)."""
    events = []
    for s, e in intervals:
        events.append((s, 1))
        events.append((e, -1))
    events.sort()
    overlap = speech = 0
    count = 0
    prev = 0
    for t, d in events:
        if count >= 1:
            speech += t - prev
        if count >= 2:
            overlap += t - prev
        count += d
        prev = t
    return overlap, speech


def _place_utterances(corpus: SourceCorpus, spec: MixSpec, rng: np.random.Generator):
    """Greedy servo placement: overlap the next utterance with the previous one
    when the running overlap ratio is below target, otherwise insert a gap."""
    sr = SAMPLE_RATE
    n_total = int(round(spec.duration_s * sr))
    speakers = corpus.speakers()
    if len(speakers) < spec.n_speakers:
        raise CorpusExhaustedError(
            f"corpus has {len(speakers)} speakers, spec wants {spec.n_speakers}"
        )
    chosen = [str(s) for s in rng.choice(speakers, size=spec.n_speakers, replace=False)]
    target = chosen[int(rng.integers(len(chosen)))]
    pools = {
        spk: [int(i) for i in rng.permutation(len(corpus.utterances[spk]))] for spk in chosen
    }
    enroll_idx = pools[target].pop(0)
    target_absent = spec.allow_target_absent and rng.random() < TARGET_ABSENT_PROB

    margin = int(round(SAME_SPEAKER_GAP_S * sr))
    placements: List[Tuple[str, int, int, int]] = []  # (spk, utt_idx, start, utt_len)
    intervals: List[Tuple[int, int]] = []
    last_end: Dict[str, int] = {}
    cursor = 0
    prev: Optional[Tuple[str, int, int]] = None  # (spk, start, end)

    while cursor < n_total:
        candidates = [
            s for s in chosen if pools[s] and not (target_absent and s == target)
        ]
        if not candidates:
            raise CorpusExhaustedError(
                f"ran out of utterances at {cursor / sr:.1f} s of {spec.duration_s} s"
            )
        target_placed = any(p[0] == target for p in placements)
        if not target_absent and not target_placed and cursor > 0.6 * n_total and pools[target]:
            spk = target
        else:
            overlap, speech = _interval_stats(intervals)
            ratio = overlap / speech if speech else 0.0
            want_overlap = (
                spec.overlap_ratio_target > 0.0
                and prev is not None
                and ratio < spec.overlap_ratio_target
            )
            if want_overlap:
                others = [s for s in candidates if s != prev[0]]
                if others:
                    candidates = others
            spk = candidates[int(rng.integers(len(candidates)))]
        utt_idx = pools[spk].pop(0)
        utt_len = len(corpus.utterances[spk][utt_idx])

        overlap, speech = _interval_stats(intervals)
        ratio = overlap / speech if speech else 0.0
        if (
            spec.overlap_ratio_target > 0.0
            and prev is not None
            and prev[0] != spk
            and ratio < spec.overlap_ratio_target
        ):
            tgt = spec.overlap_ratio_target
            want = (tgt * (speech + utt_len) - overlap) / (1.0 + tgt)
            prev_len = prev[2] - prev[1]
            ov = int(round(np.clip(want, 0.0, 0.9 * min(prev_len, utt_len))))
            start = prev[2] - ov
        else:
            gap = rng.uniform(*spec.gap_range_s)
            start = cursor + int(round(gap * sr))
        start = max(start, 0, last_end.get(spk, -margin) + margin)
        if start >= n_total:
            break
        end = min(start + utt_len, n_total)
        placements.append((spk, utt_idx, start, utt_len))
        intervals.append((start, end))
        last_end[spk] = start + utt_len
        cursor = max(cursor, end)
        prev = (spk, start, end)

    if not placements:
        raise CorpusExhaustedError("no utterance fits the requested duration")
    if not target_absent and not any(p[0] == target for p in placements):
        if not pools[target]:
            raise CorpusExhaustedError(f"no utterance left to place target {target!r}")
        # Degenerate short recording: drop the last placement for the target.
        spk, utt_idx, start, _ = placements.pop()
        new_idx = pools[target].pop(0)
        placements.append((target, new_idx, start, len(corpus.utterances[target][new_idx])))

    overlap, speech = _interval_stats(
        [(s, min(s + l, n_total)) for _, _, s, l in placements]
    )
    ratio = overlap / speech if speech else 0.0
    return placements, target, enroll_idx, target_absent, ratio


def simulate(corpus: SourceCorpus, spec: MixSpec) -> MixtureManifest:
    """Simulate one recording. Deterministic given (corpus, spec).

    The achieved overlap ratio lands within +-5 percentage points of the
    target; placement retries with derived sub-seeds if the greedy pass misses.
    """
    best = None
    chosen_attempt = None
    for attempt in range(_MAX_PLACEMENT_ATTEMPTS):
        rng = np.random.default_rng([spec.seed, attempt])
        placed = _place_utterances(corpus, spec, rng)
        err = abs(placed[4] - spec.overlap_ratio_target)
        if best is None or err < best[0]:
            best = (err, attempt)
        if err <= 0.025:
            chosen_attempt = attempt
            break
    if chosen_attempt is None:
        if best[0] > 0.05:
            raise ParameterError(
                f"could not reach overlap {spec.overlap_ratio_target:.2f} "
                f"(best error {best[0]:.3f}); increase duration or corpus size"
            )
        chosen_attempt = best[1]

    rng = np.random.default_rng([spec.seed, chosen_attempt])
    placements, target, enroll_idx, target_absent, _ = _place_utterances(corpus, spec, rng)

    sr = SAMPLE_RATE
    n_total = int(round(spec.duration_s * sr))
    rir = None
    rir_index = None
    if spec.use_rir and corpus.rir_pool:
        rir_index = int(rng.integers(len(corpus.rir_pool)))
        rir = corpus.rir_pool[rir_index]

    speakers_placed = sorted({p[0] for p in placements} | {target})
    stems = {spk: np.zeros(n_total) for spk in speakers_placed}
    segments = []
    used = []
    for spk, utt_idx, start, _ in placements:
        utt = corpus.utterances[spk][utt_idx]
        x = utt.samples
        if rir is not None and spk == target:
            x = apply_rir_matched(utt, rir).samples
        x = _edge_fades(x, sr)
        end = min(start + x.size, n_total)
        stems[spk][start:end] += x[: end - start]
        segments.append(Segment(start / sr, end / sr, spk))
        used.append((spk, utt_idx))

    timeline = Timeline(tuple(segments), spec.duration_s)
    speech = AudioSignal(np.sum([stems[s] for s in speakers_placed], axis=0), sr)
    if not corpus.noise_pool:
        raise ParameterError("corpus has no noise pool; mixtures require noise")
    noise_idx = int(rng.integers(len(corpus.noise_pool)))
    snr_db = float(rng.uniform(*spec.snr_db_range))
    mixture, noise_stem = add_noise_at_snr(speech, corpus.noise_pool[noise_idx], snr_db)

    enrollment = corpus.utterances[target][enroll_idx]
    if rir is not None:
        enrollment = apply_rir_matched(enrollment, rir)

    return MixtureManifest(
        mixture=mixture,
        stems={spk: AudioSignal(stems[spk], sr) for spk in speakers_placed},
        noise_stem=noise_stem,
        timeline=timeline,
        target_id=target,
        enrollment=enrollment,
        achieved_overlap_ratio=timeline.overlap_ratio(),
        snr_db=snr_db,
        seed=spec.seed,
        used_utterances=tuple(used),
        enrollment_utterance=(target, enroll_idx),
        rir_index=rir_index,
    )


def _fit_length(x: np.ndarray, n: int, rng: np.random.Generator, sr: int) -> np.ndarray:
    """Crop at a random offset if longer than n, else loop with edge fades."""
    if x.size >= n:
        off = int(rng.integers(x.size - n + 1))
        return x[off : off + n].copy()
    piece = _edge_fades(x, sr)
    reps = -(-n // x.size)
    return np.tile(piece, reps)[:n]


def sample_full_overlap(
    corpus: SourceCorpus,
    rng: np.random.Generator,
    duration_s: float = 2.4,
    snr_db_range: Tuple[float, float] = (5.0, 20.0),
    gain_db_range: Tuple[float, float] = (-3.0, 3.0),
) -> MixtureManifest:
    """One fully-overlapped two-speaker mixture with an always-active target.

    Used by the first extractor training phase; not reachable through MixSpec,
    whose overlap target is capped at the long-form statistics.
    """
    sr = SAMPLE_RATE
    n = int(round(duration_s * sr))
    speakers = corpus.speakers()
    if len(speakers) < 2:
        raise CorpusExhaustedError("need at least two speakers for a full-overlap pair")
    pair = rng.choice(speakers, size=2, replace=False)
    target, interferer = str(pair[0]), str(pair[1])
    t_pool = corpus.utterances[target]
    t_idx = int(rng.integers(len(t_pool)))
    e_idx = int(rng.integers(len(t_pool) - 1))
    if e_idx >= t_idx:
        e_idx += 1
    i_pool = corpus.utterances[interferer]
    i_idx = int(rng.integers(len(i_pool)))

    g_t = 10.0 ** (rng.uniform(*gain_db_range) / 20.0)
    g_i = 10.0 ** (rng.uniform(*gain_db_range) / 20.0)
    s = _edge_fades(_fit_length(t_pool[t_idx].samples, n, rng, sr) * g_t, sr)
    i = _edge_fades(_fit_length(i_pool[i_idx].samples, n, rng, sr) * g_i, sr)

    speech = AudioSignal(s + i, sr)
    if not corpus.noise_pool:
        raise ParameterError("corpus has no noise pool; mixtures require noise")
    noise_idx = int(rng.integers(len(corpus.noise_pool)))
    snr_db = float(rng.uniform(*snr_db_range))
    mixture, noise_stem = add_noise_at_snr(speech, corpus.noise_pool[noise_idx], snr_db)

    timeline = Timeline(
        (Segment(0.0, duration_s, target), Segment(0.0, duration_s, interferer)),
        duration_s,
    )
    return MixtureManifest(
        mixture=mixture,
        stems={target: AudioSignal(s, sr), interferer: AudioSignal(i, sr)},
        noise_stem=noise_stem,
        timeline=timeline,
        target_id=target,
        enrollment=t_pool[e_idx],
        achieved_overlap_ratio=1.0,
        snr_db=snr_db,
        seed=-1,
        used_utterances=((target, t_idx), (interferer, i_idx)),
        enrollment_utterance=(target, e_idx),
        rir_index=None,
    )


def save_corpus(corpus: SourceCorpus, root: str) -> str:
    """Write corpus WAVs plus an index.json mapping ids to relative paths."""
    index = {"speakers": {}, "noise": [], "rirs": []}
    for spk in corpus.speakers():
        os.makedirs(os.path.join(root, spk), exist_ok=True)
        rels = []
        for i, utt in enumerate(corpus.utterances[spk]):
            rel = os.path.join(spk, f"utt{i:03d}.wav")
            write_wav(os.path.join(root, rel), utt)
            rels.append(rel)
        index["speakers"][spk] = rels
    os.makedirs(os.path.join(root, "noise"), exist_ok=True)
    for i, x in enumerate(corpus.noise_pool):
        rel = os.path.join("noise", f"noise{i:03d}.wav")
        write_wav(os.path.join(root, rel), x)
        index["noise"].append(rel)
    os.makedirs(os.path.join(root, "rirs"), exist_ok=True)
    for i, x in enumerate(corpus.rir_pool):
        rel = os.path.join("rirs", f"rir{i:03d}.wav")
        write_wav(os.path.join(root, rel), x)
        index["rirs"].append(rel)
    index_path = os.path.join(root, "index.json")
    with open(index_path, "w") as f:
        json.dump(index, f, indent=1)
    return index_path


def load_corpus(index_path: str) -> SourceCorpus:
    root = os.path.dirname(os.path.abspath(index_path))
    with open(index_path) as f:
        index = json.load(f)
    utterances = {
        spk: [read_wav(os.path.join(root, rel)) for rel in rels]
        for spk, rels in index["speakers"].items()
    }
    noise = [read_wav(os.path.join(root, rel)) for rel in index.get("noise", [])]
    rirs = [read_wav(os.path.join(root, rel)) for rel in index.get("rirs", [])]
    return SourceCorpus(utterances=utterances, noise_pool=noise, rir_pool=rirs)
