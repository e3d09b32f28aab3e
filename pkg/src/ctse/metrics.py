"""Diarization and enhancement scoring: DER, JER, interference leakage, SI-SNR.

DER/JER use exact segment-boundary arithmetic (boundaries snapped at 1e-9 s);
the test suite checks them against a 1 ms frame-rasterized brute-force scorer.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .audio import AudioSignal
from .errors import ParameterError
from .timeline import ActivityTrack, Timeline, labels_to_segments, merge_intervals

LOG_EPS = 1e-8
CLAMP_DB = 60.0
_SNAP = 1e-9


@dataclass(frozen=True)
class DiarScore:
    der: float
    jer: float
    fa_s: float
    miss_s: float
    confusion_s: float
    total_s: float


@dataclass(frozen=True)
class EnhanceScore:
    si_snr_db: Optional[float]
    int_db: Optional[float]
    target_absent_duration_s: float


def _snap_intervals(
    ref: List[Tuple[float, float]], hyp: List[Tuple[float, float]]
) -> Tuple[List[Tuple[float, float]], List[Tuple[float, float]]]:
    """Unify boundary values that differ by < 1e-9 s across both interval sets."""
    bounds = sorted({b for iv in ref + hyp for b in iv})
    canon = {}
    rep = None
    for b in bounds:
        if rep is None or b - rep > _SNAP:
            rep = b
        canon[b] = rep

    def fix(ivs):
        out = [(canon[s], canon[e]) for s, e in ivs]
        return [(s, e) for s, e in out if e > s]

    return fix(ref), fix(hyp)


def _sweep_durations(
    ref: List[Tuple[float, float]], hyp: List[Tuple[float, float]]
) -> Tuple[float, float, float]:
    """(fa, miss, hit) durations between two merged, snapped interval sets."""
    bounds = sorted({b for iv in ref + hyp for b in iv})
    ref_s = np.array([s for s, _ in ref])
    ref_e = np.array([e for _, e in ref])
    hyp_s = np.array([s for s, _ in hyp])
    hyp_e = np.array([e for _, e in hyp])

    def member(starts, ends, t):
        i = np.searchsorted(starts, t, side="right") - 1
        return i >= 0 and t < ends[i]

    fa = miss = hit = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        in_ref = member(ref_s, ref_e, mid)
        in_hyp = member(hyp_s, hyp_e, mid)
        if in_ref and in_hyp:
            hit += b - a
        elif in_hyp:
            fa += b - a
        elif in_ref:
            miss += b - a
    return fa, miss, hit


def _hyp_speaker(hyp: Timeline, target_id: str) -> Optional[str]:
    speakers = hyp.speakers()
    if not speakers:
        return None
    if target_id in speakers:
        return target_id
    if len(speakers) == 1:
        return speakers[0]
    raise ParameterError(
        f"hypothesis has speakers {speakers} and none is the target {target_id!r}"
    )


def _check_durations(ref: Timeline, hyp: Timeline) -> None:
    if abs(ref.duration_s - hyp.duration_s) > 1e-6:
        raise ParameterError(
            f"recording durations differ: ref {ref.duration_s} vs hyp {hyp.duration_s}"
        )


def der(ref: Timeline, hyp: Timeline, target_id: str) -> DiarScore:
    """Two-class diarization error rate for one target speaker, no collar.

    FA is hypothesis-active time outside the reference, Miss is the converse,
    Confusion is identically zero in the single-target setting, and Total is
    the reference-active duration. DER may exceed 1. With an empty reference,
    DER is +inf if the hypothesis claims anything and 0 otherwise.
    """
    _check_durations(ref, hyp)
    ref_ivs = ref.active_intervals(include=[target_id])
    spk = _hyp_speaker(hyp, target_id)
    hyp_ivs = hyp.active_intervals(include=[spk]) if spk is not None else []
    ref_ivs, hyp_ivs = _snap_intervals(ref_ivs, hyp_ivs)
    fa, miss, hit = _sweep_durations(ref_ivs, hyp_ivs)
    total = miss + hit
    if total > 0:
        der_value = (fa + miss) / total
    else:
        der_value = math.inf if fa > 0 else 0.0
    union = fa + miss + hit
    jer_value = (fa + miss) / union if union > 0 else 0.0
    return DiarScore(
        der=der_value,
        jer=jer_value,
        fa_s=fa,
        miss_s=miss,
        confusion_s=0.0,
        total_s=total,
    )


def jer(ref: Timeline, hyp: Timeline, target_id: str) -> float:
    """Jaccard error rate for the single-target case: (FA + Miss) / union time.

    Returns 0 when both reference and hypothesis are empty.
    """
    return der(ref, hyp, target_id).jer


def si_snr(s: AudioSignal, s_hat: AudioSignal) -> Optional[float]:
    """Scale-invariant signal-to-noise ratio of s_hat against reference s, in dB.

    Projects the estimate onto the reference and takes the energy ratio of the
    projection to the residual, clamped to [-60, +60] dB. Returns None when the
    reference has zero energy.
    """
    if len(s) != len(s_hat):
        raise ParameterError(f"length mismatch: {len(s)} vs {len(s_hat)}")
    ref = s.samples
    est = s_hat.samples
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        return None
    alpha = float(np.dot(est, ref)) / ref_energy
    proj = alpha * ref
    resid = est - proj
    ratio = (float(np.dot(proj, proj)) + LOG_EPS) / (float(np.dot(resid, resid)) + LOG_EPS)
    return float(np.clip(10.0 * np.log10(ratio), -CLAMP_DB, CLAMP_DB))


def int_leakage(
    y: AudioSignal, s_hat: AudioSignal, ref: Timeline, target_id: str
) -> Optional[float]:
    """Energy drop (dB) of the output vs the input over target-absent spans.

    Positive values mean the output carries less energy than the mixture where
    the target is silent. Clamped to [-60, +60] dB; None when the target is
    never absent.
    """
    if len(y) != len(s_hat):
        raise ParameterError(f"length mismatch: {len(y)} vs {len(s_hat)}")
    absent = target_absent_intervals(ref, target_id)
    if not absent:
        return None
    sr = y.sample_rate
    e_in = e_out = 0.0
    for a, b in absent:
        i = int(round(a * sr))
        j = int(round(b * sr))
        e_in += float(np.dot(y.samples[i:j], y.samples[i:j]))
        e_out += float(np.dot(s_hat.samples[i:j], s_hat.samples[i:j]))
    delta = 10.0 * np.log10(e_in + LOG_EPS) - 10.0 * np.log10(e_out + LOG_EPS)
    return float(np.clip(delta, -CLAMP_DB, CLAMP_DB))


def target_absent_intervals(ref: Timeline, target_id: str) -> List[Tuple[float, float]]:
    """Complement of the target's active intervals within [0, duration)."""
    active = ref.active_intervals(include=[target_id])
    out = []
    cursor = 0.0
    for s, e in active:
        if s > cursor:
            out.append((cursor, s))
        cursor = max(cursor, e)
    if ref.duration_s > cursor:
        out.append((cursor, ref.duration_s))
    return [(s, e) for s, e in out if e - s > 1e-12]


def scenario_spans(ref: Timeline, target_id: str) -> Dict[str, List[Tuple[float, float]]]:
    """Partition [0, duration) into the four activity scenarios.

    A: target and at least one interferer active; B: target only;
    C: interferers only; D: nobody speaking.
    """
    t_ivs = ref.active_intervals(include=[target_id])
    i_ivs = ref.active_intervals(exclude=[target_id])
    bounds = sorted({0.0, ref.duration_s} | {b for iv in t_ivs + i_ivs for b in iv})
    out: Dict[str, List[Tuple[float, float]]] = {"A": [], "B": [], "C": [], "D": []}

    def member(ivs, t):
        return any(s <= t < e for s, e in ivs)

    for a, b in zip(bounds[:-1], bounds[1:]):
        if b <= a or a >= ref.duration_s:
            continue
        b = min(b, ref.duration_s)
        mid = 0.5 * (a + b)
        t_on = member(t_ivs, mid)
        i_on = member(i_ivs, mid)
        key = "A" if (t_on and i_on) else "B" if t_on else "C" if i_on else "D"
        out[key].append((a, b))
    return {k: merge_intervals(v) for k, v in out.items()}


def score_run(manifest, result) -> Tuple[DiarScore, EnhanceScore]:
    """Score one extraction run against its ground-truth manifest.

    DER/JER compare the manifest timeline with the hypothesis track converted
    to segments; SI-SNR uses the full-length target stem; INT is measured over
    target-absent spans.
    """
    ref = manifest.timeline
    if abs(result.s_hat.duration_s - ref.duration_s) > 1e-6:
        raise ParameterError("extraction result duration does not match the manifest")
    hyp = labels_to_segments(result.hyp_track, ref.duration_s, manifest.target_id)
    diar = der(ref, hyp, manifest.target_id)
    si = si_snr(manifest.stems[manifest.target_id], result.s_hat)
    leak = int_leakage(manifest.mixture, result.s_hat, ref, manifest.target_id)
    absent = sum(e - s for s, e in target_absent_intervals(ref, manifest.target_id))
    return diar, EnhanceScore(si_snr_db=si, int_db=leak, target_absent_duration_s=absent)


def mean_defined(values: List[Optional[float]]) -> Optional[float]:
    """Mean over values that are defined (not None); None if none are."""
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None
