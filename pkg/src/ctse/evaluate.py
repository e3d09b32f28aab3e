"""Evaluation harness: run fusion modes over manifests and score them."""

import math
from typing import Dict, List, Optional

import numpy as np

from .atsvad import ATSVADModel
from .dsp import frame_windows
from .encoder import SpeakerEncoder
from .errors import ParameterError
from .fusion import (
    ExtractionResult,
    FusionConfig,
    FusionModels,
    IdentityExtractor,
    run_cascade1,
    run_mode,
)
from .metrics import score_run
from .pbsrnn import TargetExtractor
from .simulate import MixtureManifest
from .timeline import ActivityTrack

EVAL_MODES = ("tsvad_only", "pbsrnn_only", "cascade1", "cascade2", "parallel")


def full_active_track(duration_s: float, hop_s: float, win_s: float) -> ActivityTrack:
    n = len(frame_windows(duration_s, win_s, hop_s))
    return ActivityTrack(np.ones(n), hop_s, win_s, kind="label")


def run_eval_mode(
    mode: str,
    manifest: MixtureManifest,
    encoder: SpeakerEncoder,
    extractor: Optional[TargetExtractor],
    tsvad: Optional[ATSVADModel],
    fusion_cfg: FusionConfig,
) -> ExtractionResult:
    """Run one evaluation row: a fusion mode or one of the two single-model
    baselines (timestamps-only, extraction-only)."""
    e_s = encoder.encode(manifest.enrollment)
    y = manifest.mixture
    if mode == "tsvad_only":
        if tsvad is None:
            raise ParameterError("tsvad_only requires an activity model")
        cfg = FusionConfig(
            mode="cascade1",
            cascade1_alpha=tsvad.config.threshold,
            gate_kind=fusion_cfg.gate_kind,
            crossfade_s=fusion_cfg.crossfade_s,
            span_pad_s=0.0,
        )
        result = run_cascade1(y, e_s, FusionModels(IdentityExtractor(), tsvad), cfg)
        result.mode = "tsvad_only"
        return result
    if mode == "pbsrnn_only":
        if extractor is None:
            raise ParameterError("pbsrnn_only requires an extractor")
        s_hat, _ = extractor.extract(y, e_s)
        hop = tsvad.config.hop_s if tsvad is not None else 0.25
        win = tsvad.config.win_s if tsvad is not None else 1.5
        return ExtractionResult(
            s_hat=s_hat,
            hyp_track=full_active_track(y.duration_s, hop, win),
            mode="pbsrnn_only",
        )
    if extractor is None or tsvad is None:
        raise ParameterError(f"mode {mode} requires both models")
    return run_mode(mode, y, e_s, FusionModels(extractor, tsvad), fusion_cfg)


def evaluate_manifest(
    manifest: MixtureManifest,
    encoder: SpeakerEncoder,
    extractor: Optional[TargetExtractor],
    tsvad: Optional[ATSVADModel],
    fusion_cfg: FusionConfig,
    modes: List[str],
    config_name: str = "",
    recording_id: str = "",
) -> List[Dict]:
    rows = []
    for mode in modes:
        result = run_eval_mode(mode, manifest, encoder, extractor, tsvad, fusion_cfg)
        diar, enh = score_run(manifest, result)
        rows.append(
            {
                "config": config_name,
                "recording": recording_id,
                "mode": mode,
                "der": diar.der,
                "jer": diar.jer,
                "int_db": enh.int_db,
                "si_snr_db": enh.si_snr_db,
                "fa_s": diar.fa_s,
                "miss_s": diar.miss_s,
                "total_s": diar.total_s,
            }
        )
    return rows


def aggregate_rows(rows: List[Dict]) -> List[Dict]:
    """Per (config, mode) means; undefined metric values are excluded, inf DER
    rows are averaged as-is (they are meaningful: empty reference)."""
    keys = sorted({(r["config"], r["mode"]) for r in rows})
    out = []
    for config, mode in keys:
        group = [r for r in rows if r["config"] == config and r["mode"] == mode]

        def mean_of(name):
            vals = [r[name] for r in group if r[name] is not None and math.isfinite(r[name])]
            return float(np.mean(vals)) if vals else None

        out.append(
            {
                "config": config,
                "mode": mode,
                "n": len(group),
                "der": mean_of("der"),
                "jer": mean_of("jer"),
                "int_db": mean_of("int_db"),
                "si_snr_db": mean_of("si_snr_db"),
            }
        )
    return out
