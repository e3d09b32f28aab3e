"""Command-line orchestration: simulate | train | eval | ablate-window | report.

Exit codes: 0 success, 1 validation error, 2 unexpected runtime failure.
Output root comes from --out or the CTSE_OUTPUT_ROOT environment variable.
"""

import argparse
import concurrent.futures
import functools
import json
import os
import sys
import time
import traceback
from typing import Dict, List, Optional

import numpy as np

from . import ckpt, config as config_mod, report as report_mod
from .atsvad import ATSVADModel, train_atsvad
from .encoder import SpeakerEncoder, train_encoder
from .errors import (
    CheckpointError,
    CorpusExhaustedError,
    DependencyError,
    ParameterError,
)
from .evaluate import EVAL_MODES, aggregate_rows, evaluate_manifest
from .fusion import FusionConfig
from .metrics import int_leakage
from .pbsrnn import TargetExtractor, train_phase1, train_phase2
from .simulate import (
    TEST_CONFIGS,
    MixSpec,
    MixtureManifest,
    load_corpus,
    simulate,
)
from .toy_corpus import make_toy_corpus

STAGES = ("encoder", "pbsrnn_p1", "pbsrnn_p2", "atsvad")

_VALIDATION_ERRORS = (
    ParameterError,
    DependencyError,
    CheckpointError,
    CorpusExhaustedError,
    FileNotFoundError,
)


@functools.lru_cache(maxsize=2)
def _cached_toy_corpus(seed: int, n_speakers: int, utts_per_speaker: int):
    return make_toy_corpus(seed=seed, n_speakers=n_speakers, utts_per_speaker=utts_per_speaker)


def _load_corpus(cfg: Dict):
    c = cfg["corpus"]
    if c["kind"] == "toy":
        return _cached_toy_corpus(
            int(c.get("seed", 77)), int(c.get("n_speakers", 12)), int(c.get("utts_per_speaker", 18))
        )
    return load_corpus(c["index"])


def _out_root(args) -> str:
    root = args.out or os.environ.get("CTSE_OUTPUT_ROOT") or "runs"
    os.makedirs(root, exist_ok=True)
    return root


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


def _metrics_csv(rows: List[tuple], header: str) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.8g}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _simulate_one(cfg: Dict, name: str, seed: int, duration: Optional[float], rec_dir: str) -> Dict:
    corpus = _load_corpus(cfg)
    if name in TEST_CONFIGS:
        spec = TEST_CONFIGS[name].build_spec(seed=seed, duration_s=duration)
    else:
        rng = np.random.default_rng([seed, 55])
        spec = MixSpec(
            n_speakers=int(rng.integers(2, 6)),
            overlap_ratio_target=float(rng.choice([0.0, 0.1, 0.2, 0.3, 0.4])),
            gap_range_s=(0.1, 3.0),
            duration_s=duration if duration is not None else 60.0,
            seed=seed,
        )
    manifest = simulate(corpus, spec)
    manifest.save(rec_dir)
    return {
        "config": name,
        "path": os.path.relpath(rec_dir),
        "seed": seed,
        "target_id": manifest.target_id,
        "sha256_mixture": ckpt.file_sha256(os.path.join(rec_dir, "mixture.wav")),
        "achieved_overlap_ratio": manifest.achieved_overlap_ratio,
    }


def cmd_simulate(args) -> int:
    cfg = config_mod.resolve_config(args.preset, args.config)
    root = _out_root(args)
    split_dir = os.path.join(root, "datasets", args.split)
    ev = cfg["eval"]
    names = ev["configs"] if args.split == "test" else ["train"]
    n_rec = args.n_recordings if args.n_recordings is not None else ev["n_recordings"]
    duration = args.duration if args.duration is not None else ev.get("duration_s")
    base_seed = args.seed if args.seed is not None else ev.get("seed", 0)

    jobs = []
    for ci, name in enumerate(names):
        for r in range(n_rec):
            seed = base_seed + 1000 * ci + r
            rec_dir = os.path.join(split_dir, name, f"rec{r:03d}")
            jobs.append((name, seed, rec_dir))

    entries = []
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [
                pool.submit(_simulate_one, cfg, name, seed, duration, rec_dir)
                for name, seed, rec_dir in jobs
            ]
            entries = [f.result() for f in futures]
    else:
        for name, seed, rec_dir in jobs:
            entries.append(_simulate_one(cfg, name, seed, duration, rec_dir))

    entries.sort(key=lambda e: (e["config"], e["path"]))
    index = {
        "version": config_mod.CONFIG_VERSION,
        "split": args.split,
        "base_seed": base_seed,
        "duration_s": duration,
        "recordings": entries,
    }
    index_path = os.path.join(split_dir, "index.json")
    _write(index_path, json.dumps(index, indent=1, sort_keys=True))
    print(f"wrote {len(entries)} recordings under {split_dir}")
    print(f"index: {index_path} sha256={ckpt.file_sha256(index_path)}")
    return 0


def _ckpt_path(root: str, stage: str) -> str:
    return os.path.join(root, "checkpoints", f"{stage}.pt")


def _require_stage(root: str, stage: str) -> str:
    path = _ckpt_path(root, stage)
    if not os.path.exists(path):
        raise DependencyError(
            f"missing checkpoint for stage {stage!r}: run `ctse train --stage {stage}` first"
        )
    return path


def cmd_train(args) -> int:
    cfg = config_mod.resolve_config(args.preset, args.config)
    root = _out_root(args)
    corpus = _load_corpus(cfg)
    t0 = time.perf_counter()

    if args.stage == "encoder":
        enc_cfg = config_mod.build_encoder_config(cfg)
        train_cfg = config_mod.build_encoder_train(cfg)
        if args.steps:
            train_cfg.steps = args.steps
        encoder, metrics, acc = train_encoder(corpus, enc_cfg, train_cfg)
        sha = encoder.save(_ckpt_path(root, "encoder"), extra={"holdout_accuracy": acc})
        _write(os.path.join(root, "metrics", "encoder_metrics.csv"),
               _metrics_csv(metrics, "step,loss,lr"))
        print(f"encoder: held-out accuracy {acc:.3f}, checkpoint sha256={sha[:12]}")

    elif args.stage == "pbsrnn_p1":
        encoder = SpeakerEncoder.load(_require_stage(root, "encoder"))
        p_cfg = config_mod.build_pbsrnn_config(cfg)
        train_cfg = config_mod.build_pbsrnn_train(cfg, "phase1")
        if args.steps:
            train_cfg.steps = args.steps
        extractor, metrics = train_phase1(corpus, encoder, p_cfg, train_cfg)
        sha = extractor.save(_ckpt_path(root, "pbsrnn_p1"))
        _write(os.path.join(root, "metrics", "pbsrnn_p1_metrics.csv"),
               _metrics_csv(metrics, "step,loss_freq,loss_time,lr"))
        print(f"pbsrnn phase 1 done, checkpoint sha256={sha[:12]}")

    elif args.stage == "pbsrnn_p2":
        encoder = SpeakerEncoder.load(_require_stage(root, "encoder"))
        p1_path = _require_stage(root, "pbsrnn_p1")
        extractor = TargetExtractor.load(p1_path)
        train_cfg = config_mod.build_pbsrnn_train(cfg, "phase2")
        if args.steps:
            train_cfg.steps = args.steps
        phase1_clip = config_mod.build_pbsrnn_train(cfg, "phase1").clip_s
        extractor, metrics = train_phase2(
            corpus, encoder, extractor, train_cfg,
            config_mod.build_phase2_config(cfg), phase1_clip,
        )
        parent = ckpt.file_sha256(p1_path)
        sha = extractor.save(_ckpt_path(root, "pbsrnn_p2"), extra={"parent_sha256": parent})
        _write(os.path.join(root, "metrics", "pbsrnn_p2_metrics.csv"),
               _metrics_csv(metrics, "step,loss_freq,loss_time,lr"))
        _write(os.path.join(root, "metrics", "pbsrnn_p2_eval.json"),
               json.dumps(_phase2_quick_eval(cfg, corpus, encoder, extractor), indent=1))
        print(f"pbsrnn phase 2 done (parent {parent[:12]}), checkpoint sha256={sha[:12]}")

    elif args.stage == "atsvad":
        encoder = SpeakerEncoder.load(_require_stage(root, "encoder"))
        a_cfg = config_mod.build_atsvad_config(cfg)
        train_cfg = config_mod.build_atsvad_train(cfg)
        if args.steps:
            train_cfg.steps = args.steps
        model, metrics, acc = train_atsvad(corpus, encoder, a_cfg, train_cfg)
        sha = model.save(_ckpt_path(root, "atsvad"), extra={"holdout_frame_accuracy": acc})
        _write(os.path.join(root, "metrics", "atsvad_metrics.csv"),
               _metrics_csv(metrics, "step,bce,lr"))
        print(f"atsvad: held-out frame accuracy {acc:.3f}, checkpoint sha256={sha[:12]}")

    else:
        raise ParameterError(f"unknown stage {args.stage!r}; choose from {STAGES}")

    print(f"stage {args.stage} finished in {time.perf_counter() - t0:.1f} s")
    return 0


def _phase2_quick_eval(cfg, corpus, encoder, extractor) -> Dict:
    """Interference leakage of the fine-tuned extractor on two short configs."""
    out = {}
    for name in ("0S", "OV20"):
        spec = TEST_CONFIGS[name].build_spec(seed=4242, duration_s=12.0)
        m = simulate(corpus, spec)
        s_hat, _ = extractor.extract(m.mixture, encoder.encode(m.enrollment))
        leak = int_leakage(m.mixture, s_hat, m.timeline, m.target_id)
        out[name] = None if leak is None else round(leak, 3)
    return out


def _load_models(root: str, need_extractor: bool, need_tsvad: bool):
    encoder = SpeakerEncoder.load(_require_stage(root, "encoder"))
    extractor = None
    tsvad = None
    hashes = {"encoder": ckpt.file_sha256(_ckpt_path(root, "encoder"))}
    if need_extractor:
        stage = "pbsrnn_p2" if os.path.exists(_ckpt_path(root, "pbsrnn_p2")) else "pbsrnn_p1"
        path = _require_stage(root, stage)
        extractor = TargetExtractor.load(path)
        hashes[stage] = ckpt.file_sha256(path)
    if need_tsvad:
        path = _require_stage(root, "atsvad")
        tsvad = ATSVADModel.load(path, encoder)
        hashes["atsvad"] = ckpt.file_sha256(path)
    return encoder, extractor, tsvad, hashes


def _dataset_manifests(datasets_dir: str):
    if not os.path.isdir(datasets_dir):
        raise ParameterError(f"dataset directory not found: {datasets_dir}")
    found = []
    for name in sorted(os.listdir(datasets_dir)):
        config_dir = os.path.join(datasets_dir, name)
        if not os.path.isdir(config_dir):
            continue
        for rec in sorted(os.listdir(config_dir)):
            rec_dir = os.path.join(config_dir, rec)
            if os.path.exists(os.path.join(rec_dir, "manifest.json")):
                found.append((name, rec, rec_dir))
    if not found:
        raise ParameterError(f"no recordings under {datasets_dir}")
    return found


def cmd_eval(args) -> int:
    cfg = config_mod.resolve_config(args.preset, args.config)
    root = _out_root(args)
    datasets_dir = args.datasets or os.path.join(root, "datasets", "test")
    modes = args.modes or cfg["eval"]["modes"]
    for mode in modes:
        if mode not in EVAL_MODES:
            raise ParameterError(f"unknown eval mode {mode!r}; choose from {EVAL_MODES}")
    need_extractor = any(m != "tsvad_only" for m in modes)
    need_tsvad = any(m != "pbsrnn_only" for m in modes)
    encoder, extractor, tsvad, hashes = _load_models(root, need_extractor, need_tsvad)
    fusion_cfg = config_mod.build_fusion_config(cfg)

    rows = []
    for name, rec, rec_dir in _dataset_manifests(datasets_dir):
        manifest = MixtureManifest.load(rec_dir)
        rows.extend(
            evaluate_manifest(
                manifest, encoder, extractor, tsvad, fusion_cfg, modes,
                config_name=name, recording_id=rec,
            )
        )

    eval_dir = os.path.join(root, "eval")
    _write(os.path.join(eval_dir, "scores.csv"),
           report_mod.rows_to_csv(rows, ["config", "recording", "mode"] + report_mod.SCORE_FIELDS[2:]))
    agg = aggregate_rows(rows)
    _write(os.path.join(eval_dir, "scores_agg.csv"), report_mod.rows_to_csv(agg))
    _write(os.path.join(eval_dir, "report.md"),
           report_mod.render_scores_markdown(agg, title="Desk-scale evaluation"))
    _write(os.path.join(eval_dir, "overlap_sweep.csv"), report_mod.render_overlap_sweep_csv(agg))
    meta = {
        "checkpoints_sha256": hashes,
        "fusion": {"cascade1_alpha": fusion_cfg.cascade1_alpha,
                   "crossfade_s": fusion_cfg.crossfade_s,
                   "span_pad_s": fusion_cfg.span_pad_s},
        "tsvad_threshold": tsvad.config.threshold if tsvad else None,
        "modes": list(modes),
        "datasets": os.path.abspath(datasets_dir),
        "seed": cfg.get("seed"),
    }
    _write(os.path.join(eval_dir, "run_meta.json"), json.dumps(meta, indent=1, sort_keys=True))
    print(f"scored {len(rows)} rows -> {eval_dir}/scores.csv, report.md")
    return 0


def cmd_ablate_window(args) -> int:
    cfg = config_mod.resolve_config(args.preset, args.config)
    root = _out_root(args)
    corpus = _load_corpus(cfg)
    encoder = SpeakerEncoder.load(_require_stage(root, "encoder"))
    archs = [("transformer", w) for w in args.windows]
    if args.with_blstm:
        archs.append(("blstm", 1.5))

    eval_specs = []
    for i in range(args.n_recordings):
        eval_specs.append(TEST_CONFIGS["OV20"].build_spec(seed=7000 + i, duration_s=args.duration))

    rows = []
    for arch, win in archs:
        a_cfg = config_mod.build_atsvad_config(cfg, win_s=win, arch=arch)
        train_cfg = config_mod.build_atsvad_train(cfg, seed=777)
        if args.steps:
            train_cfg.steps = args.steps
        model, _, acc = train_atsvad(corpus, encoder, a_cfg, train_cfg)
        ders, jers, ints = [], [], []
        for spec in eval_specs:
            manifest = simulate(corpus, spec)
            row = evaluate_manifest(
                manifest, encoder, None, model,
                config_mod.build_fusion_config(cfg), ["tsvad_only"],
            )[0]
            ders.append(row["der"])
            jers.append(row["jer"])
            if row["int_db"] is not None:
                ints.append(row["int_db"])
        rows.append(
            {
                "win_s": win,
                "arch": arch,
                "der": float(np.mean(ders)),
                "jer": float(np.mean(jers)),
                "int_db": float(np.mean(ints)) if ints else None,
                "holdout_frame_accuracy": acc,
            }
        )
        print(f"ablation {arch} win={win}s done (frame acc {acc:.3f})")

    eval_dir = os.path.join(root, "eval")
    _write(os.path.join(eval_dir, "ablation.csv"),
           report_mod.rows_to_csv(rows, report_mod.ABLATION_FIELDS))
    _write(os.path.join(eval_dir, "ablation.md"), report_mod.render_ablation_markdown(rows))
    print(f"wrote {eval_dir}/ablation.csv and ablation.md")
    return 0


def cmd_report(args) -> int:
    root = _out_root(args)
    scores_path = os.path.join(root, "eval", "scores_agg.csv")
    if not os.path.exists(scores_path):
        raise ParameterError(f"no aggregate scores at {scores_path}; run `ctse eval` first")
    with open(scores_path) as f:
        agg = report_mod.csv_to_rows(f.read())
    _write(os.path.join(root, "eval", "report.md"),
           report_mod.render_scores_markdown(agg, title="Desk-scale evaluation"))
    print(f"re-rendered {root}/eval/report.md")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctse",
        description="Continuous target-speaker extraction toolkit (desk scale)",
    )
    parser.add_argument("--preset", choices=["toy", "paper"], default=None,
                        help="built-in configuration preset (default: toy)")
    parser.add_argument("--config", default=None, help="path to a JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the base seed")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers for simulation")
    parser.add_argument("--out", default=None,
                        help="output root (default: $CTSE_OUTPUT_ROOT or ./runs)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset split")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--n-recordings", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train one pipeline stage")
    p.add_argument("--stage", choices=STAGES, required=True)
    p.add_argument("--steps", type=int, default=None, help="override training steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score fusion modes over a dataset")
    p.add_argument("--datasets", default=None, help="dataset dir (default out/datasets/test)")
    p.add_argument("--modes", nargs="*", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate-window", help="window-length ablation of the activity model")
    p.add_argument("--windows", nargs="*", type=float, default=[0.75, 1.5, 3.0])
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--n-recordings", type=int, default=2)
    p.add_argument("--duration", type=float, default=24.0)
    p.add_argument("--with-blstm", action="store_true")
    p.set_defaults(func=cmd_ablate_window)

    p = sub.add_parser("report", help="re-render markdown tables from score CSVs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
