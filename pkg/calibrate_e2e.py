"""End-to-end toy calibration mirroring the acceptance fixture. Scratch file."""

import json
import time

import numpy as np

from ctse.atsvad import ATSVADConfig, ATSVADTrainConfig, train_atsvad
from ctse.encoder import EncoderConfig, EncoderTrainConfig, train_encoder
from ctse.evaluate import evaluate_manifest
from ctse.fusion import FusionConfig
from ctse.metrics import si_snr, int_leakage
from ctse.pbsrnn import PBSRNNConfig, PBSRNNTrainConfig, Phase2Config, train_phase1, train_phase2
from ctse.simulate import TEST_CONFIGS, sample_full_overlap, simulate
from ctse.toy_corpus import make_toy_corpus, three_way_split

T0 = time.time()
stamp = lambda msg: print(f"[{time.time()-T0:7.1f}s] {msg}", flush=True)

corpus = make_toy_corpus(seed=77)
train_c, held_mix_c, held_spk_c = three_way_split(corpus)
stamp(f"corpus ready: train={len(train_c.speakers())} heldmix={len(held_mix_c.speakers())} heldspk={len(held_spk_c.speakers())}")

encoder, enc_metrics, enc_acc = train_encoder(
    train_c, EncoderConfig(), EncoderTrainConfig(steps=360, batch_size=16, seed=11))
stamp(f"encoder acc={enc_acc:.3f}")

p_cfg = PBSRNNConfig()
p1_tc = PBSRNNTrainConfig(steps=500, batch_size=2, clip_s=2.4, seed=21)
ext1, m1 = train_phase1(train_c, encoder, p_cfg, p1_tc)
stamp(f"p1 done loss tail {m1[-1]}")

rng = np.random.default_rng(5)
deltas = []
for _ in range(16):
    m = sample_full_overlap(held_mix_c, rng, duration_s=2.4)
    e = encoder.encode(m.enrollment)
    s_hat, _ = ext1.extract(m.mixture, e)
    deltas.append(si_snr(m.stems[m.target_id], s_hat) - si_snr(m.stems[m.target_id], m.mixture))
deltas = np.array(deltas)
stamp(f"p1 heldout-utt delta SI-SNR mean={deltas.mean():.2f} min={deltas.min():.2f}")

p2_tc = PBSRNNTrainConfig(steps=160, batch_size=2, clip_s=4.8, seed=22)
ext2, m2 = train_phase2(train_c, encoder, ext1, p2_tc, Phase2Config(n_recordings=16, recording_s=16.0, seed=100), p1_tc.clip_s)
stamp(f"p2 done loss tail {m2[-1]}")

# INT comparison p1 vs p2 on same toy seeds
ints = {"p1": [], "p2": []}
for i in range(4):
    spec = TEST_CONFIGS["0S"].build_spec(seed=3100 + i, duration_s=16.0)
    m = simulate(held_mix_c, spec)
    e = encoder.encode(m.enrollment)
    for name, ext in (("p1", ext1), ("p2", ext2)):
        s_hat, _ = ext.extract(m.mixture, e)
        ints[name].append(int_leakage(m.mixture, s_hat, m.timeline, m.target_id))
stamp(f"INT p1={np.mean(ints['p1']):.2f} p2={np.mean(ints['p2']):.2f} (per-rec p1={[round(x,1) for x in ints['p1']]}, p2={[round(x,1) for x in ints['p2']]})")

a_cfg = ATSVADConfig()
a_tc = ATSVADTrainConfig(steps=900, batch_size=4, lr=1e-3, lr_halve_every=400,
                         n_recordings=96, recording_s=16.0, holdout_recordings=12, seed=31)
tsvad, am, a_acc = train_atsvad(train_c, encoder, a_cfg, a_tc)
stamp(f"atsvad acc={a_acc:.3f}")

# probability calibration on fresh held-out-utterance recordings
from ctse.timeline import timeline_to_track
pos_p, neg_p = [], []
for i in range(4):
    spec = TEST_CONFIGS["OV20"].build_spec(seed=8800 + i, duration_s=20.0)
    m = simulate(held_mix_c, spec)
    probs = tsvad.predict(m.mixture, encoder.encode(m.enrollment)).values
    labels = timeline_to_track(m.timeline, m.target_id, 0.25, 1.5).values
    pos_p.extend(probs[labels == 1]); neg_p.extend(probs[labels == 0])
pos_p, neg_p = np.array(pos_p), np.array(neg_p)
stamp(f"probs pos q10/50={np.quantile(pos_p, [0.1, 0.5]).round(4)} "
      f"neg q50/90={np.quantile(neg_p, [0.5, 0.9]).round(4)} "
      f"neg<0.01: {(neg_p < 0.01).mean():.2f} neg<0.025: {(neg_p < 0.025).mean():.2f}")

train_elapsed = time.time() - T0
stamp(f"TOTAL TRAIN TIME {train_elapsed:.0f}s")

fusion_cfg = FusionConfig()
# criterion 9: 5 seeds, OV20, 20 s
modes = ["pbsrnn_only", "cascade1", "cascade2", "parallel"]
per_seed = []
for seed in range(5):
    spec = TEST_CONFIGS["OV20"].build_spec(seed=5200 + seed, duration_s=20.0)
    m = simulate(held_mix_c, spec)
    rows = evaluate_manifest(m, encoder, ext2, tsvad, fusion_cfg, modes, config_name="OV20", recording_id=f"s{seed}")
    d = {r["mode"]: r for r in rows}
    per_seed.append(d)
    stamp("seed %d: " % seed + " | ".join(
        f"{md}: der={d[md]['der']:.3f} int={d[md]['int_db']} si={d[md]['si_snr_db'] and round(d[md]['si_snr_db'],1)}"
        for md in modes))

c1_lt_pb = sum(1 for d in per_seed if d["cascade1"]["der"] < d["pbsrnn_only"]["der"])
c1_int_gt = sum(1 for d in per_seed if (d["cascade1"]["int_db"] or -99) > (d["pbsrnn_only"]["int_db"] or -99))
c2_gt_c1 = sum(1 for d in per_seed if d["cascade2"]["der"] > d["cascade1"]["der"])
stamp(f"criterion9 majorities: c1<pb DER {c1_lt_pb}/5; c1>pb INT {c1_int_gt}/5; c2>c1 DER {c2_gt_c1}/5")

# criterion 10: tsvad_only DER over overlap sweep, 5 seeds
sweep = {}
for name in ("0S", "OV10", "OV20", "OV30", "OV40"):
    ders = []
    for seed in range(5):
        spec = TEST_CONFIGS[name].build_spec(seed=6300 + seed, duration_s=20.0)
        m = simulate(held_mix_c, spec)
        rows = evaluate_manifest(m, encoder, None, tsvad, fusion_cfg, ["tsvad_only"], config_name=name)
        ders.append(rows[0]["der"])
    sweep[name] = (float(np.median(ders)), [round(x, 3) for x in sorted(ders)])
    stamp(f"sweep {name}: median={sweep[name][0]:.3f} ders={sweep[name][1]}")

stamp(f"GRAND TOTAL {time.time()-T0:.0f}s")
with open("/tmp/calib_result.json", "w") as f:
    json.dump({"enc_acc": enc_acc, "delta": deltas.tolist(), "a_acc": a_acc,
               "ints": {k: list(map(float, v)) for k, v in ints.items()},
               "sweep": {k: v[0] for k, v in sweep.items()},
               "c9": [c1_lt_pb, c1_int_gt, c2_gt_c1],
               "train_s": train_elapsed}, f, indent=1)
