"""Personalized band-split masking network.

The complex spectrogram is cut into non-overlapping frequency bands, each
band is normalized and projected to a fixed feature size, the projected
speaker embedding is fused in once, interleaved BLSTM stages model time and
band axes, and a per-band MLP emits a complex time-frequency mask. Training
minimizes the sum of a frequency-domain and a time-domain mean absolute
error.
"""

import copy
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from . import ckpt
from .audio import SAMPLE_RATE, AudioSignal
from .dsp import STFT_HOP_S, STFT_WINDOW_S, ComplexSpectrogram
from .encoder import ConditionProjector, SpeakerEmbedding, SpeakerEncoder
from .errors import CheckpointError, ParameterError, TrainingDivergedError
from .simulate import MixSpec, MixtureManifest, SourceCorpus, sample_full_overlap, simulate

CHUNK_S = 8.192
CHUNK_OVERLAP_S = 1.024


@dataclass(frozen=True)
class BandScheme:
    """Ordered, disjoint (low_bin, high_bin) bands covering [0, n_freq) exactly."""

    bands: Tuple[Tuple[int, int], ...]
    per_band_feature_dim: int

    def __post_init__(self):
        if self.per_band_feature_dim < 1:
            raise ParameterError("per_band_feature_dim must be positive")
        if not self.bands:
            raise ParameterError("band scheme is empty")
        cursor = 0
        for lo, hi in self.bands:
            if lo != cursor or hi <= lo:
                raise ParameterError(
                    f"bands must be ordered, disjoint, and gap-free; got {self.bands}"
                )
            cursor = hi

    @property
    def n_freq(self) -> int:
        return self.bands[-1][1]

    @property
    def widths(self) -> List[int]:
        return [hi - lo for lo, hi in self.bands]

    @staticmethod
    def uniform(n_freq: int, n_bands: int, feature_dim: int) -> "BandScheme":
        if n_bands > n_freq:
            raise ParameterError(f"cannot split {n_freq} bins into {n_bands} bands")
        base = n_freq // n_bands
        extra = n_freq % n_bands
        bands = []
        cursor = 0
        for i in range(n_bands):
            width = base + (1 if i < extra else 0)
            bands.append((cursor, cursor + width))
            cursor += width
        return BandScheme(tuple(bands), feature_dim)


@dataclass(frozen=True)
class PBSRNNConfig:
    n_bands: int = 20
    feature_dim: int = 32
    n_interleaved_blocks: int = 2
    lstm_hidden: int = 32
    mlp_hidden: int = 64
    window_len_s: float = STFT_WINDOW_S
    hop_len_s: float = STFT_HOP_S
    embed_dim: int = 256

    def __post_init__(self):
        for name in ("n_bands", "feature_dim", "n_interleaved_blocks", "lstm_hidden", "mlp_hidden"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_len_s * SAMPLE_RATE))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_len_s * SAMPLE_RATE))

    @property
    def n_freq(self) -> int:
        return self.window_samples // 2 + 1

    def band_scheme(self) -> BandScheme:
        return BandScheme.uniform(self.n_freq, self.n_bands, self.feature_dim)

    @staticmethod
    def full() -> "PBSRNNConfig":
        return PBSRNNConfig(n_bands=20, feature_dim=128, n_interleaved_blocks=6,
                            lstm_hidden=256, mlp_hidden=512)

    @staticmethod
    def tiny() -> "PBSRNNConfig":
        """Frozen miniature used by gradient checks."""
        return PBSRNNConfig(n_bands=4, feature_dim=8, n_interleaved_blocks=1,
                            lstm_hidden=8, mlp_hidden=16,
                            window_len_s=0.016, hop_len_s=0.004, embed_dim=16)


def stft_torch(x: torch.Tensor, win_n: int, hop_n: int) -> torch.Tensor:
    """Batched torch STFT matching dsp.stft (center reflect pad, periodic Hann)."""
    window = torch.hann_window(win_n, periodic=True, dtype=x.dtype, device=x.device)
    return torch.stft(
        x, n_fft=win_n, hop_length=hop_n, win_length=win_n, window=window,
        center=True, pad_mode="reflect", return_complex=True,
    )


def istft_torch(spec: torch.Tensor, win_n: int, hop_n: int, length: int) -> torch.Tensor:
    window = torch.hann_window(
        win_n, periodic=True, dtype=torch.real(spec).dtype, device=spec.device
    )
    return torch.istft(
        spec, n_fft=win_n, hop_length=hop_n, win_length=win_n, window=window,
        center=True, length=length,
    )


class BandSplit(nn.Module):
    """Per-band LayerNorm + linear projection of stacked real/imag bins."""

    def __init__(self, scheme: BandScheme):
        super().__init__()
        self.scheme = scheme
        self.norms = nn.ModuleList([nn.LayerNorm(2 * w) for w in scheme.widths])
        self.projs = nn.ModuleList(
            [nn.Linear(2 * w, scheme.per_band_feature_dim) for w in scheme.widths]
        )

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        # spec: complex [B, F, T] -> features [B, n_bands, T, D]
        if spec.shape[1] != self.scheme.n_freq:
            raise ParameterError(
                f"spectrogram has {spec.shape[1]} bins, scheme covers {self.scheme.n_freq}"
            )
        feats = []
        for (lo, hi), norm, proj in zip(self.scheme.bands, self.norms, self.projs):
            band = spec[:, lo:hi]
            x = torch.cat([band.real, band.imag], dim=1).transpose(1, 2)  # [B, T, 2w]
            feats.append(proj(norm(x)))
        return torch.stack(feats, dim=1)


class _RNNStage(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.rnn = nn.LSTM(dim, hidden, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.proj(self.rnn(self.norm(x))[0])


class InterleavedBlock(nn.Module):
    """BLSTM over time within each band, then BLSTM over bands within each frame."""

    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.time_stage = _RNNStage(dim, hidden)
        self.band_stage = _RNNStage(dim, hidden)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        b, nb, t, d = feats.shape
        x = self.time_stage(feats.reshape(b * nb, t, d)).reshape(b, nb, t, d)
        y = x.permute(0, 2, 1, 3).reshape(b * t, nb, d)
        y = self.band_stage(y).reshape(b, t, nb, d).permute(0, 2, 1, 3)
        return y


class MaskHead(nn.Module):
    """Per-band LayerNorm + MLP emitting real/imag mask values."""

    def __init__(self, scheme: BandScheme, mlp_hidden: int):
        super().__init__()
        self.scheme = scheme
        d = scheme.per_band_feature_dim
        self.norms = nn.ModuleList([nn.LayerNorm(d) for _ in scheme.widths])
        self.mlps = nn.ModuleList(
            [
                nn.Sequential(nn.Linear(d, mlp_hidden), nn.Tanh(), nn.Linear(mlp_hidden, 2 * w))
                for w in scheme.widths
            ]
        )

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        outs = []
        for i, ((lo, hi), norm, mlp) in enumerate(zip(self.scheme.bands, self.norms, self.mlps)):
            w = hi - lo
            out = mlp(norm(feats[:, i]))  # [B, T, 2w]
            outs.append(torch.complex(out[..., :w], out[..., w:]).transpose(1, 2))
        return torch.cat(outs, dim=1)  # [B, F, T]


class PBSRNN(nn.Module):
    """Complex mask estimator conditioned on a target-speaker embedding."""

    def __init__(self, config: PBSRNNConfig):
        super().__init__()
        self.config = config
        scheme = config.band_scheme()
        self.band_split = BandSplit(scheme)
        self.conditioner = ConditionProjector(config.embed_dim, config.feature_dim)
        self.fuse = nn.Linear(2 * config.feature_dim, config.feature_dim)
        self.blocks = nn.ModuleList(
            InterleavedBlock(config.feature_dim, config.lstm_hidden)
            for _ in range(config.n_interleaved_blocks)
        )
        self.mask_head = MaskHead(scheme, config.mlp_hidden)

    def forward(self, spec: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        feats = self.band_split(spec)
        b, nb, t, d = feats.shape
        cond = self.conditioner(emb)[:, None, None, :].expand(b, nb, t, d)
        feats = self.fuse(torch.cat([feats, cond], dim=-1))
        for block in self.blocks:
            feats = block(feats)
        return self.mask_head(feats)


def extraction_loss_torch(
    s_hat: torch.Tensor, s_ref: torch.Tensor, win_n: int, hop_n: int, length: int
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, frequency term, time term) of the masking objective."""
    if s_hat.shape != s_ref.shape:
        raise ParameterError(f"shape mismatch: {tuple(s_hat.shape)} vs {tuple(s_ref.shape)}")
    freq = (s_hat.real - s_ref.real).abs().mean() + (s_hat.imag - s_ref.imag).abs().mean()
    t_hat = istft_torch(s_hat, win_n, hop_n, length)
    t_ref = istft_torch(s_ref, win_n, hop_n, length)
    time = (t_hat - t_ref).abs().mean()
    return freq + time, freq, time


def loss(s_hat_spec: ComplexSpectrogram, s_ref_spec: ComplexSpectrogram) -> float:
    """Masking objective between two spectrograms of the same geometry.

    Mean absolute error over real and imaginary parts plus mean absolute error
    between the two inverse transforms. Symmetric and non-negative.
    """
    if s_hat_spec.bins.shape != s_ref_spec.bins.shape:
        raise ParameterError(
            f"shape mismatch: {s_hat_spec.bins.shape} vs {s_ref_spec.bins.shape}"
        )
    if (
        s_hat_spec.window_samples != s_ref_spec.window_samples
        or s_hat_spec.hop_samples != s_ref_spec.hop_samples
        or s_hat_spec.n_samples != s_ref_spec.n_samples
    ):
        raise ParameterError("spectrogram metadata differs between the two inputs")
    a = torch.from_numpy(s_hat_spec.bins)
    b = torch.from_numpy(s_ref_spec.bins)
    with torch.no_grad():
        total, _, _ = extraction_loss_torch(
            a.unsqueeze(0), b.unsqueeze(0),
            s_hat_spec.window_samples, s_hat_spec.hop_samples, s_hat_spec.n_samples,
        )
    return float(total.item())


@dataclass(frozen=True)
class MaskEstimate:
    """Complex F x T mask aligned with the input spectrogram."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2 or not np.iscomplexobj(m):
            raise ParameterError("mask must be a 2-D complex matrix")
        if m.size and not np.all(np.isfinite(m)):
            raise ParameterError("mask contains NaN or inf")
        object.__setattr__(self, "mask", m.astype(np.complex128))


def _embedding_tensor(e_s, embed_dim: int) -> torch.Tensor:
    vec = e_s.vector if isinstance(e_s, SpeakerEmbedding) else np.asarray(e_s, dtype=np.float64)
    if vec.size != embed_dim:
        raise ParameterError(f"embedding dim {vec.size} != model embed_dim {embed_dim}")
    return torch.from_numpy(vec).float().unsqueeze(0)


class TargetExtractor:
    """Inference wrapper: waveform + enrollment embedding -> target estimate.

    Long inputs run in overlapping chunks that are linearly cross-faded, so
    memory stays flat for two-minute recordings.
    """

    def __init__(self, model: PBSRNN, config: Optional[PBSRNNConfig] = None):
        self.model = model.eval()
        self.config = config or model.config

    def _mask_for(self, samples: np.ndarray, emb: torch.Tensor) -> np.ndarray:
        spec64 = stft_torch(
            torch.from_numpy(samples).unsqueeze(0),
            self.config.window_samples, self.config.hop_samples,
        )
        with torch.no_grad():
            mask = self.model(spec64.to(torch.complex64), emb)
        return mask.squeeze(0).numpy().astype(np.complex128)

    def extract(
        self, y: AudioSignal, e_s, t_offset_s: float = 0.0
    ) -> Tuple[AudioSignal, MaskEstimate]:
        """Estimate the target signal. Output length equals input length.

        t_offset_s carries the global position of `y` when a longer recording
        is processed span-wise; the network itself does not use it.
        """
        del t_offset_s
        cfg = self.config
        win_n, hop_n = cfg.window_samples, cfg.hop_samples
        n = len(y)
        if n < win_n:
            raise ParameterError(f"input of {n} samples is shorter than one {win_n}-sample window")
        emb = _embedding_tensor(e_s, cfg.embed_dim)
        chunk_n = int(round(CHUNK_S * SAMPLE_RATE))
        if n <= chunk_n:
            starts = [0]
        else:
            step = chunk_n - int(round(CHUNK_OVERLAP_S * SAMPLE_RATE))
            starts = [0]
            while starts[-1] + chunk_n < n:
                nxt = starts[-1] + step
                if nxt + chunk_n >= n:
                    nxt = -(-(n - chunk_n) // hop_n) * hop_n
                if nxt <= starts[-1]:
                    break
                starts.append(nxt)

        n_frames_total = n // hop_n + 1
        full_mask = np.zeros((cfg.n_freq, n_frames_total), dtype=np.complex128)
        out = np.zeros(n)
        prev_end = 0
        mask_fill = 0
        for idx, start in enumerate(starts):
            end = min(start + chunk_n, n) if idx < len(starts) - 1 else n
            samples = y.samples[start:end]
            mask = self._mask_for(samples, emb)
            spec = stft_torch(
                torch.from_numpy(samples).unsqueeze(0), win_n, hop_n
            ).squeeze(0).numpy()
            piece = istft_torch(
                torch.from_numpy(spec * mask).unsqueeze(0), win_n, hop_n, samples.size
            ).squeeze(0).numpy()
            if idx == 0:
                out[start:end] = piece
            else:
                ov = prev_end - start
                ramp = np.linspace(0.0, 1.0, ov, endpoint=False)
                out[start:prev_end] = out[start:prev_end] * (1.0 - ramp) + piece[:ov] * ramp
                out[prev_end:end] = piece[ov:]
            frame0 = start // hop_n
            mid = frame0 if idx == 0 else (start + (prev_end - start) // 2) // hop_n
            hi = min(frame0 + mask.shape[1], n_frames_total)
            lo = max(mid, mask_fill)
            if hi > lo:
                full_mask[:, lo:hi] = mask[:, lo - frame0 : hi - frame0]
                mask_fill = hi
            prev_end = end
        return AudioSignal(out, y.sample_rate), MaskEstimate(full_mask)

    def save(self, path: str, extra: Optional[dict] = None) -> str:
        return ckpt.save_checkpoint(
            path, "pbsrnn", asdict(self.config), self.model.state_dict(), extra
        )

    @staticmethod
    def load(path: str) -> "TargetExtractor":
        payload = ckpt.load_checkpoint(path, "pbsrnn")
        config = PBSRNNConfig(**payload["config"])
        model = PBSRNN(config)
        model.load_state_dict(payload["state_dict"])
        return TargetExtractor(model, config)


@dataclass
class PBSRNNTrainConfig:
    steps: int = 500
    batch_size: int = 2
    clip_s: float = 2.4
    lr: float = 1e-3
    lr_decay: float = 0.99
    lr_floor: float = 1e-5
    steps_per_epoch: int = 50
    snr_db_range: Tuple[float, float] = (5.0, 20.0)
    seed: int = 0
    log_every: int = 25


def _speaker_embedding_cache(encoder: SpeakerEncoder, corpus: SourceCorpus) -> Dict[str, np.ndarray]:
    return {
        spk: np.stack([encoder.encode(u).vector for u in corpus.utterances[spk]])
        for spk in corpus.speakers()
    }


def _lr_at(train_cfg: PBSRNNTrainConfig, step: int) -> float:
    epoch = step // train_cfg.steps_per_epoch
    return max(train_cfg.lr_floor, train_cfg.lr * train_cfg.lr_decay**epoch)


def _train_steps(model, batches, train_cfg, metrics, win_n, hop_n, clip_n):
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    model.train()
    for step in range(1, train_cfg.steps + 1):
        lr = _lr_at(train_cfg, step)
        for group in opt.param_groups:
            group["lr"] = lr
        mix, ref, emb = batches(step)
        s_mix = stft_torch(mix, win_n, hop_n)
        mask = model(s_mix, emb)
        total, freq, time = extraction_loss_torch(
            s_mix * mask, stft_torch(ref, win_n, hop_n), win_n, hop_n, clip_n
        )
        if not torch.isfinite(total):
            raise TrainingDivergedError(f"extractor loss became non-finite at step {step}")
        opt.zero_grad()
        total.backward()
        opt.step()
        if step % train_cfg.log_every == 0 or step == 1:
            metrics.append((step, float(freq.item()), float(time.item()), lr))


def train_phase1(
    corpus: SourceCorpus,
    encoder: SpeakerEncoder,
    config: PBSRNNConfig,
    train_cfg: PBSRNNTrainConfig,
):
    """Phase 1: fully-overlapped two-speaker mixtures, target always active.

    Returns (TargetExtractor, metrics rows). Metrics rows are
    (step, loss_freq, loss_time, lr).
    """
    rng = np.random.default_rng(train_cfg.seed)
    torch.manual_seed(train_cfg.seed)
    model = PBSRNN(config)
    emb_cache = _speaker_embedding_cache(encoder, corpus)
    clip_n = int(round(train_cfg.clip_s * SAMPLE_RATE))

    def batches(step):
        mixes, refs, embs = [], [], []
        for _ in range(train_cfg.batch_size):
            m = sample_full_overlap(
                corpus, rng, duration_s=train_cfg.clip_s, snr_db_range=train_cfg.snr_db_range
            )
            mixes.append(m.mixture.samples)
            refs.append(m.stems[m.target_id].samples)
            embs.append(emb_cache[m.target_id][m.enrollment_utterance[1]])
        return (
            torch.from_numpy(np.stack(mixes)).float(),
            torch.from_numpy(np.stack(refs)).float(),
            torch.from_numpy(np.stack(embs)).float(),
        )

    metrics: List[Tuple[int, float, float, float]] = []
    _train_steps(model, batches, train_cfg, metrics,
                 config.window_samples, config.hop_samples, clip_n)
    return TargetExtractor(model.eval(), config), metrics


@dataclass
class Phase2Config:
    n_recordings: int = 20
    recording_s: float = 16.0
    overlap_choices: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4)
    gap_range_s: Tuple[float, float] = (0.1, 0.8)
    n_speakers_range: Tuple[int, int] = (2, 3)
    seed: int = 100


def train_phase2(
    corpus: SourceCorpus,
    encoder: SpeakerEncoder,
    extractor: TargetExtractor,
    train_cfg: PBSRNNTrainConfig,
    phase2_cfg: Phase2Config,
    phase1_clip_s: float,
):
    """Phase 2: fine-tune on long-form simulated recordings with sparser
    overlap, longer context, and partially absent targets.

    The phase-2 crop length must be >= the phase-1 clip length and the overlap
    targets stay below full overlap by construction.
    """
    if train_cfg.clip_s < phase1_clip_s:
        raise ParameterError(
            f"phase-2 clip ({train_cfg.clip_s} s) must be >= phase-1 clip ({phase1_clip_s} s)"
        )
    if max(phase2_cfg.overlap_choices) > 0.4:
        raise ParameterError("phase-2 overlap targets must stay within the long-form range")
    rng = np.random.default_rng(train_cfg.seed)
    torch.manual_seed(train_cfg.seed)
    # Fine-tune a copy; the caller's phase-1 extractor stays usable as-is.
    model = copy.deepcopy(extractor.model)
    model.train()

    manifests = []
    for i in range(phase2_cfg.n_recordings):
        spec = MixSpec(
            n_speakers=int(rng.integers(phase2_cfg.n_speakers_range[0],
                                        phase2_cfg.n_speakers_range[1] + 1)),
            overlap_ratio_target=float(
                phase2_cfg.overlap_choices[int(rng.integers(len(phase2_cfg.overlap_choices)))]
            ),
            gap_range_s=phase2_cfg.gap_range_s,
            duration_s=phase2_cfg.recording_s,
            seed=phase2_cfg.seed * 1000 + i,
        )
        m = simulate(corpus, spec)
        manifests.append((m, encoder.encode(m.enrollment).vector))

    clip_n = int(round(train_cfg.clip_s * SAMPLE_RATE))

    def batches(step):
        mixes, refs, embs = [], [], []
        for _ in range(train_cfg.batch_size):
            m, emb = manifests[int(rng.integers(len(manifests)))]
            off = int(rng.integers(len(m.mixture) - clip_n + 1))
            mixes.append(m.mixture.samples[off : off + clip_n])
            refs.append(m.stems[m.target_id].samples[off : off + clip_n])
            embs.append(emb)
        return (
            torch.from_numpy(np.stack(mixes)).float(),
            torch.from_numpy(np.stack(refs)).float(),
            torch.from_numpy(np.stack(embs)).float(),
        )

    metrics: List[Tuple[int, float, float, float]] = []
    cfg = extractor.config
    _train_steps(model, batches, train_cfg, metrics,
                 cfg.window_samples, cfg.hop_samples, clip_n)
    return TargetExtractor(model.eval(), cfg), metrics
