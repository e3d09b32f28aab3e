"""Attention-based target-speaker voice activity detection.

The mixture is cut into sliding windows, each window is embedded by the
speaker encoder and concatenated with the enrollment embedding, and a small
conv + transformer stack emits one target-presence probability per window.
Post-processing thresholds the probabilities and smooths the labels with
binary dilation followed by erosion.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from . import ckpt
from .audio import AudioSignal
from .dsp import frame_windows
from .encoder import SpeakerEmbedding, SpeakerEncoder
from .errors import ParameterError, TrainingDivergedError
from .simulate import MixSpec, MixtureManifest, SourceCorpus, simulate
from .timeline import ActivityTrack, timeline_to_track

DEFAULT_THRESHOLD = 0.025


@dataclass(frozen=True)
class ATSVADConfig:
    win_s: float = 1.5
    hop_s: float = 0.25
    n_transformer_blocks: int = 2
    n_heads: int = 4
    d_model: int = 64
    conv_channels: int = 96
    embed_dim: int = 256
    threshold: float = DEFAULT_THRESHOLD
    dilation_len: int = 3
    erosion_len: int = 3
    max_windows: int = 2048
    arch: str = "transformer"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ParameterError("d_model must be divisible by n_heads")
        if not 0.0 < self.threshold < 1.0:
            raise ParameterError("threshold must lie in (0, 1)")
        for name in ("dilation_len", "erosion_len"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ParameterError(f"{name} must be odd and >= 1")
        if self.arch not in ("transformer", "blstm"):
            raise ParameterError(f"unknown arch: {self.arch}")

    @staticmethod
    def tiny() -> "ATSVADConfig":
        """Frozen miniature used by gradient checks."""
        return ATSVADConfig(d_model=16, n_heads=2, conv_channels=16, embed_dim=8,
                            max_windows=64)


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Scaled dot-product attention. Rows of the softmax matrix sum to one, so
    every output row is a convex combination of the value rows."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ParameterError(
            f"non-conforming attention shapes: {tuple(q.shape)}, {tuple(k.shape)}, {tuple(v.shape)}"
        )
    d_k = q.shape[-1]
    scores = q @ k.transpose(-2, -1) / math.sqrt(d_k)
    return torch.softmax(scores, dim=-1) @ v


def multi_head(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    heads: int,
    w_q: Sequence[torch.Tensor],
    w_k: Sequence[torch.Tensor],
    w_v: Sequence[torch.Tensor],
    w_o: torch.Tensor,
) -> torch.Tensor:
    """Multi-head attention from explicit per-head projection matrices."""
    if not (len(w_q) == len(w_k) == len(w_v) == heads):
        raise ParameterError(f"expected {heads} projection matrices per input")
    outs = [
        attention(q @ w_q[i], k @ w_k[i], v @ w_v[i])
        for i in range(heads)
    ]
    return torch.cat(outs, dim=-1) @ w_o


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads != 0:
            raise ParameterError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        scale = 1.0 / math.sqrt(d_model)
        self.w_q = nn.Parameter(torch.randn(d_model, d_model) * scale)
        self.w_k = nn.Parameter(torch.randn(d_model, d_model) * scale)
        self.w_v = nn.Parameter(torch.randn(d_model, d_model) * scale)
        self.w_o = nn.Parameter(torch.randn(d_model, d_model) * scale)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        split = lambda w: [w[:, i * self.d_head : (i + 1) * self.d_head] for i in range(self.n_heads)]
        return multi_head(x, x, x, self.n_heads, split(self.w_q), split(self.w_k),
                          split(self.w_v), self.w_o)


class _FeedForward(nn.Module):
    """Recurrent feed-forward: GRU over the window sequence, then a linear map."""

    def __init__(self, d_model: int):
        super().__init__()
        self.gru = nn.GRU(d_model, d_model, batch_first=True)
        self.proj = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(self.gru(x)[0])


class TransformerBlock(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.attn = MultiHeadSelfAttention(d_model, n_heads)
        self.ffn = _FeedForward(d_model)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.ffn(x))


class ATSVADNet(nn.Module):
    """Conv feature fusion + positional embedding + transformer stack + sigmoid head."""

    def __init__(self, config: ATSVADConfig):
        super().__init__()
        self.config = config
        in_dim = 2 * config.embed_dim
        self.conv1 = nn.Conv1d(in_dim, config.conv_channels, kernel_size=3, padding=1)
        self.act1 = nn.PReLU()
        self.conv2 = nn.Conv1d(config.conv_channels, config.d_model, kernel_size=3, padding=1)
        self.act2 = nn.PReLU()
        self.positions = nn.Parameter(torch.randn(config.max_windows, config.d_model) * 0.02)
        if config.arch == "transformer":
            self.blocks = nn.ModuleList(
                TransformerBlock(config.d_model, config.n_heads)
                for _ in range(config.n_transformer_blocks)
            )
            self.blstm = None
            self.blstm_proj = None
        else:
            self.blocks = nn.ModuleList()
            self.blstm = nn.LSTM(config.d_model, config.d_model, batch_first=True,
                                 bidirectional=True)
            self.blstm_proj = nn.Linear(2 * config.d_model, config.d_model)
        self.head = nn.Linear(config.d_model, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: [B, T, 2*embed_dim] -> logits [B, T]
        t = x.shape[1]
        if t > self.config.max_windows:
            raise ParameterError(
                f"{t} windows exceed max_windows={self.config.max_windows}"
            )
        h = self.act2(self.conv2(self.act1(self.conv1(x.transpose(1, 2))))).transpose(1, 2)
        h = h + self.positions[:t]
        if self.blstm is None:
            for block in self.blocks:
                h = block(h)
        else:
            h = h + self.blstm_proj(self.blstm(h)[0])
        return self.head(h).squeeze(-1)


def threshold(track: ActivityTrack, alpha: float) -> ActivityTrack:
    """Binarize probabilities: label 1 iff p >= alpha (the boundary counts as active)."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha must lie in (0, 1)")
    if track.kind != "probability":
        raise ParameterError("threshold() expects a probability track")
    labels = (track.values >= alpha).astype(np.float64)
    return ActivityTrack(labels, track.frame_hop_s, track.frame_win_s, kind="label")


def _check_kernel(length: int) -> int:
    if length < 1 or length % 2 == 0:
        raise ParameterError(f"morphology kernel length must be odd and >= 1, got {length}")
    return length // 2


def binary_dilation_1d(x: np.ndarray, length: int) -> np.ndarray:
    """Centered binary dilation; positions beyond the ends count as inactive."""
    r = _check_kernel(length)
    x = np.asarray(x).astype(bool)
    if r == 0 or x.size == 0:
        return x.copy()
    padded = np.pad(x, r, constant_values=False)
    windows = np.lib.stride_tricks.sliding_window_view(padded, length)
    return windows.any(axis=-1)


def binary_erosion_1d(x: np.ndarray, length: int) -> np.ndarray:
    """Centered binary erosion; positions beyond the ends count as inactive."""
    r = _check_kernel(length)
    x = np.asarray(x).astype(bool)
    if r == 0 or x.size == 0:
        return x.copy()
    padded = np.pad(x, r, constant_values=False)
    windows = np.lib.stride_tricks.sliding_window_view(padded, length)
    return windows.all(axis=-1)


def smooth(track: ActivityTrack, dilation_len: int = 3, erosion_len: int = 3) -> ActivityTrack:
    """Dilation followed by erosion on a label track (fills short gaps).

    Computed on the track embedded in an inactive surround, so the erosion
    sees the dilation's spill past the array ends instead of a hard border.
    """
    if track.kind != "label":
        raise ParameterError("smooth() expects a label track")
    rd = _check_kernel(dilation_len)
    re = _check_kernel(erosion_len)
    x = track.values.astype(bool)
    if x.size:
        m = rd + re + 1
        padded = np.pad(x, m, constant_values=False)
        closed = binary_erosion_1d(binary_dilation_1d(padded, dilation_len), erosion_len)
        x = closed[m:-m]
    return ActivityTrack(x.astype(np.float64), track.frame_hop_s, track.frame_win_s, kind="label")


class ATSVADModel:
    """Inference wrapper: recording + enrollment embedding -> probability track."""

    def __init__(
        self,
        net: ATSVADNet,
        encoder: SpeakerEncoder,
        config: Optional[ATSVADConfig] = None,
    ):
        self.net = net.eval()
        self.encoder = encoder
        self.config = config or net.config

    def window_embeddings(self, y: AudioSignal) -> np.ndarray:
        embs = self.encoder.encode_windows(y, self.config.win_s, self.config.hop_s)
        return np.stack([e.vector for e in embs])

    def predict_from_embeddings(self, window_embs: np.ndarray, e_s_vec: np.ndarray) -> np.ndarray:
        t = window_embs.shape[0]
        clue = np.tile(e_s_vec, (t, 1))
        x = torch.from_numpy(np.concatenate([window_embs, clue], axis=1)).float().unsqueeze(0)
        with torch.no_grad():
            logits = self.net(x)
        return torch.sigmoid(logits).squeeze(0).numpy().astype(np.float64)

    def predict(self, y: AudioSignal, e_s: SpeakerEmbedding) -> ActivityTrack:
        if y.duration_s < self.config.hop_s:
            raise ParameterError("recording shorter than one window hop")
        probs = self.predict_from_embeddings(self.window_embeddings(y), e_s.vector)
        return ActivityTrack(probs, self.config.hop_s, self.config.win_s, kind="probability")

    def save(self, path: str, extra: Optional[dict] = None) -> str:
        return ckpt.save_checkpoint(
            path, "atsvad", asdict(self.config), self.net.state_dict(), extra
        )

    @staticmethod
    def load(path: str, encoder: SpeakerEncoder) -> "ATSVADModel":
        payload = ckpt.load_checkpoint(path, "atsvad")
        config = ATSVADConfig(**payload["config"])
        net = ATSVADNet(config)
        net.load_state_dict(payload["state_dict"])
        return ATSVADModel(net, encoder, config)


@dataclass
class ATSVADTrainConfig:
    steps: int = 600
    batch_size: int = 4
    lr: float = 1e-4
    lr_halve_every: int = 10000
    n_recordings: int = 48
    recording_s: float = 24.0
    holdout_recordings: int = 8
    overlap_choices: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4)
    gap_range_s: Tuple[float, float] = (0.1, 0.8)
    n_speakers_range: Tuple[int, int] = (2, 3)
    seed: int = 0
    log_every: int = 50
    finetune_encoder: bool = False


def _prepare_examples(
    corpus: SourceCorpus,
    encoder: SpeakerEncoder,
    config: ATSVADConfig,
    train_cfg: ATSVADTrainConfig,
    model: ATSVADModel,
    rng: np.random.Generator,
):
    """One example per (recording, speaker): window embeddings are shared
    across the recording's speakers, each with its own enrollment and labels.

    Returns a list of recording groups so held-out splits never share windows
    with training examples.
    """
    groups = []
    for i in range(train_cfg.n_recordings):
        spec = MixSpec(
            n_speakers=int(rng.integers(train_cfg.n_speakers_range[0],
                                        train_cfg.n_speakers_range[1] + 1)),
            overlap_ratio_target=float(
                train_cfg.overlap_choices[int(rng.integers(len(train_cfg.overlap_choices)))]
            ),
            gap_range_s=train_cfg.gap_range_s,
            duration_s=train_cfg.recording_s,
            seed=train_cfg.seed * 1000 + i,
        )
        m = simulate(corpus, spec)
        window_embs = model.window_embeddings(m.mixture)
        used = {}
        for spk, idx in m.used_utterances:
            used.setdefault(spk, set()).add(idx)
        group = []
        for spk in sorted(m.stems):
            if spk == m.target_id:
                e_s = encoder.encode(m.enrollment).vector
            else:
                free = [
                    k for k in range(len(corpus.utterances[spk]))
                    if k not in used.get(spk, set())
                ]
                if not free:
                    continue
                pick = free[int(rng.integers(len(free)))]
                e_s = encoder.encode(corpus.utterances[spk][pick]).vector
            labels = timeline_to_track(m.timeline, spk, config.hop_s, config.win_s).values
            if labels.size != window_embs.shape[0]:
                raise RuntimeError("window count mismatch between labels and embeddings")
            group.append((window_embs, e_s, labels))
        groups.append(group)
    return groups


def train_atsvad(
    corpus: SourceCorpus,
    encoder: SpeakerEncoder,
    config: ATSVADConfig,
    train_cfg: ATSVADTrainConfig,
):
    """Train the window-level activity model with a binary cross-entropy loss.

    Ground-truth labels come from rasterizing the simulated timelines at the
    model's window geometry. Returns (ATSVADModel, metrics rows, held-out
    frame accuracy); metrics rows are (step, bce, lr).
    """
    rng = np.random.default_rng(train_cfg.seed)
    torch.manual_seed(train_cfg.seed)
    net = ATSVADNet(config)
    model = ATSVADModel(net, encoder, config)
    groups = _prepare_examples(corpus, encoder, config, train_cfg, model, rng)
    n_hold = min(train_cfg.holdout_recordings, len(groups) - 1)
    held = [ex for g in groups[:n_hold] for ex in g]
    train = [ex for g in groups[n_hold:] for ex in g]

    opt = torch.optim.RAdam(net.parameters(), lr=train_cfg.lr)
    bce = nn.BCEWithLogitsLoss()
    metrics = []
    net.train()
    for step in range(1, train_cfg.steps + 1):
        lr = train_cfg.lr * 0.5 ** (step // train_cfg.lr_halve_every)
        for group in opt.param_groups:
            group["lr"] = lr
        idx = rng.integers(len(train), size=train_cfg.batch_size)
        xs, ys = [], []
        for i in idx:
            window_embs, e_s, labels = train[int(i)]
            clue = np.tile(e_s, (window_embs.shape[0], 1))
            xs.append(np.concatenate([window_embs, clue], axis=1))
            ys.append(labels)
        x = torch.from_numpy(np.stack(xs)).float()
        y = torch.from_numpy(np.stack(ys)).float()
        loss = bce(net(x), y)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"activity loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % train_cfg.log_every == 0 or step == 1:
            metrics.append((step, float(loss.item()), lr))

    net.eval()
    correct = total = 0
    for window_embs, e_s, labels in held:
        probs = model.predict_from_embeddings(window_embs, e_s)
        pred = (probs >= 0.5).astype(np.float64)
        correct += int(np.sum(pred == labels))
        total += labels.size
    accuracy = correct / max(total, 1)
    return model, metrics, accuracy
