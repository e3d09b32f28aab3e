"""Speaker embedding encoder: log-mel front end, small residual conv backbone,
temporal statistics pooling, and unit-normalized 256-d embeddings.

One shared encoder serves both enrollment clues and per-window mixture
embeddings. Training uses an additive-margin softmax over speaker identities.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import ckpt
from .audio import SAMPLE_RATE, AudioSignal
from .dsp import LOGMEL_HOP_S, LOGMEL_N_MELS, LOGMEL_WIN_S, frame_windows, logmel
from .errors import ParameterError, TrainingDivergedError
from .simulate import SourceCorpus

MIN_ENCODE_S = 0.1
WINDOW_LEN_S = 1.5
WINDOW_HOP_S = 0.25


@dataclass(frozen=True)
class SpeakerEmbedding:
    """Unit-norm speaker vector plus the source-window length it came from."""

    vector: np.ndarray
    source_window_s: float

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ParameterError("embedding contains NaN or inf")
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.size


@dataclass(frozen=True)
class EncoderConfig:
    n_mels: int = LOGMEL_N_MELS
    frame_win_s: float = LOGMEL_WIN_S
    frame_hop_s: float = LOGMEL_HOP_S
    embed_dim: int = 256
    backbone_scale: str = "toy"

    def __post_init__(self):
        if self.n_mels < 1 or self.embed_dim < 1:
            raise ParameterError("encoder dims must be positive")
        if self.backbone_scale not in ("toy", "small"):
            raise ParameterError(f"unknown backbone_scale: {self.backbone_scale}")

    @property
    def channels(self) -> Tuple[int, ...]:
        return (16, 32, 32) if self.backbone_scale == "toy" else (32, 64, 128)


class _ConvBlock(nn.Module):
    def __init__(self, c_in, c_out):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1)
        self.bn = nn.BatchNorm2d(c_out)
        self.res = nn.Conv2d(c_out, c_out, kernel_size=3, stride=1, padding=1)

    def forward(self, x):
        x = F.relu(self.bn(self.conv(x)))
        return F.relu(x + self.res(x))


class SpeakerEncoderNet(nn.Module):
    """Conv stack over log-mel, stats pooling over time, linear to the embedding."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        chans = config.channels
        blocks = []
        c_prev = 1
        for c in chans:
            blocks.append(_ConvBlock(c_prev, c))
            c_prev = c
        self.blocks = nn.Sequential(*blocks)
        n_freq_out = config.n_mels
        for _ in chans:
            n_freq_out = (n_freq_out + 1) // 2
        self.proj = nn.Linear(2 * chans[-1] * n_freq_out, config.embed_dim)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        # feats: [B, 1, n_mels, T]
        x = self.blocks(feats)
        b, c, f, t = x.shape
        x = x.reshape(b, c * f, t)
        mean = x.mean(dim=-1)
        std = torch.sqrt(x.var(dim=-1, unbiased=False) + 1e-8)
        emb = self.proj(torch.cat([mean, std], dim=-1))
        return F.normalize(emb, dim=-1)


class AMSoftmaxHead(nn.Module):
    """Additive-margin softmax classifier over speaker identities."""

    def __init__(self, embed_dim: int, n_speakers: int, margin: float = 0.2, scale: float = 30.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(n_speakers, embed_dim) * 0.02)
        self.margin = margin
        self.scale = scale

    def cosines(self, emb: torch.Tensor) -> torch.Tensor:
        return emb @ F.normalize(self.weight, dim=-1).T

    def forward(self, emb: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        cos = self.cosines(emb)
        onehot = F.one_hot(labels, cos.shape[-1]).to(cos.dtype)
        return F.cross_entropy(self.scale * (cos - self.margin * onehot), labels)


def _features(x: AudioSignal, config: EncoderConfig) -> np.ndarray:
    """Log-mel with per-channel mean subtraction (gain becomes a no-op)."""
    feats = logmel(x, config.n_mels, config.frame_win_s, config.frame_hop_s)
    return feats - feats.mean(axis=1, keepdims=True)


class SpeakerEncoder:
    """Inference wrapper around a (trained) encoder network."""

    def __init__(self, net: SpeakerEncoderNet, config: Optional[EncoderConfig] = None):
        self.net = net.eval()
        self.config = config or net.config

    def _encode_batch(self, signals: List[AudioSignal]) -> np.ndarray:
        feats = np.stack([_features(x, self.config) for x in signals])
        with torch.no_grad():
            emb = self.net(torch.from_numpy(feats).float().unsqueeze(1))
        return emb.numpy().astype(np.float64)

    def encode(self, x: AudioSignal) -> SpeakerEmbedding:
        if x.duration_s < MIN_ENCODE_S:
            raise ParameterError(
                f"input of {x.duration_s:.3f} s is too short to embed (min {MIN_ENCODE_S} s)"
            )
        vec = self._encode_batch([x])[0]
        return SpeakerEmbedding(vec, x.duration_s)

    def encode_windows(
        self,
        x: AudioSignal,
        win_s: float = WINDOW_LEN_S,
        hop_s: float = WINDOW_HOP_S,
    ) -> List[SpeakerEmbedding]:
        """One embedding per sliding window; tail windows are zero-padded."""
        if x.duration_s < hop_s:
            raise ParameterError("input shorter than one window hop")
        windows = frame_windows(x.duration_s, win_s, hop_s)
        sr = x.sample_rate
        win_n = int(round(win_s * sr))
        chunks = []
        for start, _ in windows:
            a = int(round(start * sr))
            piece = np.zeros(win_n)
            seg = x.samples[a : a + win_n]
            piece[: seg.size] = seg
            chunks.append(AudioSignal(piece, sr))
        out = []
        for ofs in range(0, len(chunks), 256):
            vecs = self._encode_batch(chunks[ofs : ofs + 256])
            out.extend(SpeakerEmbedding(v, win_s) for v in vecs)
        return out

    def save(self, path: str, extra: Optional[dict] = None) -> str:
        return ckpt.save_checkpoint(
            path, "speaker_encoder", asdict(self.config), self.net.state_dict(), extra
        )

    @staticmethod
    def load(path: str) -> "SpeakerEncoder":
        payload = ckpt.load_checkpoint(path, "speaker_encoder")
        config = EncoderConfig(**payload["config"])
        net = SpeakerEncoderNet(config)
        net.load_state_dict(payload["state_dict"])
        return SpeakerEncoder(net, config)


class ConditionProjector(nn.Module):
    """1-D conv + tanh projection of a speaker embedding to a feature dimension.

    The time-axis repetition is performed by the consumer.
    """

    def __init__(self, embed_dim: int, target_dim: int):
        super().__init__()
        self.conv = nn.Conv1d(embed_dim, target_dim, kernel_size=1)
        self.target_dim = target_dim

    def forward(self, emb: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.conv(emb.unsqueeze(-1)).squeeze(-1))


def condition_project(projector: ConditionProjector, e: SpeakerEmbedding) -> np.ndarray:
    """Apply a trained conditioning projection to one embedding."""
    with torch.no_grad():
        out = projector(torch.from_numpy(e.vector).float().unsqueeze(0))
    return out.squeeze(0).numpy().astype(np.float64)


@dataclass
class EncoderTrainConfig:
    steps: int = 400
    batch_size: int = 16
    lr: float = 1e-3
    crop_s: float = 1.2
    holdout_per_speaker: int = 2
    margin: float = 0.2
    scale: float = 30.0
    seed: int = 0
    log_every: int = 25


def _random_crop(x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if x.size >= n:
        off = int(rng.integers(x.size - n + 1))
        return x[off : off + n]
    out = np.zeros(n)
    out[: x.size] = x
    return out


def train_encoder(
    corpus: SourceCorpus,
    config: EncoderConfig,
    train_config: EncoderTrainConfig,
):
    """Train the encoder on corpus speakers with an AM-softmax objective.

    Returns (SpeakerEncoder, metrics rows, held-out classification accuracy).
    Metrics rows are (step, loss, lr); held-out accuracy is computed on
    utterances excluded from training for each speaker.
    """
    speakers = corpus.speakers()
    if len(speakers) < 8:
        raise ParameterError(f"encoder training needs >= 8 speakers, got {len(speakers)}")
    rng = np.random.default_rng(train_config.seed)
    torch.manual_seed(train_config.seed)

    holdout: Dict[str, List[AudioSignal]] = {}
    train_utts: Dict[str, List[AudioSignal]] = {}
    for spk in speakers:
        utts = corpus.utterances[spk]
        k = min(train_config.holdout_per_speaker, len(utts) - 1)
        holdout[spk] = utts[:k]
        train_utts[spk] = utts[k:]

    net = SpeakerEncoderNet(config)
    head = AMSoftmaxHead(config.embed_dim, len(speakers), train_config.margin, train_config.scale)
    opt = torch.optim.Adam(list(net.parameters()) + list(head.parameters()), lr=train_config.lr)
    crop_n = int(round(train_config.crop_s * SAMPLE_RATE))

    metrics = []
    net.train()
    for step in range(1, train_config.steps + 1):
        sid = rng.integers(len(speakers), size=train_config.batch_size)
        batch = []
        for s in sid:
            utts = train_utts[speakers[s]]
            x = utts[int(rng.integers(len(utts)))].samples
            crop = _random_crop(x, crop_n, rng)
            batch.append(_features(AudioSignal(crop), config))
        feats = torch.from_numpy(np.stack(batch)).float().unsqueeze(1)
        labels = torch.from_numpy(sid.astype(np.int64))
        loss = head(net(feats), labels)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"encoder loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % train_config.log_every == 0 or step == 1:
            metrics.append((step, float(loss.item()), train_config.lr))

    encoder = SpeakerEncoder(net.eval(), config)
    correct = total = 0
    with torch.no_grad():
        for label, spk in enumerate(speakers):
            for utt in holdout[spk]:
                crop = _random_crop(utt.samples, crop_n, rng)
                feats = torch.from_numpy(
                    _features(AudioSignal(crop), config)
                ).float()[None, None]
                pred = int(head.cosines(net(feats)).argmax())
                correct += int(pred == label)
                total += 1
    accuracy = correct / max(total, 1)
    return encoder, metrics, accuracy
