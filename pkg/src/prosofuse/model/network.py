"""Full acoustic model, per-utterance batching, masked losses and the FFNN baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError, UsageError
from ..numcore import Dropout, Embedding, Linear, Module, ReLU, default_dtype, rng_from_seed
from .attention import pool_fuse, pool_fuse_backward
from .blocks import BlockStack, CrossAttnFusion, TextEncoder, VariancePredictor, VisualEncoder
from .config import ModelConfig


@dataclass
class Example:
    """One utterance in model space: ids, visual rows and (normalized) targets."""

    id: str
    phone_ids: np.ndarray
    visual: np.ndarray | None = None
    pitch: np.ndarray | None = None
    energy: np.ndarray | None = None
    log_duration: np.ndarray | None = None
    durations: np.ndarray | None = None
    mel: np.ndarray | None = None


@dataclass
class Batch:
    ids: list[str]
    phone_ids: np.ndarray
    phone_mask: np.ndarray
    visual: np.ndarray | None = None
    visual_mask: np.ndarray | None = None
    pitch: np.ndarray | None = None
    energy: np.ndarray | None = None
    log_duration: np.ndarray | None = None
    durations: np.ndarray | None = None
    mel: np.ndarray | None = None
    mel_mask: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.ids)


def _pad(seqs, width=None, dtype=None):
    n = max(len(s) for s in seqs)
    shape = (len(seqs), n) if width is None else (len(seqs), n, width)
    out = np.zeros(shape, dtype=dtype or default_dtype())
    mask = np.zeros((len(seqs), n), dtype=bool)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
        mask[i, : len(s)] = True
    return out, mask


def collate(examples: list[Example]) -> Batch:
    """Pad a list of examples; optional fields are kept only if every example has them."""
    if not examples:
        raise UsageError("cannot collate an empty batch")
    ids, phone_mask = _pad([np.asarray(e.phone_ids) for e in examples], dtype=np.int64)
    b = Batch([e.id for e in examples], ids, phone_mask)
    if all(e.visual is not None for e in examples):
        b.visual, b.visual_mask = _pad([e.visual for e in examples], examples[0].visual.shape[1])
    for name in ("pitch", "energy", "log_duration"):
        if all(getattr(e, name) is not None for e in examples):
            setattr(b, name, _pad([getattr(e, name) for e in examples])[0])
    if all(e.durations is not None for e in examples):
        b.durations = _pad([e.durations for e in examples], dtype=np.int64)[0]
    if all(e.mel is not None for e in examples):
        if b.durations is not None:
            for e in examples:
                if len(e.mel) != int(np.sum(e.durations)):
                    raise DimensionError(f"{e.id}: mel has {len(e.mel)} frames, durations sum to {int(np.sum(e.durations))}")
        b.mel, b.mel_mask = _pad([e.mel for e in examples], examples[0].mel.shape[1])
    return b


@dataclass
class PedPrediction:
    """Per-phone predictions (B, L) in model target space, zero at padding."""

    pitch: np.ndarray
    energy: np.ndarray
    log_duration: np.ndarray


def quantize(x: np.ndarray, n_bins: int = 256, lo: float = -4.0, hi: float = 4.0) -> np.ndarray:
    """Linear bins over [lo, hi]: floor((x - lo) / (hi - lo) * (n_bins - 1) + 0.5), clipped."""
    b = np.floor((np.asarray(x, dtype=np.float64) - lo) / (hi - lo) * (n_bins - 1) + 0.5)
    return np.clip(b, 0, n_bins - 1).astype(np.int64)


def durations_from_log(log_d: np.ndarray, mask: np.ndarray, norm=(0.0, 1.0)) -> np.ndarray:
    """Round-half-up of exp(de-normalized log-duration), at least 1 on valid phones."""
    raw = np.asarray(log_d, dtype=np.float64) * norm[1] + norm[0]
    frames = np.maximum(1, np.floor(np.exp(np.minimum(raw, 20.0)) + 0.5)).astype(np.int64)
    return np.where(mask, frames, 0)


def length_regulate(h: np.ndarray, durations: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Repeat phone rows by their durations; returns (frames, frame mask, source index)."""
    durations = np.asarray(durations, dtype=np.int64)
    if durations.ndim == 1:
        frames, fmask, idx = length_regulate(h[None], durations[None])
        return frames[0], fmask[0], idx[0]
    if np.any(durations < 0):
        raise ConfigError("durations must be nonnegative")
    batch, length = durations.shape
    totals = durations.sum(axis=1)
    t = max(1, int(totals.max()))
    idx = np.zeros((batch, t), dtype=np.int64)
    fmask = np.zeros((batch, t), dtype=bool)
    for i in range(batch):
        rep = np.repeat(np.arange(length), durations[i])
        idx[i, : len(rep)] = rep
        fmask[i, : len(rep)] = True
    frames = h[np.arange(batch)[:, None], idx] * fmask[..., None].astype(h.dtype)
    return frames, fmask, idx


def length_regulate_backward(dframes, fmask, idx, length: int) -> np.ndarray:
    batch = dframes.shape[0]
    dh = np.zeros((batch, length, dframes.shape[-1]), dtype=dframes.dtype)
    rows = np.broadcast_to(np.arange(batch)[:, None], idx.shape)
    np.add.at(dh, (rows[fmask], idx[fmask]), dframes[fmask])
    return dh


class VarianceAdaptor(Module):
    def __init__(self, cfg: ModelConfig, rng):
        d = cfg.d_model
        args = (d, cfg.predictor_hidden, cfg.predictor_kernel, cfg.predictor_dropout, rng)
        self.duration = VariancePredictor(*args)
        self.pitch = VariancePredictor(*args)
        self.energy = VariancePredictor(*args)
        self.pitch_embed = Embedding(cfg.n_bins, d, rng)
        self.energy_embed = Embedding(cfg.n_bins, d, rng)
        self._cfg = cfg
        self._m = None

    def forward(self, h, mask, targets: PedPrediction | None, teacher_forcing: bool, training=False, rng=None, embed=True):
        """Predict PED and, if ``embed``, return h plus the pitch/energy embeddings."""
        if (training or teacher_forcing) and targets is None:
            raise UsageError("training and teacher forcing need pitch/energy/duration targets")
        ped = PedPrediction(
            pitch=self.pitch.forward(h, mask, training, rng),
            energy=self.energy.forward(h, mask, training, rng),
            log_duration=self.duration.forward(h, mask, training, rng),
        )
        if not embed:
            return ped, None
        src = targets if teacher_forcing else ped
        lo, hi = self._cfg.bin_range
        self._m = np.asarray(mask, dtype=h.dtype)[..., None]
        out = h + (
            self.pitch_embed.forward(quantize(src.pitch, self._cfg.n_bins, lo, hi))
            + self.energy_embed.forward(quantize(src.energy, self._cfg.n_bins, lo, hi))
        ) * self._m
        return ped, out

    def backward(self, dout, dped: PedPrediction):
        dh = self.pitch.backward(dped.pitch) + self.energy.backward(dped.energy) + self.duration.backward(dped.log_duration)
        if dout is not None:
            self.pitch_embed.backward(dout * self._m)
            self.energy_embed.backward(dout * self._m)
            dh = dh + dout
        return dh


@dataclass
class ForwardResult:
    ped: PedPrediction
    mel: np.ndarray | None = None
    mel_mask: np.ndarray | None = None
    durations: np.ndarray | None = None
    hidden: np.ndarray | None = None


class VisualSpeech(Module):
    """Text encoder, optional visual encoder and fusion, variance adaptor, mel decoder.

    The fused sequence feeds both the PED predictors and the decoder.
    """

    def __init__(self, cfg: ModelConfig):
        rng = rng_from_seed(cfg.init_seed, 101)
        d = cfg.d_model
        self.cfg = cfg
        self.text = TextEncoder(cfg.vocab_size, d, cfg.encoder_layers, cfg.heads, cfg.ffn_hidden,
                                cfg.conv_kernel, cfg.encoder_dropout, rng)
        if cfg.variant != "TextOnly":
            self.visual = VisualEncoder(cfg.d_f, d, cfg.encoder_layers, cfg.heads, cfg.ffn_hidden,
                                        cfg.conv_kernel, cfg.encoder_dropout, rng)
        if cfg.variant == "CrossAttnFusion":
            self.fusion = CrossAttnFusion(d, cfg.heads, cfg.ffn_hidden, cfg.fusion_dropout, rng)
        self.adaptor = VarianceAdaptor(cfg, rng)
        self.decoder = BlockStack(cfg.decoder_layers, d, cfg.heads, cfg.ffn_hidden, cfg.conv_kernel,
                                  cfg.decoder_dropout, rng)
        self.mel_out = Linear(d, cfg.mel_bins, rng)
        self._v = None
        self._cache = None

    def encode(self, batch: Batch, training=False, rng=None) -> np.ndarray:
        t = self.text.forward(batch.phone_ids, batch.phone_mask, training, rng)
        variant = self.cfg.variant
        if variant == "TextOnly":
            return t
        if batch.visual is None:
            raise UsageError(f"variant {variant} needs visual features")
        v = self.visual.forward(batch.visual.astype(t.dtype, copy=False), batch.visual_mask, training, rng)
        self._v = v
        if variant == "PoolFusion":
            return pool_fuse(t, v, batch.visual_mask) * batch.phone_mask[..., None]
        return self.fusion.forward(t, batch.phone_mask, v, batch.visual_mask, training, rng)

    def _encode_backward(self, dh, batch: Batch) -> None:
        variant = self.cfg.variant
        if variant == "TextOnly":
            self.text.backward(dh)
            return
        if variant == "PoolFusion":
            dt, dv = pool_fuse_backward(dh * batch.phone_mask[..., None], self._v, batch.visual_mask)
        else:
            dt, dv = self.fusion.backward(dh)
        self.visual.backward(dv)
        self.text.backward(dt)

    def forward(self, batch: Batch, teacher_forcing: bool = True, training: bool = False, rng=None,
                with_decoder: bool = True) -> ForwardResult:
        if training and rng is None:
            raise ConfigError("training-mode forward needs an rng")
        targets = None
        if batch.pitch is not None and batch.energy is not None and batch.log_duration is not None:
            targets = PedPrediction(batch.pitch, batch.energy, batch.log_duration)
        h = self.encode(batch, training, rng)
        ped, h2 = self.adaptor.forward(h, batch.phone_mask, targets, teacher_forcing, training, rng, embed=with_decoder)
        result = ForwardResult(ped=ped, hidden=h)
        self._cache = (batch, h.shape[1], None)
        if not with_decoder:
            return result
        if teacher_forcing:
            if batch.durations is None:
                raise UsageError("teacher forcing needs target durations")
            durations = np.where(batch.phone_mask, batch.durations, 0)
        else:
            durations = durations_from_log(ped.log_duration, batch.phone_mask, self.cfg.log_duration_norm)
        frames, fmask, idx = length_regulate(h2, durations)
        x = self.decoder.forward(frames, fmask, training, rng)
        mel = self.mel_out.forward(x) * fmask[..., None]
        self._cache = (batch, h.shape[1], (fmask, idx))
        result.mel, result.mel_mask, result.durations = mel, fmask, durations
        return result

    def backward(self, dped: PedPrediction, dmel: np.ndarray | None = None) -> None:
        batch, length, lr_cache = self._cache
        dout = None
        if dmel is not None:
            if lr_cache is None:
                raise UsageError("mel gradient given but the decoder was not run")
            fmask, idx = lr_cache
            dx = self.decoder.backward(self.mel_out.backward(dmel * fmask[..., None]))
            dout = length_regulate_backward(dx, fmask, idx, length)
        dh = self.adaptor.backward(dout, dped)
        self._encode_backward(dh, batch)


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over utterances of each utterance's MSE over its valid positions, with gradient."""
    m = np.asarray(mask, dtype=pred.dtype)
    if pred.ndim == 3:
        m = m[..., None]
    diff = (pred - target.astype(pred.dtype, copy=False)) * m
    counts = np.broadcast_to(m, pred.shape).reshape(len(pred), -1).sum(axis=1)
    if np.any(counts == 0):
        raise DimensionError("every utterance in a batch needs at least one valid position")
    per = (diff * diff).reshape(len(pred), -1).sum(axis=1) / counts
    scale = (2.0 / (counts * len(pred))).astype(pred.dtype).reshape((-1,) + (1,) * (pred.ndim - 1))
    return float(per.mean()), diff * scale


def tts_losses(model: VisualSpeech, batch: Batch, result: ForwardResult, with_mel: bool = True):
    """Unit-weighted MSE terms; returns (terms, PED grads, mel grad)."""
    if batch.pitch is None or batch.energy is None or batch.log_duration is None:
        raise UsageError("loss needs pitch, energy and log-duration targets")
    terms = {}
    lp, gp = masked_mse(result.ped.pitch, batch.pitch, batch.phone_mask)
    le, ge = masked_mse(result.ped.energy, batch.energy, batch.phone_mask)
    ld, gd = masked_mse(result.ped.log_duration, batch.log_duration, batch.phone_mask)
    terms.update(pitch=lp, energy=le, duration=ld)
    gmel = None
    if with_mel:
        if batch.mel is None or result.mel is None:
            raise UsageError("mel loss needs target mel and a decoder pass")
        if result.mel.shape != batch.mel.shape:
            raise DimensionError(f"predicted mel {result.mel.shape} and target {batch.mel.shape} differ")
        terms["mel"], gmel = masked_mse(result.mel, batch.mel, batch.mel_mask)
    terms["total"] = sum(terms.values())
    return terms, PedPrediction(gp, ge, gd), gmel


def forward_tts(model: VisualSpeech, batch: Batch, teacher_forcing: bool = True, training: bool = False, rng=None):
    """Full forward with loss terms; returns (mel, PedPrediction, terms)."""
    result = model.forward(batch, teacher_forcing, training, rng)
    with_mel = teacher_forcing and batch.mel is not None
    terms = tts_losses(model, batch, result, with_mel=with_mel)[0]
    return result.mel, result.ped, terms


class FFNN(Module):
    """Per-visual-row regressor: d_f -> hidden -> hidden -> 2 (pitch, energy)."""

    def __init__(self, d_f: int, hidden: int = 256, dropout: float = 0.5, seed: int = 0):
        rng = rng_from_seed(seed, 202)
        self.fc1 = Linear(d_f, hidden, rng)
        self.relu1 = ReLU()
        self.drop1 = Dropout(dropout)
        self.fc2 = Linear(hidden, hidden, rng)
        self.relu2 = ReLU()
        self.drop2 = Dropout(dropout)
        self.fc3 = Linear(hidden, 2, rng)
        self.d_f = d_f

    def forward(self, x: np.ndarray, training: bool = False, rng=None) -> np.ndarray:
        if x.shape[-1] != self.d_f:
            raise ConfigError(f"FFNN expects {self.d_f} input features, got {x.shape[-1]}")
        x = x.astype(default_dtype(), copy=False)
        h = self.drop1.forward(self.relu1.forward(self.fc1.forward(x)), training, rng)
        h = self.drop2.forward(self.relu2.forward(self.fc2.forward(h)), training, rng)
        return self.fc3.forward(h)

    def backward(self, dy: np.ndarray) -> None:
        dh = self.relu2.backward(self.drop2.backward(self.fc3.backward(dy)))
        dh = self.relu1.backward(self.drop1.backward(self.fc2.backward(dh)))
        self.fc1.backward(dh)
