"""Synthetic multimodal corpus with known error floors.

Each utterance draws a latent style from a finite set S and exposes it
only through its visual features: every visual row is the style's fixed
random unit vector plus N(0, visual_noise^2) noise. Phone-level targets are

    pitch_j  = pitch_center  + pitch_spread  * u_p[phone_j] + pitch_gain  * s_j + N(0, pitch_noise^2)
    energy_j = energy_center + energy_spread * u_e[phone_j] + energy_gain * s_j + N(0, energy_noise^2)
    ln dur_j = duration_log_mean + duration_log_spread * u_d[phone_j] + duration_gain * s_bar + N(0, duration_noise^2)

with durations = max(1, round(exp(ln dur))). In ``utterance`` style mode
s_j is the utterance style. In ``frame`` mode each visual row carries its
own style; the frame timeline is cut into as many near-equal chunks as
there are visual rows, and s_j is the mean style over phone j's frames.
s_bar is the utterance mean style in both modes.

Floors for utterance mode (per target with gain g and noise sd e):
a text-only predictor cannot beat g^2 Var(S) + e^2, a predictor that
recovers s reaches e^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dsp.sequences import chunk_sizes, phone_average
from ..errors import ConfigError
from ..numcore import rng_from_seed
from .manifest import Manifest, UtteranceRecord

LOG_FLOOR = math.log(1e-5)


@dataclass(frozen=True)
class SynthConfig:
    n_phonemes: int = 10
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 0
    min_phones: int = 6
    max_phones: int = 14
    min_visual: int = 3
    max_visual: int = 6
    styles: tuple[float, ...] = (-1.0, 0.0, 1.0)
    style_mode: str = "utterance"
    pitch_gain: float = 1.0
    energy_gain: float = 0.5
    duration_gain: float = 0.0
    pitch_noise: float = 0.1
    energy_noise: float = 0.1
    duration_noise: float = 0.05
    pitch_center: float = 0.0
    pitch_spread: float = 1.0
    energy_center: float = 0.0
    energy_spread: float = 1.0
    duration_log_mean: float = math.log(6.0)
    duration_log_spread: float = 0.3
    visual_dim: int = 16
    visual_noise: float = 0.1
    with_mel: bool = True
    mel_noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if len(self.styles) < 1:
            raise ConfigError("need at least one style value")
        if self.style_mode not in ("utterance", "frame"):
            raise ConfigError(f"unknown style mode {self.style_mode!r}")
        if min(self.pitch_noise, self.energy_noise, self.duration_noise, self.visual_noise, self.mel_noise) < 0:
            raise ConfigError("noise levels must be nonnegative")
        if not (1 <= self.min_phones <= self.max_phones and 1 <= self.min_visual <= self.max_visual):
            raise ConfigError("bad length ranges")
        if self.max_visual > self.min_phones:
            raise ConfigError("max_visual must not exceed min_phones (every chunk needs a frame)")


def style_variance(cfg: SynthConfig) -> float:
    s = np.asarray(cfg.styles, dtype=np.float64)
    return float(np.mean((s - s.mean()) ** 2))


def analytic_floors(cfg: SynthConfig) -> dict[str, dict[str, float]]:
    """Best achievable MSE per target for text-only and style-aware predictors.

    Exact for pitch and energy in utterance mode; the duration entry is for
    the continuous log-duration and ignores rounding to whole frames.
    """
    var_s = style_variance(cfg)
    out = {}
    for name, gain, noise in (
        ("pitch", cfg.pitch_gain, cfg.pitch_noise),
        ("energy", cfg.energy_gain, cfg.energy_noise),
        ("duration", cfg.duration_gain, cfg.duration_noise),
    ):
        out[name] = {"text_only": gain * gain * var_s + noise * noise, "multimodal": noise * noise}
    return out


def phone_symbol(i: int) -> str:
    return f"p{i:02d}"


def synth_dataset(cfg: SynthConfig) -> Manifest:
    """Generate a deterministic in-memory corpus; arrays live in ``record.arrays``."""
    tables = rng_from_seed(cfg.seed, 0)
    u_p = tables.standard_normal(cfg.n_phonemes)
    u_e = tables.standard_normal(cfg.n_phonemes)
    u_d = tables.standard_normal(cfg.n_phonemes)
    embed = tables.standard_normal((len(cfg.styles), cfg.visual_dim))
    embed /= np.linalg.norm(embed, axis=1, keepdims=True)
    mel_template = -4.0 + 1.5 * tables.standard_normal((cfg.n_phonemes, 80))
    mel_w_pitch = 0.5 * tables.standard_normal(80)
    mel_w_energy = 0.5 * tables.standard_normal(80)

    rng = rng_from_seed(cfg.seed, 1)
    styles = np.asarray(cfg.styles, dtype=np.float64)
    splits = ["train"] * cfg.n_train + ["val"] * cfg.n_val + ["test"] * cfg.n_test
    records = []
    for idx, split in enumerate(splits):
        n_ph = int(rng.integers(cfg.min_phones, cfg.max_phones + 1))
        n_vis = int(rng.integers(cfg.min_visual, cfg.max_visual + 1))
        ph = rng.integers(0, cfg.n_phonemes, n_ph)
        if cfg.style_mode == "utterance":
            style_idx = np.full(n_vis, rng.integers(0, len(styles)))
        else:
            style_idx = rng.integers(0, len(styles), n_vis)
        style_seq = styles[style_idx]
        s_bar = float(style_seq.mean())

        log_d = (
            cfg.duration_log_mean
            + cfg.duration_log_spread * u_d[ph]
            + cfg.duration_gain * s_bar
            + cfg.duration_noise * rng.standard_normal(n_ph)
        )
        durations = np.maximum(1, np.floor(np.exp(log_d) + 0.5)).astype(np.int64)
        n_frames = int(durations.sum())
        frame_style = np.repeat(style_seq, chunk_sizes(n_frames, n_vis))
        phone_style = phone_average(frame_style, durations)

        pitch = (
            cfg.pitch_center
            + cfg.pitch_spread * u_p[ph]
            + cfg.pitch_gain * phone_style
            + cfg.pitch_noise * rng.standard_normal(n_ph)
        )
        energy = (
            cfg.energy_center
            + cfg.energy_spread * u_e[ph]
            + cfg.energy_gain * phone_style
            + cfg.energy_noise * rng.standard_normal(n_ph)
        )
        visual = embed[style_idx] + cfg.visual_noise * rng.standard_normal((n_vis, cfg.visual_dim))

        arrays = {"visual": visual.astype(np.float32)}
        if cfg.with_mel:
            zp = np.repeat((pitch - cfg.pitch_center) / (cfg.pitch_spread or 1.0), durations)
            ze = np.repeat((energy - cfg.energy_center) / (cfg.energy_spread or 1.0), durations)
            mel = (
                mel_template[np.repeat(ph, durations)]
                + zp[:, None] * mel_w_pitch
                + ze[:, None] * mel_w_energy
                + cfg.mel_noise * rng.standard_normal((n_frames, 80))
            )
            arrays["mel"] = np.maximum(mel, LOG_FLOOR).astype(np.float32)

        rec = UtteranceRecord(
            id=f"syn{idx:05d}",
            phones=[phone_symbol(int(p)) for p in ph],
            durations=[int(d) for d in durations],
            pitch=[float(x) for x in pitch],
            energy=[float(x) for x in energy],
            split=split,
            style=[float(x) for x in style_seq],
        )
        rec.arrays = arrays
        records.append(rec)
    return Manifest(records, dsp_config_hash=None)
