"""Frame-level features: log-mel spectrogram, YIN pitch, STFT energy.

All three share the same framing: the signal is reflect-padded by
n_fft // 2 on both sides and framed every ``hop`` samples, giving
``len // hop + 1`` frames. Frame i is centred on sample i * hop.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import get_window

from ..errors import ConfigError, SignalError
from .audio import Waveform


@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = 22050
    n_fft: int = 1024
    hop: int = 256
    win_length: int = 1024
    fmin: float = 0.0
    fmax: float = 8000.0
    mel_bins: int = 80
    log_floor: float = 1e-5
    f0_min: float = 60.0
    f0_max: float = 600.0
    yin_threshold: float = 0.15

    def __post_init__(self):
        if self.hop > self.n_fft or self.hop <= 0:
            raise ConfigError("hop must lie in (0, n_fft]")
        if self.win_length != self.n_fft:
            raise ConfigError("window length must equal n_fft")
        if not 0 < self.f0_min < self.f0_max <= self.sample_rate / 2:
            raise ConfigError("need 0 < f0_min < f0_max <= sample_rate / 2")
        if self.mel_bins != 80:
            raise ConfigError("mel spectrograms are fixed at 80 bins")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(cfg: DspConfig) -> np.ndarray:
    """Hz centre of each mel filter (HTK scale)."""
    pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bins + 2)
    return mel_to_hz(pts)[1:-1]


def mel_filterbank(cfg: DspConfig) -> np.ndarray:
    """Triangular filters with unit peak, shape (mel_bins, n_fft // 2 + 1)."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bins + 2))
    freqs = np.linspace(0.0, cfg.sample_rate / 2.0, cfg.n_fft // 2 + 1)
    lower = (freqs[None, :] - edges[:-2, None]) / (edges[1:-1] - edges[:-2])[:, None]
    upper = (edges[2:, None] - freqs[None, :]) / (edges[2:] - edges[1:-1])[:, None]
    return np.maximum(0.0, np.minimum(lower, upper))


def frame_count(n_samples: int, hop: int) -> int:
    return n_samples // hop + 1


def _frames(x: np.ndarray, cfg: DspConfig) -> np.ndarray:
    if x.size < cfg.hop:
        raise SignalError(f"signal of {x.size} samples is shorter than one hop ({cfg.hop})")
    pad = cfg.n_fft // 2
    xp = np.pad(x, (pad, pad), mode="reflect")
    n = frame_count(x.size, cfg.hop)
    view = np.lib.stride_tricks.sliding_window_view(xp, cfg.n_fft)
    return view[:: cfg.hop][:n]


def _check_rate(w: Waveform, cfg: DspConfig) -> None:
    if w.sample_rate != cfg.sample_rate:
        raise SignalError(f"waveform rate {w.sample_rate} differs from config rate {cfg.sample_rate}")


def stft_magnitude(w: Waveform, cfg: DspConfig) -> np.ndarray:
    """|STFT| with a periodic Hann window, shape (frames, n_fft // 2 + 1)."""
    _check_rate(w, cfg)
    window = get_window("hann", cfg.n_fft, fftbins=True)
    return np.abs(np.fft.rfft(_frames(w.samples, cfg) * window, axis=1))


def mel_spectrogram(w: Waveform, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Natural-log mel magnitudes, shape (frames, 80), floored at ln(log_floor)."""
    mag = stft_magnitude(w, cfg)
    mel = mag @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, cfg.log_floor))


def extract_energy(w: Waveform, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """L2 norm over frequency of each STFT magnitude frame."""
    return np.linalg.norm(stft_magnitude(w, cfg), axis=1)


def _cmnd(frames: np.ndarray, tau_max: int) -> np.ndarray:
    """Cumulative-mean-normalized YIN difference, shape (frames, tau_max + 1)."""
    frame_len = frames.shape[1]
    width = frame_len - tau_max
    nfft = 1 << int(np.ceil(np.log2(frame_len + width)))
    a = np.fft.rfft(frames[:, :width], nfft, axis=1)
    b = np.fft.rfft(frames, nfft, axis=1)
    corr = np.fft.irfft(np.conj(a) * b, nfft, axis=1)[:, : tau_max + 1]
    sq = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames * frames, axis=1)], axis=1)
    energy0 = sq[:, width][:, None]
    taus = np.arange(tau_max + 1)
    energy_tau = sq[:, taus + width] - sq[:, taus]
    diff = np.maximum(energy0 + energy_tau - 2.0 * corr, 0.0)
    diff[:, 0] = 0.0
    running = np.cumsum(diff[:, 1:], axis=1)
    out = np.ones_like(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = diff[:, 1:] * taus[1:] / running
    out[:, 1:] = np.where(running > 0, ratio, 1.0)
    return out


def extract_pitch(w: Waveform, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Per-frame f0 in Hz by YIN; 0.0 marks unvoiced frames.

    Lag search covers [sr / f0_max, sr / f0_min]. The first lag whose
    normalized difference drops below the threshold is refined to the
    bottom of its dip and then by parabolic interpolation.
    """
    _check_rate(w, cfg)
    sr = cfg.sample_rate
    tau_min = int(np.ceil(sr / cfg.f0_max))
    tau_max = int(np.floor(sr / cfg.f0_min))
    if tau_max >= cfg.n_fft // 2:
        raise ConfigError("f0_min too low for the analysis frame length")
    frames = _frames(w.samples, cfg)
    cmnd = _cmnd(frames, tau_max)
    f0 = np.zeros(frames.shape[0])
    for i, row in enumerate(cmnd):
        below = np.nonzero(row[tau_min : tau_max + 1] < cfg.yin_threshold)[0]
        if below.size == 0:
            continue
        tau = tau_min + int(below[0])
        while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
            tau += 1
        shift = 0.0
        if tau_min < tau < tau_max:
            left, mid, right = row[tau - 1], row[tau], row[tau + 1]
            denom = left - 2.0 * mid + right
            if denom > 0:
                shift = 0.5 * (left - right) / denom
        freq = sr / (tau + shift)
        if cfg.f0_min <= freq <= cfg.f0_max:
            f0[i] = freq
    return f0
