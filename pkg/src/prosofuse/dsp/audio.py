from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from ..errors import SignalError


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise SignalError("waveform must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise SignalError("sample rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> Waveform:
    """Read 16-bit PCM or 32-bit float WAV; stereo is averaged to mono."""
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(np.float64)
    else:
        raise SignalError(f"unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return Waveform(x, int(rate))


def write_wav(path, w: Waveform, pcm16: bool = True) -> None:
    if pcm16:
        data = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = w.samples.astype(np.float32)
    wavfile.write(path, w.sample_rate, data)


def resample(w: Waveform, target: int) -> Waveform:
    """Polyphase windowed-sinc resampling (Kaiser window, scipy's default design)."""
    if target <= 0:
        raise SignalError("target sample rate must be positive")
    if w.sample_rate == target:
        return w
    ratio = Fraction(int(target), int(w.sample_rate))
    y = resample_poly(w.samples, ratio.numerator, ratio.denominator, padtype="line")
    return Waveform(y, int(target))
