"""Audio frontend (mel, pitch, energy), sequence averaging and evaluation metrics."""

from .audio import Waveform, read_wav, resample, write_wav
from .features import (
    DspConfig,
    extract_energy,
    extract_pitch,
    frame_count,
    mel_centers,
    mel_filterbank,
    mel_spectrogram,
    stft_magnitude,
)
from .metrics import MCD_K, dtw_path_mean, log_f0_rmse, mcd, mel_cepstrum, si_snr
from .sequences import chunk_sizes, downsample_average, expand_by_durations, phone_average

__all__ = [
    "DspConfig",
    "MCD_K",
    "Waveform",
    "chunk_sizes",
    "downsample_average",
    "dtw_path_mean",
    "expand_by_durations",
    "extract_energy",
    "extract_pitch",
    "frame_count",
    "log_f0_rmse",
    "mcd",
    "mel_centers",
    "mel_cepstrum",
    "mel_filterbank",
    "mel_spectrogram",
    "phone_average",
    "read_wav",
    "resample",
    "si_snr",
    "stft_magnitude",
    "write_wav",
]
