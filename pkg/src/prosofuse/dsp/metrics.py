from __future__ import annotations

import math

import numpy as np
from scipy.fft import dct

from ..errors import MetricError, SignalError

MCD_K = 10.0 * math.sqrt(2.0) / math.log(10.0)
MCD_ORDER = 13


def mel_cepstrum(log_mel: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II of each log-mel frame."""
    return dct(np.asarray(log_mel, dtype=np.float64), type=2, norm="ortho", axis=1)


def dtw_path_mean(cost: np.ndarray) -> tuple[float, int]:
    """Mean cost along the DTW path with unit steps (1,0), (0,1), (1,1).

    Paths are compared by (total cost, length) lexicographically, which
    makes the result exactly symmetric under transposing ``cost``.
    Returns (mean cost, path length).
    """
    n, m = cost.shape
    acc = np.full((n, m), np.inf)
    length = np.zeros((n, m), dtype=np.int64)
    c = cost.tolist()
    a = acc.tolist()
    ln = length.tolist()
    for i in range(n):
        ci, ai, li = c[i], a[i], ln[i]
        prev_a = a[i - 1] if i else None
        prev_l = ln[i - 1] if i else None
        for j in range(m):
            if i == 0 and j == 0:
                ai[0], li[0] = ci[0], 1
                continue
            best = (math.inf, 0)
            if i and j:
                best = (prev_a[j - 1], prev_l[j - 1])
            if i and (prev_a[j], prev_l[j]) < best:
                best = (prev_a[j], prev_l[j])
            if j and (ai[j - 1], li[j - 1]) < best:
                best = (ai[j - 1], li[j - 1])
            ai[j] = ci[j] + best[0]
            li[j] = best[1] + 1
    return a[n - 1][m - 1] / ln[n - 1][m - 1], ln[n - 1][m - 1]


def mcd(a: np.ndarray, b: np.ndarray) -> float:
    """Mel-cepstral distortion in dB between two log-mel spectrograms.

    Coefficients 1..13 (c0 excluded), DTW-aligned, averaged over the path.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.size == 0 or b.size == 0:
        raise SignalError("mcd needs non-empty spectrograms")
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise SignalError(f"incompatible spectrogram shapes {a.shape} and {b.shape}")
    ca = mel_cepstrum(a)[:, 1 : MCD_ORDER + 1]
    cb = mel_cepstrum(b)[:, 1 : MCD_ORDER + 1]
    diff = ca[:, None, :] - cb[None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=-1))
    mean, _ = dtw_path_mean(cost)
    return MCD_K * mean


def log_f0_rmse(a, b) -> float:
    """RMSE of ln f0 over frames voiced (> 0) in both contours."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"pitch contours differ in length: {a.shape} vs {b.shape}")
    both = (a > 0) & (b > 0)
    if not np.any(both):
        raise MetricError("no frame is voiced in both contours")
    d = np.log(a[both]) - np.log(b[both])
    return float(np.sqrt(np.mean(d * d)))


def si_snr(est, ref) -> float:
    """Scale-invariant SNR in dB; +inf once the residual is 240 dB below the target."""
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise MetricError("si_snr needs equal-length signals")
    est = est - est.mean()
    ref = ref - ref.mean()
    ref_energy = float(ref @ ref)
    if ref_energy == 0.0:
        raise MetricError("reference signal is all zero")
    target = (float(est @ ref) / ref_energy) * ref
    residual = est - target
    t_energy = float(target @ target)
    r_energy = float(residual @ residual)
    if r_energy <= 1e-24 * t_energy:
        return math.inf
    if t_energy == 0.0:
        return -math.inf
    return 10.0 * math.log10(t_energy / r_energy)
