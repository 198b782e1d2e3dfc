"""Manifest records to model examples, visual-rate FFNN targets and deterministic batching."""

from __future__ import annotations

import math

import numpy as np

from ..dataprep import Manifest, UtteranceRecord
from ..dsp import downsample_average
from ..errors import UsageError
from ..model import Example, ModelConfig
from ..numcore import default_dtype, rng_from_seed

BUCKET_FACTOR = 8


def model_config_for(m: Manifest, **overrides) -> ModelConfig:
    """Vocabulary, visual width and target moments taken from a manifest."""
    phonemes = sorted({p for r in m for p in r.phones})
    kw = {"phonemes": tuple(phonemes)}
    for r in m:
        if r.visual_feat_path is not None or "visual" in r.arrays:
            kw["d_f"] = int(r.visual().shape[1])
            break
    if m.normalization:
        kw["pitch_norm"] = tuple(m.normalization["pitch"])
        kw["energy_norm"] = tuple(m.normalization["energy"])
        kw["log_duration_norm"] = tuple(m.normalization["log_duration"])
    kw.update(overrides)
    return ModelConfig(**kw)


def log_durations(r: UtteranceRecord) -> np.ndarray:
    if r.log_duration is not None:
        return np.asarray(r.log_duration, dtype=np.float64)
    return np.log(np.asarray(r.durations, dtype=np.float64))


def record_example(r: UtteranceRecord, cfg: ModelConfig, with_mel: bool = False) -> Example:
    dt = default_dtype()
    visual = r.visual().astype(dt) if cfg.variant != "TextOnly" else None
    mel = None
    if with_mel:
        mel = r.mel()
        if mel is None:
            raise UsageError(f"{r.id}: no mel features")
        mel = mel.astype(dt)
    return Example(
        id=r.id,
        phone_ids=np.asarray(cfg.phone_ids(r.phones), dtype=np.int64),
        visual=visual,
        pitch=np.asarray(r.pitch, dtype=dt),
        energy=np.asarray(r.energy, dtype=dt),
        log_duration=log_durations(r).astype(dt),
        durations=np.asarray(r.durations, dtype=np.int64),
        mel=mel,
    )


def ffnn_targets(r: UtteranceRecord) -> np.ndarray:
    """(n, 2) pitch and energy averaged over the n chunks aligned to the visual rows."""
    n = len(r.visual())
    pitch = downsample_average(r.pitch_contour(), n)
    energy = downsample_average(np.repeat(np.asarray(r.energy, dtype=np.float64), r.durations), n)
    return np.stack([pitch, energy], axis=1)


def epoch_plan(lengths: list[int], batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Shuffle, sort within buckets of BUCKET_FACTOR batches by length, cut, shuffle batch order."""
    n = len(lengths)
    if n == 0:
        raise UsageError("no training examples")
    rng = rng_from_seed(seed, 11, epoch)
    perm = rng.permutation(n)
    lengths = np.asarray(lengths)
    batches = []
    span = batch_size * BUCKET_FACTOR
    for start in range(0, n, span):
        chunk = perm[start : start + span]
        chunk = chunk[np.argsort(lengths[chunk], kind="stable")]
        batches.extend(chunk[i : i + batch_size] for i in range(0, len(chunk), batch_size))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


class BatchSchedule:
    """Maps a 1-based step to a fixed set of example indices for a given seed."""

    def __init__(self, lengths: list[int], batch_size: int, seed: int):
        self.lengths = list(lengths)
        self.batch_size = batch_size
        self.seed = seed
        self.per_epoch = math.ceil(len(self.lengths) / batch_size)
        self._cache: dict[int, list[np.ndarray]] = {}

    def indices(self, step: int) -> np.ndarray:
        if step < 1:
            raise UsageError("steps are 1-based")
        epoch, pos = divmod(step - 1, self.per_epoch)
        if epoch not in self._cache:
            self._cache = {epoch: epoch_plan(self.lengths, self.batch_size, self.seed, epoch)}
        return self._cache[epoch][pos]
