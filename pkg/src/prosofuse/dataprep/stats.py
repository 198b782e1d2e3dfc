"""Per-phoneme statistics, outlier filtering and target normalization."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from .manifest import Manifest, UtteranceRecord


@dataclass
class Moments:
    mean: float
    std: float
    count: int


@dataclass
class PhoneStats:
    pitch: Moments
    energy: Moments
    duration: Moments


@dataclass
class DatasetStats:
    phonemes: dict[str, PhoneStats]
    pitch: Moments
    energy: Moments
    log_duration: Moments
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetStats":
        phon = {
            k: PhoneStats(Moments(**v["pitch"]), Moments(**v["energy"]), Moments(**v["duration"]))
            for k, v in obj["phonemes"].items()
        }
        return cls(
            phon,
            Moments(**obj["pitch"]),
            Moments(**obj["energy"]),
            Moments(**obj["log_duration"]),
            list(obj.get("warnings", [])),
        )


def _moments(values: list[float]) -> Moments:
    """Population mean and std; (0, 0) for an empty list."""
    if not values:
        return Moments(0.0, 0.0, 0)
    a = np.asarray(values, dtype=np.float64)
    mean = float(a.mean())
    return Moments(mean, float(np.sqrt(np.mean((a - mean) ** 2))), a.size)


def compute_stats(m: Manifest) -> DatasetStats:
    """Per-phoneme pitch/energy/duration moments over the training split.

    Unvoiced (0 Hz) phone pitch is left out of the pitch moments. Phonemes
    that appear only outside the training split get zero-count entries.
    """
    pitch, energy, dur = defaultdict(list), defaultdict(list), defaultdict(list)
    g_pitch, g_energy, g_logdur = [], [], []
    seen = set()
    for r in m.records:
        seen.update(r.phones)
        if r.split != "train":
            continue
        for ph, p, e, d in zip(r.phones, r.pitch, r.energy, r.durations):
            if p > 0:
                pitch[ph].append(float(p))
                g_pitch.append(float(p))
            energy[ph].append(float(e))
            dur[ph].append(float(d))
            if e != 0:
                g_energy.append(float(e))
            g_logdur.append(math.log(d))
    phonemes, warnings = {}, []
    for ph in sorted(seen):
        stats = PhoneStats(_moments(pitch[ph]), _moments(energy[ph]), _moments(dur[ph]))
        for name in ("pitch", "energy", "duration"):
            if getattr(stats, name).count < 2:
                warnings.append(f"phoneme {ph!r}: fewer than 2 {name} samples, std set to 0")
        phonemes[ph] = stats
    return DatasetStats(phonemes, _moments(g_pitch), _moments(g_energy), _moments(g_logdur), warnings)


@dataclass(frozen=True)
class FilterConfig:
    pitch_max: float = 500.0
    k_sigma: float = 2.5

    def __post_init__(self):
        if self.pitch_max <= 0 or self.k_sigma <= 0:
            raise ConfigError("pitch_max and k_sigma must be positive")


@dataclass
class Removal:
    id: str
    rules: list[str]
    details: list[str]


def _violations(r: UtteranceRecord, s: DatasetStats, cfg: FilterConfig) -> tuple[list[str], list[str]]:
    rules, details = [], []
    for i, (ph, p, d) in enumerate(zip(r.phones, r.pitch, r.durations)):
        if p > cfg.pitch_max:
            rules.append("pitch_max")
            details.append(f"phone {i} ({ph}) pitch {p:.2f} > {cfg.pitch_max}")
        ps = s.phonemes.get(ph)
        if ps is None:
            continue
        if p > 0 and ps.pitch.count and abs(p - ps.pitch.mean) > cfg.k_sigma * ps.pitch.std:
            rules.append("pitch_sigma")
            details.append(f"phone {i} ({ph}) pitch {p:.2f} outside {ps.pitch.mean:.2f} +/- {cfg.k_sigma} sd")
        if ps.duration.count and abs(d - ps.duration.mean) > cfg.k_sigma * ps.duration.std:
            rules.append("duration_sigma")
            details.append(f"phone {i} ({ph}) duration {d} outside {ps.duration.mean:.2f} +/- {cfg.k_sigma} sd")
    return rules, details


def filter_outliers(m: Manifest, s: DatasetStats, cfg: FilterConfig = FilterConfig()):
    """Drop every utterance with a phone above ``pitch_max`` or outside mean +/- k sd.

    Single pass: ``s`` is used as given and not recomputed on the survivors.
    Returns (kept manifest, list of Removal in manifest order).
    """
    kept, removed = [], []
    for r in m.records:
        rules, details = _violations(r, s, cfg)
        if rules:
            removed.append(Removal(r.id, sorted(set(rules)), details))
        else:
            kept.append(r)
    return m.subset(kept), removed


def normalization_from_stats(s: DatasetStats) -> dict:
    for name in ("pitch", "energy", "log_duration"):
        if getattr(s, name).std <= 0:
            raise ConfigError(f"global {name} std is 0; cannot normalize")
    return {
        "pitch": [s.pitch.mean, s.pitch.std],
        "energy": [s.energy.mean, s.energy.std],
        "log_duration": [s.log_duration.mean, s.log_duration.std],
    }


def normalize_targets(m: Manifest, s: DatasetStats) -> Manifest:
    """Z-score phone pitch/energy and ln(duration) with global moments.

    Unvoiced pitch (0 Hz) maps to 0.0 and is flagged in ``voiced`` so the
    inverse restores it. Durations stay in frames for length regulation.
    """
    norm = normalization_from_stats(s)
    pm, ps = norm["pitch"]
    em, es = norm["energy"]
    lm, ls = norm["log_duration"]
    out = m.copy()
    out.normalization = norm
    for r in out.records:
        r.voiced = [p > 0 for p in r.pitch]
        r.pitch = [(p - pm) / ps if v else 0.0 for p, v in zip(r.pitch, r.voiced)]
        r.energy = [(e - em) / es for e in r.energy]
        r.log_duration = [(math.log(d) - lm) / ls for d in r.durations]
    return out


def denormalize_targets(m: Manifest) -> Manifest:
    if m.normalization is None:
        return m.copy()
    pm, ps = m.normalization["pitch"]
    em, es = m.normalization["energy"]
    out = m.copy()
    out.normalization = None
    for r in out.records:
        voiced = r.voiced if r.voiced is not None else [True] * len(r.pitch)
        r.pitch = [p * ps + pm if v else 0.0 for p, v in zip(r.pitch, voiced)]
        r.energy = [e * es + em for e in r.energy]
        r.log_duration = None
        r.voiced = None
    return out
