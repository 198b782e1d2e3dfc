"""Utterance manifests stored as JSON Lines.

The first line is a header object carrying ``"format": "prosofuse-manifest"``,
the DSP config hash and optional target-normalization moments. Every
following line is one utterance with these keys:

    id, split, phones, durations, pitch, energy,
    wav_path, alignment_path, visual_feat_path, mel_path, pitch_contour_path,
    log_duration, voiced, style

Paths are relative to the manifest's directory. ``pitch``/``energy`` are
phone-level; ``style`` is the latent value of synthetic corpora and is
never fed to a model.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import FormatError, UsageError
from .matfile import load_matrix, save_matrix

SPLITS = ("train", "val", "test")
_PATH_FIELDS = ("wav_path", "alignment_path", "visual_feat_path", "mel_path", "pitch_contour_path")
_ARRAY_FOR_PATH = {"visual_feat_path": "visual", "mel_path": "mel", "pitch_contour_path": "pitch_contour"}
_FORMAT = "prosofuse-manifest"


@dataclass
class UtteranceRecord:
    id: str
    phones: list[str]
    durations: list[int]
    pitch: list[float]
    energy: list[float]
    split: str = "train"
    wav_path: str | None = None
    alignment_path: str | None = None
    visual_feat_path: str | None = None
    mel_path: str | None = None
    pitch_contour_path: str | None = None
    log_duration: list[float] | None = None
    voiced: list[bool] | None = None
    style: list[float] | None = None
    arrays: dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)
    root: Path | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.phones)
        if not (len(self.durations) == n and len(self.pitch) == n and len(self.energy) == n):
            raise FormatError(f"{self.id}: phones, durations, pitch and energy differ in length")
        if any(int(d) < 1 for d in self.durations):
            raise FormatError(f"{self.id}: durations must be >= 1 frame")
        if self.split not in SPLITS:
            raise FormatError(f"{self.id}: unknown split {self.split!r}")

    @property
    def n_frames(self) -> int:
        return int(sum(self.durations))

    def _load(self, key: str, path_field: str) -> np.ndarray | None:
        if key in self.arrays:
            return self.arrays[key]
        rel = getattr(self, path_field)
        if rel is None:
            return None
        path = Path(rel) if self.root is None else self.root / rel
        self.arrays[key] = load_matrix(path)
        return self.arrays[key]

    def visual(self) -> np.ndarray:
        v = self._load("visual", "visual_feat_path")
        if v is None:
            raise UsageError(f"{self.id}: no visual features")
        return v

    def mel(self) -> np.ndarray | None:
        return self._load("mel", "mel_path")

    def pitch_contour(self) -> np.ndarray:
        """Frame-level pitch in Hz; falls back to expanding phone means."""
        c = self._load("pitch_contour", "pitch_contour_path")
        if c is not None:
            return np.asarray(c, dtype=np.float64).reshape(-1)
        return np.repeat(np.asarray(self.pitch, dtype=np.float64), self.durations)

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "split": self.split,
            "phones": list(self.phones),
            "durations": [int(d) for d in self.durations],
            "pitch": [float(x) for x in self.pitch],
            "energy": [float(x) for x in self.energy],
        }
        for name in _PATH_FIELDS:
            out[name] = getattr(self, name)
        out["log_duration"] = None if self.log_duration is None else [float(x) for x in self.log_duration]
        out["voiced"] = None if self.voiced is None else [bool(x) for x in self.voiced]
        out["style"] = None if self.style is None else [float(x) for x in self.style]
        return out

    @classmethod
    def from_json(cls, obj: dict, root: Path | None = None) -> "UtteranceRecord":
        known = {
            "id", "split", "phones", "durations", "pitch", "energy",
            "log_duration", "voiced", "style", *_PATH_FIELDS,
        }
        extra = set(obj) - known
        if extra:
            raise FormatError(f"unknown record fields {sorted(extra)}")
        try:
            return cls(root=root, **obj)
        except TypeError as exc:
            raise FormatError(f"malformed record: {exc}") from None


@dataclass
class Manifest:
    records: list[UtteranceRecord]
    dsp_config_hash: str | None = None
    normalization: dict | None = None
    root: Path | None = None

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise FormatError("manifest ids are not unique")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def split(self, name: str) -> list[UtteranceRecord]:
        return [r for r in self.records if r.split == name]

    def subset(self, records: Iterable[UtteranceRecord]) -> "Manifest":
        return Manifest(list(records), self.dsp_config_hash, copy.deepcopy(self.normalization), self.root)

    def copy(self) -> "Manifest":
        records = []
        for r in self.records:
            arrays = r.arrays
            r.arrays = {}
            c = copy.deepcopy(r)
            r.arrays = arrays
            c.arrays = dict(arrays)
            c.root = r.root
            records.append(c)
        return Manifest(records, self.dsp_config_hash, copy.deepcopy(self.normalization), self.root)


def materialize(m: Manifest, out_dir) -> None:
    """Write in-memory feature arrays under ``out_dir/features`` and point records at them."""
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    for r in m.records:
        for path_field, key in _ARRAY_FOR_PATH.items():
            if key in r.arrays and getattr(r, path_field) is None:
                feat_dir.mkdir(parents=True, exist_ok=True)
                rel = f"features/{r.id}.{key}.mat"
                save_matrix(out_dir / rel, r.arrays[key])
                setattr(r, path_field, rel)
        r.root = out_dir
    m.root = out_dir


def save_manifest(m: Manifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    for r in m.records:
        for path_field, key in _ARRAY_FOR_PATH.items():
            if key in r.arrays and getattr(r, path_field) is None:
                raise UsageError(f"{r.id}: in-memory {key} not materialized; call materialize() first")
    header = {"format": _FORMAT, "version": 1, "dsp_config_hash": m.dsp_config_hash, "normalization": m.normalization}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(r.to_json(), sort_keys=True) for r in m.records]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


def load_manifest(path, checked: bool = True) -> Manifest:
    path = Path(path)
    root = path.parent
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    if header.get("format") != _FORMAT:
        raise FormatError(f"{path}: missing manifest header")
    records = [UtteranceRecord.from_json(json.loads(ln), root) for ln in lines[1:]]
    if checked:
        for r in records:
            for name in _PATH_FIELDS:
                rel = getattr(r, name)
                if rel is not None and not (root / rel).exists():
                    raise FormatError(f"{r.id}: referenced file {rel} does not exist")
    return Manifest(records, header.get("dsp_config_hash"), header.get("normalization"), root)
