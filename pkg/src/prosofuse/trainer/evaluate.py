from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataprep import Manifest, UtteranceRecord
from ..dsp import log_f0_rmse, mcd
from ..errors import MetricError, UsageError
from ..model import FFNN, VisualSpeech, collate
from .data import log_durations, record_example, ffnn_targets

EVAL_BATCH = 64


@dataclass
class EvalReport:
    """One evaluation row. Metrics that were not computed stay None."""

    variant: str
    step: int = 0
    mode: str = "predicted-PED"
    pitch_mse: float | None = None
    energy_mse: float | None = None
    duration_mse: float | None = None
    mcd_db: float | None = None
    log_f0_rmse: float | None = None
    count: int = 0
    notes: list[str] = field(default_factory=list)

    METRICS = ("pitch_mse", "energy_mse", "duration_mse", "mcd_db", "log_f0_rmse")

    def __post_init__(self):
        for name in self.METRICS:
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise MetricError(f"{name} must be finite and nonnegative, got {v}")

    def metrics(self) -> dict[str, float | None]:
        return {k: getattr(self, k) for k in self.METRICS}

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(**obj)


def _records(data, split):
    if isinstance(data, Manifest):
        recs = data.split(split) if split else list(data.records)
    else:
        recs = list(data)
    if not recs:
        raise UsageError(f"no records to evaluate (split {split!r})")
    return recs


def _seq_mse(pred: np.ndarray, target: np.ndarray) -> float:
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(d * d))


def sequence_mean_mse(sequences) -> float:
    """MSE of predicting each sequence by its own mean, averaged over sequences."""
    per = []
    for s in sequences:
        s = np.asarray(s, dtype=np.float64)
        if s.size == 0:
            warnings.warn("skipping empty sequence in mean baseline", stacklevel=2)
            continue
        per.append(float(np.mean((s - s.mean()) ** 2)))
    if not per:
        raise MetricError("mean baseline needs at least one nonempty sequence")
    return float(np.mean(per))


def mean_baseline(data, target: str = "pitch", split: str | None = "val", level: str = "visual") -> float:
    """Per-sequence mean predictor MSE.

    ``level="visual"`` uses the chunk-averaged targets aligned to visual
    rows (the FFNN's targets); ``"phone"`` uses the phone-level values.
    """
    col = {"pitch": 0, "energy": 1}
    recs = _records(data, split)
    if level == "visual":
        if target not in col:
            raise UsageError(f"visual-level baseline covers pitch and energy, not {target!r}")
        return sequence_mean_mse(ffnn_targets(r)[:, col[target]] for r in recs)
    if level != "phone":
        raise UsageError(f"unknown baseline level {level!r}")
    if target == "duration":
        return sequence_mean_mse(log_durations(r) for r in recs)
    if target not in col:
        raise UsageError(f"unknown target {target!r}")
    return sequence_mean_mse(getattr(r, target) for r in recs)


def evaluate_ffnn(net: FFNN, data, split: str | None = "val", step: int = 0) -> EvalReport:
    recs = _records(data, split)
    pitch, energy = [], []
    for r in recs:
        y = ffnn_targets(r)
        pred = net.forward(r.visual(), training=False).astype(np.float64)
        pitch.append(_seq_mse(pred[:, 0], y[:, 0]))
        energy.append(_seq_mse(pred[:, 1], y[:, 1]))
    return EvalReport("FFNN", step, "visual-only", float(np.mean(pitch)), float(np.mean(energy)), count=len(recs))


def _batches(recs, size):
    for i in range(0, len(recs), size):
        yield recs[i : i + size]


def evaluate_ped(model: VisualSpeech, data, split: str | None = "val", step: int = 0) -> EvalReport:
    """Per-utterance MSE of PED predictions in model target units, averaged over utterances."""
    recs = _records(data, split)
    per = {"pitch": [], "energy": [], "log_duration": []}
    for chunk in _batches(recs, EVAL_BATCH):
        batch = collate([record_example(r, model.cfg) for r in chunk])
        ped = model.forward(batch, teacher_forcing=True, training=False, with_decoder=False).ped
        for i in range(batch.size):
            m = batch.phone_mask[i]
            for name in per:
                per[name].append(_seq_mse(getattr(ped, name)[i][m], getattr(batch, name)[i][m]))
    return EvalReport(
        model.cfg.variant, step, "predicted-PED",
        float(np.mean(per["pitch"])), float(np.mean(per["energy"])), float(np.mean(per["log_duration"])),
        count=len(recs),
    )


def evaluate_tts(model: VisualSpeech, data, split: str | None = "val", gt_ped: bool = False, step: int = 0) -> EvalReport:
    """Mel quality via DTW-aligned MCD; log-F0 RMSE only when ground-truth PED drives synthesis."""
    recs = _records(data, split)
    base = evaluate_ped(model, recs, None, step)
    mcds, f0s, notes = [], [], []
    p_mean, p_std = model.cfg.pitch_norm
    for chunk in _batches(recs, EVAL_BATCH):
        batch = collate([record_example(r, model.cfg, with_mel=True) for r in chunk])
        res = model.forward(batch, teacher_forcing=gt_ped, training=False)
        for i, r in enumerate(chunk):
            pred_mel = res.mel[i][res.mel_mask[i]]
            mcds.append(mcd(pred_mel.astype(np.float64), batch.mel[i][batch.mel_mask[i]].astype(np.float64)))
            if gt_ped:
                hz = _contour_hz(res.ped.pitch[i][batch.phone_mask[i]], r, p_mean, p_std)
                try:
                    f0s.append(log_f0_rmse(hz, _reference_contour(r, p_mean, p_std)))
                except MetricError as exc:
                    notes.append(f"{r.id}: log-F0 skipped ({exc})")
    if not gt_ped:
        notes.append("log-F0 RMSE skipped: predicted durations do not align frames with the reference")
    return EvalReport(
        model.cfg.variant, step, "GT-PED" if gt_ped else "predicted-PED",
        base.pitch_mse, base.energy_mse, base.duration_mse,
        mcd_db=float(np.mean(mcds)),
        log_f0_rmse=float(np.mean(f0s)) if f0s else None,
        count=len(recs), notes=notes,
    )


def _contour_hz(pred: np.ndarray, r: UtteranceRecord, mean: float, std: float) -> np.ndarray:
    hz = pred.astype(np.float64) * std + mean
    if r.voiced is not None:
        hz = np.where(r.voiced, hz, 0.0)
    return np.repeat(hz, r.durations)


def _reference_contour(r: UtteranceRecord, mean: float, std: float) -> np.ndarray:
    if r.pitch_contour_path is not None or "pitch_contour" in r.arrays:
        return r.pitch_contour()
    return _contour_hz(np.asarray(r.pitch), r, mean, std)
