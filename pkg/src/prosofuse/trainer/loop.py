from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataprep import Manifest
from ..errors import ConfigError, TrainingError, UsageError
from ..model import (
    FFNN,
    ModelConfig,
    VisualSpeech,
    collate,
    load_checkpoint_file,
    load_module_tensors,
    module_tensors,
    save_checkpoint_file,
    tts_losses,
)
from ..numcore import AdamState, Module, adam_step, default_dtype, rng_from_seed
from .config import TASKS, TrainConfig, learning_rate
from .data import BatchSchedule, record_example, ffnn_targets
from .evaluate import EvalReport, evaluate_ffnn, evaluate_ped, evaluate_tts

MAX_EXACT_STEP = 2**24


@dataclass
class TrainHistory:
    steps: list[int] = field(default_factory=list)
    losses: list[dict[str, float]] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    evals: list[EvalReport] = field(default_factory=list)

    def totals(self) -> list[float]:
        return [l["total"] for l in self.losses]


def checkpoint_hash(task: str, cfg: ModelConfig) -> int:
    blob = json.dumps({"task": task, "model": cfg.to_json()}, sort_keys=True).encode()
    return zlib.crc32(blob) & 0xFFFFFFFF


def build_model(task: str, cfg: ModelConfig) -> Module:
    if task == "ffnn":
        return FFNN(cfg.d_f, cfg.ffnn_hidden, cfg.ffnn_dropout, cfg.init_seed)
    return VisualSpeech(cfg)


def save_checkpoint(model: Module, cfg: ModelConfig, path, task: str = "tts", adam: AdamState | None = None) -> None:
    """Params and, if given, Adam moments and step count, written atomically."""
    tensors = module_tensors(model)
    if adam is not None:
        if adam.step >= MAX_EXACT_STEP:
            raise ConfigError("step count too large to store exactly")
        for name, m in adam.m.items():
            tensors[f"adam.m.{name}"] = m
            tensors[f"adam.v.{name}"] = adam.v[name]
        tensors["adam.step"] = np.array([adam.step], dtype=np.float32)
    save_checkpoint_file(path, tensors, checkpoint_hash(task, cfg))


def load_checkpoint(path, cfg: ModelConfig, task: str = "tts") -> tuple[Module, AdamState | None]:
    """Rebuild the model for ``cfg`` and fill it; refuses checkpoints written for another config."""
    tensors = load_checkpoint_file(path, checkpoint_hash(task, cfg))
    model = build_model(task, cfg)
    load_module_tensors(model, tensors)
    adam = None
    if "adam.step" in tensors:
        dt = default_dtype()
        adam = AdamState(lr=0.0, step=int(tensors["adam.step"][0]))
        for key, arr in tensors.items():
            if key.startswith("adam.m."):
                name = key[len("adam.m."):]
                adam.m[name] = arr.astype(dt)
                adam.v[name] = tensors[f"adam.v.{name}"].astype(dt)
    return model, adam


class Trainer:
    """Owns the model, optimizer state and step counter for one task."""

    def __init__(self, task: str, manifest: Manifest, model_cfg: ModelConfig, train_cfg: TrainConfig):
        if task not in TASKS:
            raise UsageError(f"unknown task {task!r}; choose from {TASKS}")
        records = manifest.split("train")
        if not records:
            raise UsageError("manifest has no train records")
        self.task = task
        self.model_cfg = model_cfg
        self.cfg = train_cfg
        self.eval_records = manifest.split(train_cfg.eval_split)
        self.model = build_model(task, model_cfg)
        dt = default_dtype()
        if task == "ffnn":
            self._items = [(r.id, r.visual().astype(dt), ffnn_targets(r).astype(dt)) for r in records]
            lengths = [len(v) for _, v, _ in self._items]
        else:
            self._items = [record_example(r, model_cfg, with_mel=task == "tts") for r in records]
            lengths = [len(e.phone_ids) for e in self._items]
        self.schedule = BatchSchedule(lengths, train_cfg.batch_size, train_cfg.seed)
        self.params = self.model.params()
        self.adam = AdamState(lr=0.0)
        self.step = 0
        self.history = TrainHistory()
        self._log = None

    @property
    def d_model(self) -> int:
        return self.model_cfg.ffnn_hidden if self.task == "ffnn" else self.model_cfg.d_model

    def _ffnn_loss(self, idx, rng):
        items = [self._items[i] for i in idx]
        x = np.concatenate([v for _, v, _ in items])
        y = np.concatenate([t for _, _, t in items])
        w = np.concatenate([np.full(len(v), 1.0 / (len(v) * len(items))) for _, v, _ in items]).astype(x.dtype)[:, None]
        diff = self.model.forward(x, training=True, rng=rng) - y
        per = (w * diff * diff).sum(axis=0)
        self.model.backward(2.0 * w * diff)
        terms = {"pitch": float(per[0]), "energy": float(per[1])}
        terms["total"] = terms["pitch"] + terms["energy"]
        return terms, [i for i, _, _ in items]

    def _tts_loss(self, idx, rng):
        batch = collate([self._items[i] for i in idx])
        with_mel = self.task == "tts"
        result = self.model.forward(batch, teacher_forcing=True, training=True, rng=rng, with_decoder=with_mel)
        terms, dped, dmel = tts_losses(self.model, batch, result, with_mel=with_mel)
        if math.isfinite(terms["total"]):
            self.model.backward(dped, dmel)
        return terms, batch.ids

    def train_step(self) -> dict[str, float]:
        step = self.step + 1
        idx = self.schedule.indices(step)
        rng = rng_from_seed(self.cfg.seed, 7, step)
        t0 = time.perf_counter()
        lossfn = self._ffnn_loss if self.task == "ffnn" else self._tts_loss
        terms, ids = lossfn(idx, rng)
        if not math.isfinite(terms["total"]):
            self._dump_nonfinite(step, ids, terms)
            raise TrainingError(f"non-finite loss at step {step}; batch ids: {', '.join(ids)}")
        self.adam.lr = learning_rate(self.cfg, step, self.d_model)
        adam_step(self.params, self.adam)
        self.step = step
        h = self.history
        h.steps.append(step)
        h.losses.append(terms)
        h.lrs.append(self.adam.lr)
        h.seconds.append(time.perf_counter() - t0)
        self._write_log({"step": step, "lr": self.adam.lr, "loss": terms, "seconds": h.seconds[-1]})
        return terms

    def _dump_nonfinite(self, step, ids, terms) -> None:
        if self.cfg.log_path is None:
            return
        dump = Path(self.cfg.log_path).with_suffix(".nonfinite.json")
        dump.write_text(json.dumps({"step": step, "batch_ids": list(ids), "loss": {k: repr(v) for k, v in terms.items()}},
                                   sort_keys=True) + "\n")

    def _write_log(self, entry: dict) -> None:
        if self.cfg.log_path is None:
            return
        if not self.cfg.log_timestamps:
            entry = {k: v for k, v in entry.items() if k != "seconds"}
        if self._log is None:
            self._log = open(self.cfg.log_path, "a" if self.step > 1 else "w", encoding="utf-8")
        self._log.write(json.dumps(entry, sort_keys=True) + "\n")
        self._log.flush()

    def evaluate(self) -> EvalReport | None:
        if not self.eval_records:
            return None
        if self.task == "ffnn":
            return evaluate_ffnn(self.model, self.eval_records, None, self.step)
        if self.task == "ped":
            return evaluate_ped(self.model, self.eval_records, None, self.step)
        return evaluate_tts(self.model, self.eval_records, None, gt_ped=True, step=self.step)

    def run(self, until: int | None = None) -> TrainHistory:
        until = self.cfg.max_steps if until is None else until
        try:
            while self.step < until:
                self.train_step()
                if self.cfg.eval_every and self.step % self.cfg.eval_every == 0:
                    report = self.evaluate()
                    if report is not None:
                        self.history.evals.append(report)
                        self._write_log({"step": self.step, "eval": report.to_json()})
                if (self.cfg.checkpoint_path and self.cfg.checkpoint_every
                        and self.step % self.cfg.checkpoint_every == 0):
                    self.save(self.cfg.checkpoint_path)
            if self.cfg.checkpoint_path:
                self.save(self.cfg.checkpoint_path)
        finally:
            if self._log is not None:
                self._log.close()
                self._log = None
        return self.history

    def save(self, path) -> None:
        save_checkpoint(self.model, self.model_cfg, path, self.task, self.adam)

    def resume(self, path) -> None:
        model, adam = load_checkpoint(path, self.model_cfg, self.task)
        load_module_tensors(self.model, module_tensors(model))
        if adam is None:
            raise UsageError(f"{path} has no optimizer state to resume from")
        self.adam = adam
        self.step = adam.step


def train(task: str, manifest: Manifest, model_cfg: ModelConfig, train_cfg: TrainConfig, resume_from=None):
    """Train from scratch (or from a checkpoint) up to ``max_steps``; returns (model, history)."""
    trainer = Trainer(task, manifest, model_cfg, train_cfg)
    if resume_from is not None:
        trainer.resume(resume_from)
    history = trainer.run()
    return trainer.model, history
