"""Command-line entry point.

Exit codes: 0 success, 1 user error (bad flags, config or input files),
2 internal error (numerical failure or a bug). Options come from an optional
JSON config file with sections model/train/dsp/filter/synth; explicit flags
override it, and PROSOFUSE_SEED supplies the seed when neither sets one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..dataprep import (
    FilterConfig,
    Manifest,
    SynthConfig,
    compute_stats,
    filter_outliers,
    ingest_alignment,
    load_manifest,
    materialize,
    normalize_targets,
    save_manifest,
    split_manifest,
    synth_dataset,
)
from ..dataprep.manifest import _PATH_FIELDS
from ..dsp import DspConfig, extract_energy, extract_pitch, mel_spectrogram, phone_average, read_wav, resample
from ..errors import ConfigError, NonFiniteError, ProsofuseError, TrainingError, UsageError
from ..model import ModelConfig, collate, run_gradient_suite
from ..trainer import (
    EvalReport,
    TrainConfig,
    Trainer,
    evaluate_ffnn,
    evaluate_ped,
    evaluate_tts,
    load_checkpoint,
    model_config_for,
    record_example,
)
from .plot import ContourPlot, Series, plot_contour, read_series_csv
from .report import report_table

ENV_SEED = "PROSOFUSE_SEED"
SECTIONS = ("model", "train", "dsp", "filter", "synth")
GRAD_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def load_config(path) -> dict:
    if path is None:
        return {s: {} for s in SECTIONS}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(obj) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}; allowed {list(SECTIONS)}")
    return {s: dict(obj.get(s, {})) for s in SECTIONS}


def _build(cls, section: dict, overrides: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown {name} config keys {sorted(unknown)}")
    kw = dict(section)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("styles", "phonemes", "bin_range", "pitch_norm", "energy_norm", "log_duration_norm"):
        if key in kw and isinstance(kw[key], list):
            kw[key] = tuple(kw[key])
    return cls(**kw)


def resolve_seed(flag, section: dict) -> int:
    if flag is not None:
        return flag
    if "seed" in section:
        return int(section["seed"])
    env = os.environ.get(ENV_SEED)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{ENV_SEED} must be an integer, got {env!r}") from None
    return 0


def _relocate(m: Manifest, out_path: Path) -> Manifest:
    """Rewrite file references so they resolve from ``out_path``'s directory."""
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_dir = out_path.parent.resolve()
    out = m.copy()
    for r in out.records:
        base = Path(r.root).resolve() if r.root is not None else Path.cwd()
        for name in _PATH_FIELDS:
            rel = getattr(r, name)
            if rel is not None:
                setattr(r, name, os.path.relpath(base / rel, out_dir))
        r.root = out_dir
    out.root = out_dir
    return out


def _write_manifest(m: Manifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(_relocate(m, path), path)


def _dump_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)


# prep ---------------------------------------------------------------------

def cmd_prep_synth(args, conf) -> int:
    seed = resolve_seed(args.seed, conf["synth"])
    overrides = {
        "seed": seed, "n_train": args.n_train, "n_val": args.n_val, "n_test": args.n_test,
        "style_mode": args.style_mode, "pitch_gain": args.pitch_gain, "energy_gain": args.energy_gain,
        "duration_gain": args.duration_gain, "visual_dim": args.visual_dim,
        "with_mel": False if args.no_mel else None,
    }
    cfg = _build(SynthConfig, conf["synth"], overrides, "synth")
    m = synth_dataset(cfg)
    out = Path(args.out)
    materialize(m, out)
    save_manifest(m, out / "manifest.jsonl")
    print(f"wrote {len(m)} utterances to {out / 'manifest.jsonl'}")
    return 0


def cmd_prep_stats(args, conf) -> int:
    m = load_manifest(args.manifest)
    stats = compute_stats(m)
    _dump_json(stats.to_json(), args.out)
    for w in stats.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.normalized:
        _write_manifest(normalize_targets(m, stats), args.normalized)
    print(f"pitch mean {stats.pitch.mean:.4f} std {stats.pitch.std:.4f} over {stats.pitch.count} phones")
    return 0


def cmd_prep_filter(args, conf) -> int:
    from ..dataprep import DatasetStats

    m = load_manifest(args.manifest)
    stats = DatasetStats.from_json(json.loads(Path(args.stats).read_text())) if args.stats else compute_stats(m)
    cfg = _build(FilterConfig, conf["filter"], {"pitch_max": args.pitch_max, "k_sigma": args.k_sigma}, "filter")
    kept, removed = filter_outliers(m, stats, cfg)
    _write_manifest(kept, args.out)
    if args.removed:
        lines = [json.dumps({"id": r.id, "rules": r.rules, "details": r.details}, sort_keys=True) for r in removed]
        Path(args.removed).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    print(f"kept {len(kept)} of {len(m)} utterances; removed {len(removed)}")
    return 0


def cmd_prep_split(args, conf) -> int:
    m = load_manifest(args.manifest)
    try:
        ratios = tuple(float(x) for x in args.ratios.split(","))
    except ValueError:
        raise UsageError(f"--ratios must be three comma-separated numbers, got {args.ratios!r}") from None
    out = split_manifest(m, ratios, resolve_seed(args.seed, {}))
    _write_manifest(out, args.out)
    counts = {s: len(out.split(s)) for s in ("train", "val", "test")}
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


# features -----------------------------------------------------------------

def cmd_features_extract(args, conf) -> int:
    cfg = _build(DspConfig, conf["dsp"], {"sample_rate": args.sample_rate}, "dsp")
    out_path = Path(args.out)
    out = _relocate(load_manifest(args.manifest), out_path)
    done = 0
    for r in out.records:
        if r.wav_path is None:
            continue
        wav = resample(read_wav(r.root / r.wav_path), cfg.sample_rate)
        mel = mel_spectrogram(wav, cfg)
        pitch = extract_pitch(wav, cfg)
        energy = extract_energy(wav, cfg)
        if r.alignment_path is not None:
            r.durations = ingest_alignment(r.root / r.alignment_path, cfg, len(mel))
        elif r.n_frames != len(mel):
            raise UsageError(f"{r.id}: durations cover {r.n_frames} frames but the audio gives {len(mel)}; "
                             "add an alignment")
        r.pitch = [float(x) for x in phone_average(pitch, r.durations, voiced_only=True)]
        r.energy = [float(x) for x in phone_average(energy, r.durations)]
        r.arrays["mel"], r.arrays["pitch_contour"] = mel, pitch
        r.mel_path = r.pitch_contour_path = None
        done += 1
    out.dsp_config_hash = cfg.config_hash()
    materialize(out, out_path.parent)
    save_manifest(out, out_path)
    print(f"extracted features for {done} utterances")
    return 0


# train / eval -------------------------------------------------------------

def _model_overrides(args) -> dict:
    return {
        "variant": getattr(args, "variant", None), "d_model": args.d_model, "heads": args.heads,
        "encoder_layers": args.encoder_layers, "decoder_layers": args.decoder_layers,
        "ffn_hidden": args.ffn_hidden, "conv_kernel": args.conv_kernel, "predictor_hidden": args.predictor_hidden,
    }


def cmd_train(args, conf) -> int:
    m = load_manifest(args.manifest)
    model_kw = {k: tuple(v) if isinstance(v, list) else v for k, v in conf["model"].items()}
    unknown = set(model_kw) - {f.name for f in fields(ModelConfig)}
    if unknown:
        raise ConfigError(f"unknown model config keys {sorted(unknown)}")
    model_kw.update({k: v for k, v in _model_overrides(args).items() if v is not None})
    cfg = model_config_for(m, **model_kw)
    seed = resolve_seed(args.seed, conf["train"])
    tc = _build(TrainConfig, conf["train"], {
        "seed": seed, "max_steps": args.steps, "batch_size": args.batch_size, "lr_mode": args.lr_mode,
        "warmup": args.warmup, "lr_scale": args.lr_scale, "eval_every": args.eval_every,
        "log_path": args.log, "checkpoint_path": args.out,
        "log_timestamps": False if args.no_timestamps else None,
    }, "train")
    if args.task == "ffnn" and "lr_mode" not in conf["train"] and args.lr_mode is None:
        tc = replace(tc, lr_mode="fixed")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    _dump_json({"task": args.task, "model": cfg.to_json()}, _sidecar(args.out))
    trainer = Trainer(args.task, m, cfg, tc)
    if args.resume:
        trainer.resume(args.resume)
    history = trainer.run()
    last = history.losses[-1] if history.losses else {}
    print(f"step {trainer.step} " + " ".join(f"{k}={v:.6f}" for k, v in sorted(last.items())))
    return 0


def _sidecar(ckpt) -> Path:
    return Path(str(ckpt) + ".json")


def load_trained(ckpt):
    """(model, config, task) from a checkpoint and its JSON sidecar."""
    side = _sidecar(ckpt)
    if not side.exists():
        raise UsageError(f"{ckpt}: missing config sidecar {side.name}")
    meta = json.loads(side.read_text(encoding="utf-8"))
    cfg = ModelConfig.from_json(meta["model"])
    model, _ = load_checkpoint(ckpt, cfg, meta["task"])
    return model, cfg, meta["task"]


def cmd_eval(args, conf) -> int:
    m = load_manifest(args.manifest)
    reports: list[EvalReport] = []
    for ckpt in args.checkpoint:
        model, cfg, task = load_trained(ckpt)
        if task == "ffnn":
            if args.kind != "ped":
                raise UsageError(f"{ckpt}: FFNN checkpoints only support 'eval ped'")
            reports.append(evaluate_ffnn(model, m, args.split))
        elif args.kind == "ped":
            reports.append(evaluate_ped(model, m, args.split))
        else:
            reports.append(evaluate_tts(model, m, args.split, gt_ped=args.gt_ped))
    text, csv_text = report_table(reports)
    sys.stdout.write(text)
    for r in reports:
        for note in r.notes:
            print(f"note: {note}", file=sys.stderr)
    if args.out:
        _dump_json([r.to_json() for r in reports], args.out)
    if args.table:
        Path(args.table).write_text(text, encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    return 0


# gradcheck / plot ---------------------------------------------------------

def cmd_gradcheck(args, conf) -> int:
    results = run_gradient_suite(seed=resolve_seed(args.seed, {}))
    worst = 0.0
    for name, err in results.items():
        status = "ok" if err < args.tolerance else "FAIL"
        print(f"{name:32s} {err:.3e} {status}")
        worst = max(worst, err)
    print(f"max relative error {worst:.3e} (tolerance {args.tolerance:g})")
    return 0 if worst < args.tolerance else 2


def _checkpoint_series(args) -> tuple[list[Series], str]:
    m = load_manifest(args.manifest)
    rec = next((r for r in m if r.id == args.id), None)
    if rec is None:
        raise UsageError(f"utterance {args.id!r} not in manifest")
    labels = args.labels.split(",") if args.labels else None
    if labels is not None and len(labels) != len(args.checkpoint or []):
        raise UsageError("--labels needs one name per --checkpoint")
    target = args.target
    norm = (m.normalization or {}).get(target, [0.0, 1.0])
    phone_ref = np.asarray(getattr(rec, target), dtype=np.float64)
    voiced = np.asarray(rec.voiced, dtype=bool) if (rec.voiced is not None and target == "pitch") else None
    raw_ref = phone_ref * norm[1] + norm[0]
    if voiced is not None:
        raw_ref = np.where(voiced, raw_ref, 0.0)
    if target == "pitch" and (rec.pitch_contour_path or "pitch_contour" in rec.arrays):
        gt = rec.pitch_contour()
    else:
        gt = np.repeat(raw_ref, rec.durations)
    mask = gt > 0 if (target == "pitch" and np.any(gt > 0) and np.all(gt >= 0)) else None
    series = [Series("Ground truth", gt, mask)]
    for k, ckpt in enumerate(args.checkpoint or []):
        model, cfg, task = load_trained(ckpt)
        if task == "ffnn":
            raise UsageError(f"{ckpt}: contour plots need a ped or tts checkpoint")
        batch = collate([record_example(rec, cfg)])
        ped = model.forward(batch, teacher_forcing=True, training=False, with_decoder=False).ped
        mean, std = cfg.pitch_norm if target == "pitch" else cfg.energy_norm
        values = np.repeat(getattr(ped, target)[0].astype(np.float64) * std + mean, rec.durations)
        series.append(Series(labels[k] if labels else cfg.variant, values, mask))
    return series, target


def cmd_plot_contour(args, conf) -> int:
    if args.input:
        series = read_series_csv(Path(args.input).read_text(encoding="utf-8"))
        target = args.target
    elif args.manifest and args.id:
        series, target = _checkpoint_series(args)
    else:
        raise UsageError("plot contour needs --input, or --manifest with --id")
    y_label = args.y_label or ("F0 (Hz)" if target == "pitch" else "energy")
    title = args.title if args.title is not None else f"{target.capitalize()} contour"
    svg, csv_text = plot_contour(ContourPlot(series, title=title, y_label=y_label))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(svg)
    out.with_suffix(".csv").write_text(csv_text, encoding="utf-8")
    print(f"wrote {out.name} and {out.with_suffix('.csv').name} ({len(series)} series)")
    return 0


# parser -------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", help="JSON config file with sections " + "/".join(SECTIONS))
    p.add_argument("--seed", type=int, help=f"random seed (falls back to the config file, then ${ENV_SEED})")
    p.add_argument("--no-timestamps", action="store_true", help="omit wall-clock fields from logs")
    return p


def _model_flags(p) -> None:
    for flag in ("--d-model", "--heads", "--encoder-layers", "--decoder-layers", "--ffn-hidden",
                 "--conv-kernel", "--predictor-hidden"):
        p.add_argument(flag, type=int)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    root = _Parser(prog="prosofuse", description="Visual-text prosody modelling toolkit.")
    root.add_argument("--version", action="version", version=f"prosofuse {__version__}")
    sub = root.add_subparsers(dest="command", metavar="COMMAND", required=True, parser_class=_Parser)

    prep = sub.add_parser("prep", help="corpus preparation").add_subparsers(dest="action", metavar="ACTION", required=True)
    p = prep.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    for flag in ("--n-train", "--n-val", "--n-test", "--visual-dim"):
        p.add_argument(flag, type=int)
    for flag in ("--pitch-gain", "--energy-gain", "--duration-gain"):
        p.add_argument(flag, type=float)
    p.add_argument("--style-mode", choices=["utterance", "frame"])
    p.add_argument("--no-mel", action="store_true")
    p.set_defaults(func=cmd_prep_synth)

    p = prep.add_parser("stats", parents=[common], help="global and per-phoneme statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="stats JSON path")
    p.add_argument("--normalized", help="also write a z-normalized manifest here")
    p.set_defaults(func=cmd_prep_stats)

    p = prep.add_parser("filter", parents=[common], help="drop outlier utterances")
    p.add_argument("--manifest", required=True)
    p.add_argument("--stats", help="stats JSON (computed from the manifest if omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--pitch-max", type=float)
    p.add_argument("--k-sigma", type=float)
    p.add_argument("--removed", help="JSONL report of removed utterances")
    p.set_defaults(func=cmd_prep_filter)

    p = prep.add_parser("split", parents=[common], help="assign train/val/test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.set_defaults(func=cmd_prep_split)

    feats = sub.add_parser("features", help="acoustic feature extraction").add_subparsers(
        dest="action", metavar="ACTION", required=True)
    p = feats.add_parser("extract", parents=[common], help="mel, pitch and energy from WAV files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output manifest path")
    p.add_argument("--sample-rate", type=int)
    p.set_defaults(func=cmd_features_extract)

    tr = sub.add_parser("train", help="train a model").add_subparsers(dest="task", metavar="TASK", required=True)
    for task, text in (("ffnn", "visual-only FFNN regressor"), ("ped", "PED predictors, decoder detached"),
                       ("tts", "full acoustic model")):
        p = tr.add_parser(task, parents=[common], help=text)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True, help="checkpoint path; a .json sidecar is written next to it")
        if task != "ffnn":
            p.add_argument("--variant", choices=["TextOnly", "PoolFusion", "CrossAttnFusion"])
        p.add_argument("--steps", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr-mode", choices=["noam", "fixed"])
        p.add_argument("--warmup", type=int)
        p.add_argument("--lr-scale", type=float)
        p.add_argument("--eval-every", type=int)
        p.add_argument("--log", help="JSONL training log")
        p.add_argument("--resume", help="checkpoint to continue from")
        _model_flags(p)
        p.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate checkpoints").add_subparsers(dest="kind", metavar="KIND", required=True)
    for kind in ("ped", "tts"):
        p = ev.add_parser(kind, parents=[common], help=f"{kind.upper()} metrics table")
        p.add_argument("--manifest", required=True)
        p.add_argument("--checkpoint", action="append", required=True, help="repeat for several table rows")
        p.add_argument("--split", default="val")
        if kind == "tts":
            p.add_argument("--gt-ped", action="store_true", help="synthesize with ground-truth pitch/energy/duration")
        p.add_argument("--out", help="reports JSON")
        p.add_argument("--table", help="aligned text table")
        p.add_argument("--csv", help="full-precision CSV")
        p.set_defaults(func=cmd_eval, gt_ped=False)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--tolerance", type=float, default=GRAD_TOLERANCE)
    p.set_defaults(func=cmd_gradcheck)

    pl = sub.add_parser("plot", help="figures").add_subparsers(dest="action", metavar="ACTION", required=True)
    p = pl.add_parser("contour", parents=[common], help="pitch or energy contour SVG with CSV sidecar")
    p.add_argument("--out", required=True, help="SVG path; the CSV goes next to it")
    p.add_argument("--input", help="series CSV: frame column then one column per series, empty = unvoiced")
    p.add_argument("--manifest")
    p.add_argument("--id", help="utterance id to plot")
    p.add_argument("--checkpoint", action="append", help="model checkpoint to add as a series")
    p.add_argument("--labels", help="comma-separated series names for the checkpoints")
    p.add_argument("--target", choices=["pitch", "energy"], default="pitch")
    p.add_argument("--title")
    p.add_argument("--y-label")
    p.set_defaults(func=cmd_plot_contour)
    return root


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        conf = load_config(getattr(args, "config", None))
        return args.func(args, conf)
    except (NonFiniteError, TrainingError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except (ProsofuseError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(run())
