import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from prosofuse.cli import ContourPlot, Series, format_2dp, nice_ticks, plot_contour, read_series_csv, report_table, run
from prosofuse.cli import app as cli_main
from prosofuse.dsp import Waveform, write_wav
from prosofuse.trainer import EvalReport

SVG_NS = "{http://www.w3.org/2000/svg}"
TINY_FLAGS = ["--d-model", "8", "--heads", "2", "--encoder-layers", "1", "--decoder-layers", "1",
              "--ffn-hidden", "8", "--predictor-hidden", "8", "--batch-size", "4"]


def tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def synth(tmp_path, name="corpus", *extra):
    out = tmp_path / name
    code = run(["prep", "synth", "--out", str(out), "--n-train", "12", "--n-val", "4", "--visual-dim", "4",
                "--no-mel", *extra])
    assert code == 0
    return out / "manifest.jsonl"


class TestExitCodes:
    def test_help(self, capsys):
        assert run(["--help"]) == 0
        assert "prep" in capsys.readouterr().out

    def test_subcommand_help(self):
        assert run(["train", "ped", "--help"]) == 0

    def test_unknown_flag_named(self, tmp_path, capsys):
        assert run(["prep", "synth", "--out", str(tmp_path), "--frobnicate", "3"]) == 1
        assert "--frobnicate" in capsys.readouterr().err

    def test_missing_command(self):
        assert run([]) == 1

    def test_missing_file_is_user_error(self, tmp_path):
        assert run(["prep", "stats", "--manifest", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "s")]) == 1

    def test_bad_config_section(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text('{"optimizer": {}}')
        assert run(["prep", "synth", "--config", str(conf), "--out", str(tmp_path / "o")]) == 1

    def test_internal_error(self, tmp_path, monkeypatch):
        def boom(args, conf):
            raise RuntimeError("bug")

        monkeypatch.setattr(cli_main, "cmd_prep_synth", boom)
        assert run(["prep", "synth", "--out", str(tmp_path)]) == 2

    @pytest.mark.parametrize("worst,code", [(1e-6, 0), (3e-4, 2)])
    def test_gradcheck_threshold(self, monkeypatch, worst, code):
        monkeypatch.setattr(cli_main, "run_gradient_suite", lambda seed=0: {"linear": 1e-9, "fusion": worst})
        assert run(["gradcheck"]) == code


class TestDeterminism:
    def test_synth_identical_files(self, tmp_path):
        synth(tmp_path, "a", "--seed", "7")
        synth(tmp_path, "b", "--seed", "7")
        a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
        assert a == b and len(a) > 1

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        synth(tmp_path, "flag", "--seed", "5")
        monkeypatch.setenv("PROSOFUSE_SEED", "5")
        synth(tmp_path, "env")
        assert tree(tmp_path / "flag") == tree(tmp_path / "env")

    def test_config_then_flag(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"synth": {"n_train": 3, "n_val": 1, "seed": 2}}))
        run(["prep", "synth", "--config", str(conf), "--out", str(tmp_path / "c"), "--n-val", "2", "--no-mel"])
        lines = (tmp_path / "c" / "manifest.jsonl").read_text().splitlines()
        assert len(lines) == 1 + 3 + 2


class TestPipeline:
    def test_stats_train_eval_plot(self, tmp_path):
        raw = synth(tmp_path)
        norm = tmp_path / "norm" / "manifest.jsonl"
        assert run(["prep", "stats", "--manifest", str(raw), "--out", str(tmp_path / "stats.json"),
                    "--normalized", str(norm)]) == 0
        ck = tmp_path / "ck" / "ped.psfz"
        log = tmp_path / "ck" / "log.jsonl"
        assert run(["train", "ped", "--manifest", str(norm), "--out", str(ck), "--steps", "4", "--log", str(log),
                    "--no-timestamps", *TINY_FLAGS]) == 0
        assert all("seconds" not in json.loads(l) for l in log.read_text().splitlines())
        assert json.loads(Path(str(ck) + ".json").read_text())["task"] == "ped"
        report = tmp_path / "r.json"
        assert run(["eval", "ped", "--manifest", str(norm), "--checkpoint", str(ck), "--out", str(report)]) == 0
        rows = json.loads(report.read_text())
        assert len(rows) == 1 and rows[0]["variant"] == "CrossAttnFusion"
        uid = json.loads(norm.read_text().splitlines()[1])["id"]
        svg = tmp_path / "p" / "pitch.svg"
        assert run(["plot", "contour", "--manifest", str(norm), "--id", uid, "--checkpoint", str(ck),
                    "--labels", "fused", "--out", str(svg)]) == 0
        assert len(ET.parse(svg).getroot().findall(f"{SVG_NS}g[@class='series']")) == 2
        assert svg.with_suffix(".csv").read_text().startswith("frame,Ground truth,fused")

    def test_filter_and_split(self, tmp_path):
        raw = synth(tmp_path)
        kept = tmp_path / "f" / "manifest.jsonl"
        assert run(["prep", "filter", "--manifest", str(raw), "--out", str(kept),
                    "--removed", str(tmp_path / "f" / "removed.jsonl")]) == 0
        split = tmp_path / "s" / "manifest.jsonl"
        assert run(["prep", "split", "--manifest", str(kept), "--out", str(split), "--seed", "1"]) == 0
        records = [json.loads(l) for l in split.read_text().splitlines()[1:]]
        assert {r["split"] for r in records} <= {"train", "val", "test"}
        assert all(not Path(r["visual_feat_path"]).is_absolute() for r in records)

    def test_bad_ratios(self, tmp_path):
        raw = synth(tmp_path)
        assert run(["prep", "split", "--manifest", str(raw), "--out", str(tmp_path / "s.jsonl"),
                    "--ratios", "a,b"]) == 1

    def test_features_from_wav(self, tmp_path):
        sr = 16000
        t = np.arange(int(0.6 * sr)) / sr
        x = np.where(t < 0.3, 0.5 * np.sin(2 * np.pi * 150 * t), 0.3 * np.sin(2 * np.pi * 220 * t))
        src = tmp_path / "src"
        src.mkdir()
        write_wav(src / "a.wav", Waveform(x.astype(np.float32), sr))
        (src / "a.tsv").write_text("a\t0.0\t0.3\nb\t0.3\t0.6\n")
        header = {"format": "prosofuse-manifest", "version": 1, "dsp_config_hash": None, "normalization": None}
        rec = {"id": "u1", "phones": ["a", "b"], "durations": [1, 1], "pitch": [0, 0], "energy": [0, 0],
               "wav_path": "a.wav", "alignment_path": "a.tsv"}
        (src / "manifest.jsonl").write_text(json.dumps(header) + "\n" + json.dumps(rec) + "\n")
        out = tmp_path / "feat" / "manifest.jsonl"
        assert run(["features", "extract", "--manifest", str(src / "manifest.jsonl"), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert json.loads(lines[0])["dsp_config_hash"]
        r = json.loads(lines[1])
        assert r["pitch"] == pytest.approx([150.0, 220.0], rel=0.01)
        assert r["energy"][0] > r["energy"][1] > 0
        assert (out.parent / r["mel_path"]).exists() and r["wav_path"] == "../src/a.wav"


def four_series():
    n = 60
    i = np.arange(n)
    voiced = (i % 17) > 2
    return [Series(name, 120 + 30 * np.sin(i / (5 + k)) + k, voiced)
            for k, name in enumerate(["Ground truth", "TextOnly", "PoolFusion", "CrossAttnFusion"])]


class TestPlot:
    def test_well_formed_four_groups(self):
        svg, _ = plot_contour(ContourPlot(four_series(), title="Pitch", y_label="F0 (Hz)"))
        assert svg.startswith(b"<?xml") and b"<!DOCTYPE svg PUBLIC" in svg
        root = ET.fromstring(svg)
        assert root.tag == f"{SVG_NS}svg" and root.get("version") == "1.1"
        groups = root.findall(f"{SVG_NS}g[@class='series']")
        assert [g.find(f"{SVG_NS}title").text for g in groups] == ["Ground truth", "TextOnly", "PoolFusion",
                                                                   "CrossAttnFusion"]

    def test_unvoiced_breaks_line(self):
        svg, _ = plot_contour(ContourPlot(four_series()[:1]))
        group = ET.fromstring(svg).find(f"{SVG_NS}g[@class='series']")
        # voiced runs are frames 3..16, 20..33, 37..50, 54..59
        assert len(group.findall(f"{SVG_NS}polyline")) == 4

    def test_byte_identical_and_relocatable(self, tmp_path):
        a, csv_a = plot_contour(ContourPlot(four_series()))
        b, csv_b = plot_contour(ContourPlot(four_series()))
        assert a == b and csv_a == csv_b
        assert str(tmp_path).encode() not in a and b"file:" not in a

    def test_csv_round_trip(self):
        series = four_series()
        _, text = plot_contour(ContourPlot(series))
        back = read_series_csv(text)
        for s, r in zip(series, back):
            assert r.label == s.label
            np.testing.assert_array_equal(r.drawn(), s.drawn())
            np.testing.assert_array_equal(r.values[r.drawn()], s.values[s.drawn()])

    def test_cli_from_csv(self, tmp_path):
        _, text = plot_contour(ContourPlot(four_series()))
        src = tmp_path / "in.csv"
        src.write_text(text)
        for name in ("a.svg", "b.svg"):
            assert run(["plot", "contour", "--input", str(src), "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_nice_ticks(self):
        assert nice_ticks(0, 10) == [0, 2, 4, 6, 8, 10]
        assert nice_ticks(95, 230) == [100, 150, 200]
        assert nice_ticks(0, 1.2) == [0, 0.25, 0.5, 0.75, 1.0]


class TestReport:
    @pytest.mark.parametrize("x,text", [(0.275, "0.28"), (0.125, "0.13"), (2.5, "2.50"), (0.004, "0.00"),
                                       (1.005, "1.01"), (None, "-")])
    def test_two_decimals(self, x, text):
        assert format_2dp(x) == text

    def test_table_and_csv(self):
        reports = [EvalReport("TextOnly", pitch_mse=0.275, energy_mse=0.1, duration_mse=0.3333333),
                   EvalReport("CrossAttnFusion", mode="GT-PED", pitch_mse=0.01, energy_mse=0.02, duration_mse=0.5)]
        text, csv_text = report_table(reports)
        lines = text.splitlines()
        assert "0.28" in lines[2] and "CrossAttnFusion (+ GT PED)" in lines[3]
        rows = [r.split(",") for r in csv_text.splitlines()]
        assert rows[0] == ["variant", "pitch_mse", "energy_mse", "duration_mse"]
        assert all(len(r) == 4 for r in rows)
        assert float(rows[1][3]) == 0.3333333
