"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line in the summary.

Run alone with ``pytest tests/test_acceptance.py -v``. The training criteria use
desk-scale models on synthetic corpora whose error floors are known in closed
form, so the directional comparisons have exact reference points.
"""

import math
import time
import xml.etree.ElementTree as ET
from functools import lru_cache

import numpy as np
import pytest

from prosofuse.cli import ContourPlot, Series, plot_contour, report_table, run
from prosofuse.dataprep import (
    FilterConfig,
    Manifest,
    SynthConfig,
    compute_stats,
    decode_matrix,
    encode_matrix,
    filter_outliers,
    load_matrix,
    normalize_targets,
    save_matrix,
    synth_dataset,
)
from prosofuse.dsp import (
    DspConfig,
    Waveform,
    downsample_average,
    extract_energy,
    extract_pitch,
    log_f0_rmse,
    mcd,
    mel_spectrogram,
    si_snr,
)
from prosofuse.model import decode_checkpoint, encode_checkpoint, plain_attention, run_gradient_suite
from prosofuse.trainer import (
    EvalReport,
    TrainConfig,
    Trainer,
    evaluate_ffnn,
    evaluate_tts,
    load_checkpoint,
    mean_baseline,
    model_config_for,
)
from test_dataprep import brute_force_removals, planted_corpus
from test_dsp import naive_energy

SR = 22050
DESK = dict(d_model=32, heads=2, encoder_layers=1, decoder_layers=1, conv_kernel=3, ffn_hidden=64,
            predictor_hidden=32)
# noise floor 0.1 and Var(s) = 2/3 for styles {-1, 0, 1}: alpha^2 Var(s) + sigma^2
TEXT_ONLY_FLOOR = 1.0 * (2.0 / 3.0) + 0.1**2
FUSED_FLOOR = 0.1**2

PED_STEPS = 3000
PED_TRAIN = TrainConfig(max_steps=PED_STEPS, seed=0, warmup=400, lr_scale=0.5)
PED_TRAIN_UTTERANCES = 8000


# 1 ----------------------------------------------------------------------

def test_gradient_integrity(verdict):
    t0 = time.perf_counter()
    errors = run_gradient_suite()
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    variants = [k for k in errors if k.startswith("model/")]
    ok = errors[worst] < 1e-4 and elapsed < 60 and len(variants) == 3
    verdict(1, ok, f"{len(errors)} cases, max rel err {errors[worst]:.2e} ({worst}), {elapsed:.1f} s")
    assert len(variants) == 3
    assert errors[worst] < 1e-4
    assert elapsed < 60


# 2 ----------------------------------------------------------------------

def softmax_oracle(s):
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def test_attention_properties(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    failures = []
    for case in range(1000):
        L, n, d = (int(x) for x in rng.integers(1, 12, 3))
        scale = float(rng.choice([0.1, 1.0, 5.0]))
        t = rng.standard_normal((L, d)) * scale
        v = rng.standard_normal((n, d)) * scale
        out, w = plain_attention(t, v)
        checks = {
            "oracle": np.allclose(w, softmax_oracle(t @ v.T / math.sqrt(d)), atol=1e-12),
            "row sums": np.all(np.abs(w.sum(axis=1) - 1.0) <= 1e-6) and np.all(w >= 0),
            "hull": np.all(out >= v.min(axis=0) - 1e-9) and np.all(out <= v.max(axis=0) + 1e-9),
        }
        pt, pv = rng.permutation(L), rng.permutation(n)
        checks["text equivariance"] = np.allclose(plain_attention(t[pt], v)[0], out[pt], atol=1e-10)
        out_pv, w_pv = plain_attention(t, v[pv])
        checks["visual invariance"] = np.allclose(out_pv, out, atol=1e-10) and np.allclose(w_pv, w[:, pv], atol=1e-12)
        one = v[:1]
        checks["n=1 broadcast"] = np.allclose(plain_attention(t, one)[0], np.repeat(one, L, axis=0), atol=1e-12)
        failures += [(case, k) for k, good in checks.items() if not good]
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 10
    verdict(2, ok, f"1000 fuzzed cases x 6 properties, {len(failures)} failures, {elapsed:.2f} s")
    assert not failures, failures[:5]
    assert elapsed < 10


# 3 ----------------------------------------------------------------------

def test_ffnn_beats_mean_predictor(verdict):
    # style varies per frame so visual rows carry the prosody; phone spread 0.3 keeps the
    # phone-dependent term (invisible to the FFNN) small next to the style term
    m = synth_dataset(SynthConfig(n_train=2000, pitch_gain=1.0, pitch_noise=0.1, style_mode="frame",
                                  pitch_spread=0.3, energy_spread=0.3, with_mel=False, seed=3))
    t0 = time.perf_counter()
    tr = Trainer("ffnn", m, model_config_for(m), TrainConfig(lr_mode="fixed", fixed_lr=1e-5, max_steps=8000, seed=0))
    tr.run()
    elapsed = time.perf_counter() - t0
    ffnn = evaluate_ffnn(tr.model, m).pitch_mse
    baseline = mean_baseline(m, "pitch")
    ok = ffnn < 0.5 * baseline and elapsed < 600
    verdict(3, ok, f"FFNN pitch MSE {ffnn:.4f} vs mean predictor {baseline:.4f} "
                   f"(ratio {ffnn / baseline:.3f}, need < 0.5), {elapsed:.0f} s")
    assert ffnn < 0.5 * baseline
    assert elapsed < 600


# 4, 5 -------------------------------------------------------------------

def ped_corpus(alpha: float) -> Manifest:
    gains = dict(pitch_gain=1.0, duration_gain=0.3) if alpha else dict(pitch_gain=0.0, energy_gain=0.0, duration_gain=0.0)
    return synth_dataset(SynthConfig(n_train=PED_TRAIN_UTTERANCES, n_val=500, pitch_noise=0.1, with_mel=False,
                                     seed=11, **gains))


@lru_cache(maxsize=None)
def ped_run(variant: str, alpha: float):
    m = ped_corpus(alpha)
    t0 = time.perf_counter()
    tr = Trainer("ped", m, model_config_for(m, variant=variant, **DESK), PED_TRAIN)
    tr.run()
    return tr.evaluate(), time.perf_counter() - t0


def test_fusion_direction(verdict):
    text, t1 = ped_run("TextOnly", 1.0)
    fused, t2 = ped_run("CrossAttnFusion", 1.0)
    text0, t3 = ped_run("TextOnly", 0.0)
    fused0, t4 = ped_run("CrossAttnFusion", 0.0)
    pitch_ratio = fused.pitch_mse / text.pitch_mse
    dur_ratio = fused.duration_mse / text.duration_mse
    gap0 = abs(fused0.pitch_mse - text0.pitch_mse) / max(fused0.pitch_mse, text0.pitch_mse)
    total = t1 + t2 + t3 + t4
    ok = pitch_ratio <= 0.7 and dur_ratio <= 0.8 and gap0 < 0.1 and total < 1800
    verdict(4, ok, f"alpha=1 pitch ratio {pitch_ratio:.3f} (<= 0.7), duration ratio {dur_ratio:.3f} (<= 0.8); "
                   f"alpha=0 pitch {text0.pitch_mse:.4f} vs {fused0.pitch_mse:.4f} (gap {gap0:.1%}); {total:.0f} s")
    assert pitch_ratio <= 0.7
    assert dur_ratio <= 0.8
    assert gap0 < 0.1
    assert total < 1800


def test_analytic_floors(verdict):
    text, _ = ped_run("TextOnly", 1.0)
    fused, _ = ped_run("CrossAttnFusion", 1.0)
    rel = text.pitch_mse / TEXT_ONLY_FLOOR - 1.0
    ok = abs(rel) <= 0.15 and fused.pitch_mse <= 0.1
    verdict(5, ok, f"TextOnly {text.pitch_mse:.4f} vs floor {TEXT_ONLY_FLOOR:.4f} ({rel:+.1%}); "
                   f"CrossAttnFusion {fused.pitch_mse:.4f} (<= 0.1, floor {FUSED_FLOOR:.2f})")
    assert abs(rel) <= 0.15
    assert fused.pitch_mse <= 0.1


# 6 ----------------------------------------------------------------------

def test_ground_truth_prosody_helps(verdict):
    m = synth_dataset(SynthConfig(n_train=8, n_val=0, pitch_center=200.0, pitch_spread=30.0, pitch_gain=15.0,
                                  pitch_noise=3.0, energy_center=5.0, seed=21))
    m = normalize_targets(m, compute_stats(m))
    cfg = model_config_for(m, variant="CrossAttnFusion", **DESK)
    tr = Trainer("tts", m, cfg, TrainConfig(batch_size=8, max_steps=2000, seed=0, warmup=400, eval_split="train"))
    tr.run()
    totals = tr.history.totals()
    ratio = totals[-1] / totals[0]
    gt = evaluate_tts(tr.model, m, "train", gt_ped=True)
    pred = evaluate_tts(tr.model, m, "train", gt_ped=False)
    ok = ratio <= 0.1 and gt.mcd_db <= pred.mcd_db
    verdict(6, ok, f"loss {totals[0]:.3f} -> {totals[-1]:.4f} (ratio {ratio:.4f}); "
                   f"MCD GT PED {gt.mcd_db:.2f} dB vs predicted {pred.mcd_db:.2f} dB")
    assert ratio <= 0.1
    assert gt.mcd_db <= pred.mcd_db


# 7 ----------------------------------------------------------------------

def test_metric_identities(verdict):
    rng = np.random.default_rng(7)
    x = rng.uniform(-8, 0, (30, 80))
    f0 = rng.uniform(80, 300, 200)
    f0[::9] = 0.0
    ref = rng.standard_normal(4000)
    # residual orthogonal to the (zero-mean) reference with 1/100 of its energy
    ref -= ref.mean()
    noise = rng.standard_normal(4000)
    noise -= noise.mean()
    noise -= (noise @ ref) / (ref @ ref) * ref
    noise *= math.sqrt((ref @ ref) / 100.0 / (noise @ noise))
    base = si_snr(ref + noise, ref)
    results = {
        "mcd(x, x) = 0": mcd(x, x) == 0.0,
        "log_f0_rmse(x, x) = 0": log_f0_rmse(f0, f0) == 0.0,
        "octave -> ln 2": abs(log_f0_rmse(f0, 2 * f0) - math.log(2.0)) <= 1e-6,
        "si_snr scale invariance": all(abs(si_snr(a * (ref + noise), ref) - base) <= 1e-9 for a in (0.01, 0.5, 3.0, 1e3)),
        "si_snr 20 dB": abs(base - 20.0) <= 1e-6,
    }
    bad = [k for k, good in results.items() if not good]
    verdict(7, not bad, "all identities hold" if not bad else f"failed: {bad}")
    assert not bad


# 8 ----------------------------------------------------------------------

def test_filter_oracle(verdict):
    m = planted_corpus(n=200)
    cfg = FilterConfig(pitch_max=500.0, k_sigma=2.5)
    kept, report = filter_outliers(m, compute_stats(m), cfg)
    expected = brute_force_removals(list(m), cfg)
    removed = {r.id for r in report}
    false_drops = removed - expected
    false_keeps = expected & {r.id for r in kept}
    ok = len(m) == 200 and removed == expected and not false_drops and not false_keeps
    verdict(8, ok, f"200 records, {len(expected)} planted or natural violations, "
                   f"{len(false_keeps)} false keeps, {len(false_drops)} false drops")
    assert removed == expected
    assert not false_keeps and not false_drops


# 9 ----------------------------------------------------------------------

def test_dsp_oracles(verdict):
    cfg = DspConfig()
    t = np.arange(SR) / SR
    f0 = extract_pitch(Waveform(0.5 * np.sin(2 * np.pi * 220.0 * t), SR), cfg)
    interior = f0[4:-4]
    pitch_ok = bool(np.all(np.abs(interior - 220.0) <= 0.03 * 220.0))

    counts_ok = True
    rng = np.random.default_rng(9)
    for n in [cfg.win_length, 12345, SR, 3 * SR + 17, *rng.integers(1024, 60000, 20).tolist()]:
        mel = mel_spectrogram(Waveform(rng.uniform(-0.1, 0.1, n), SR), cfg)
        counts_ok &= mel.shape == (n // cfg.hop + 1, 80)

    x = np.random.default_rng(5).uniform(-1, 1, 2100)
    ours, ref = extract_energy(Waveform(x, SR), cfg), naive_energy(x)
    energy_err = float(np.max(np.abs(ours - ref) / ref))

    partition_bad = 0
    for _ in range(500):
        total = int(rng.integers(1, 200))
        n = int(rng.integers(1, total + 1))
        p = rng.standard_normal(total)
        # longer chunks first, sizes differ by at most one
        sizes = [total // n + (1 if k < total % n else 0) for k in range(n)]
        edges = np.concatenate([[0], np.cumsum(sizes)])
        want = np.array([sum(p[edges[k]:edges[k + 1]]) / sizes[k] for k in range(n)])
        partition_bad += not np.allclose(downsample_average(p, n), want, rtol=0, atol=1e-12)

    ok = pitch_ok and counts_ok and energy_err < 1e-6 and partition_bad == 0
    verdict(9, ok, f"220 Hz frames within 3%: {pitch_ok}, frame counts exact: {counts_ok}, "
                   f"energy rel err {energy_err:.1e}, partition mismatches {partition_bad}/500")
    assert pitch_ok and counts_ok
    assert energy_err < 1e-6
    assert partition_bad == 0


# 10 ---------------------------------------------------------------------

def test_determinism_and_persistence(verdict, tmp_path):
    m = synth_dataset(SynthConfig(n_train=24, n_val=4, min_phones=3, max_phones=6, min_visual=2, max_visual=3,
                                  visual_dim=4, seed=2))
    m = normalize_targets(m, compute_stats(m))
    tiny = dict(d_model=8, heads=2, encoder_layers=1, decoder_layers=1, conv_kernel=3, ffn_hidden=8,
                predictor_hidden=8, n_bins=16, ffnn_hidden=8)
    cfg = model_config_for(m, variant="CrossAttnFusion", **tiny)
    tc = TrainConfig(batch_size=4, max_steps=100, seed=13, warmup=20)
    a, b = Trainer("tts", m, cfg, tc).run().totals(), Trainer("tts", m, cfg, tc).run().totals()
    same_losses = len(a) == 100 and a == b

    full = Trainer("tts", m, cfg, tc)
    full.run()
    first = Trainer("tts", m, cfg, tc)
    first.run(until=37)
    ck = tmp_path / "mid.psfz"
    first.save(ck)
    second = Trainer("tts", m, cfg, tc)
    second.resume(ck)
    second.run()
    resumed = full.history.totals()[37:] == second.history.totals() and all(
        p.value.tobytes() == second.model.params()[k].value.tobytes() for k, p in full.model.params().items())

    special = np.array([[0.0, -0.0, np.inf, -np.inf], [np.nan, 1e-45, 3.4028235e38, -1.5]], dtype=np.float32)
    save_matrix(tmp_path / "m.mat", special)
    back = load_matrix(tmp_path / "m.mat")
    matrix_ok = back.tobytes() == special.tobytes() and encode_matrix(decode_matrix(encode_matrix(special))) == encode_matrix(special)

    full.save(tmp_path / "end.psfz")
    blob = (tmp_path / "end.psfz").read_bytes()
    tensors, h = decode_checkpoint(blob)
    model, adam = load_checkpoint(tmp_path / "end.psfz", cfg, "tts")
    ckpt_ok = encode_checkpoint(tensors, h) == blob and adam.step == 100 and all(
        p.value.tobytes() == model.params()[k].value.tobytes() for k, p in full.model.params().items())

    ok = same_losses and resumed and matrix_ok and ckpt_ok
    verdict(10, ok, f"100 identical losses: {same_losses}, resume bit-identical: {resumed}, "
                    f"matrix round trip: {matrix_ok}, checkpoint round trip: {ckpt_ok}")
    assert same_losses and resumed and matrix_ok and ckpt_ok


# 11 ---------------------------------------------------------------------

SVG_NS = "{http://www.w3.org/2000/svg}"


def test_plot_and_report_surface(verdict, tmp_path):
    frames = np.arange(120)
    voiced = (frames % 40) >= 6
    names = ["Ground truth", "TextOnly", "PoolFusion", "CrossAttnFusion"]
    series = [Series(nm, 180 + 25 * np.sin(frames / (9 + 2 * k)) + 3 * k, voiced) for k, nm in enumerate(names)]
    _, sheet = plot_contour(ContourPlot(series))
    src = tmp_path / "series.csv"
    src.write_text(sheet)
    codes = [run(["plot", "contour", "--input", str(src), "--out", str(tmp_path / f"{k}.svg")]) for k in "ab"]
    svg_a, svg_b = (tmp_path / "a.svg").read_bytes(), (tmp_path / "b.svg").read_bytes()
    root = ET.fromstring(svg_a)
    groups = root.findall(f"{SVG_NS}g[@class='series']")
    svg_ok = (codes == [0, 0] and svg_a == svg_b and root.get("version") == "1.1"
              and [g.find(f"{SVG_NS}title").text for g in groups] == names
              and all(g.findall(f"{SVG_NS}polyline") for g in groups))

    tables = {
        "visual-only regression": [EvalReport("Mean predictor", pitch_mse=0.443, energy_mse=0.2),
                                   EvalReport("FFNN", pitch_mse=0.166, energy_mse=0.09)],
        "prosody prediction": [EvalReport(v, pitch_mse=p, energy_mse=e, duration_mse=d)
                               for v, p, e, d in (("TextOnly", 0.7, 0.19, 0.075), ("PoolFusion", 0.3, 0.1, 0.03),
                                                  ("CrossAttnFusion", 0.019, 0.012, 0.008))],
        "synthesis": [EvalReport("TextOnly", mcd_db=20.31, log_f0_rmse=0.2),
                      EvalReport("CrossAttnFusion", mcd_db=18.275),
                      EvalReport("CrossAttnFusion", mode="GT-PED", mcd_db=1.1, log_f0_rmse=0.05)],
    }
    layouts = {}
    for name, reports in tables.items():
        text, sheet = report_table(reports)
        rows = text.splitlines()
        layouts[name] = (len(rows) == len(reports) + 2
                         and len({len(r.split(",")) for r in sheet.splitlines()}) == 1
                         and len(sheet.splitlines()) == len(reports) + 1)
    synth_text, _ = report_table(tables["synthesis"])
    table_ok = (all(layouts.values()) and "(+ GT PED)" in synth_text and "18.28" in synth_text
                and synth_text.splitlines()[3].endswith("-"))
    ok = svg_ok and table_ok
    verdict(11, ok, f"SVG well-formed, deterministic, 4 series groups: {svg_ok}; "
                    f"{len(tables)} table layouts: {table_ok}")
    assert svg_ok
    assert table_ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
