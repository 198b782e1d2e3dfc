"""Finite-difference gradient suite over every trainable layer and model variant.

Each case builds a tiny float64 instance, runs one analytic backward of
f = sum(proj * output) (or the training loss for whole models), and compares
against central differences for every parameter and input.
"""

from __future__ import annotations

import numpy as np

from ..numcore import Conv1d, Embedding, LayerNorm, Linear, grad_check, precision, rng_from_seed
from .attention import MultiHeadAttention
from .blocks import CrossAttnFusion, FFTBlock, VariancePredictor, VisualEncoder
from .config import VARIANTS, ModelConfig
from .network import FFNN, Example, VisualSpeech, collate, tts_losses


def tiny_config(variant: str, seed: int = 1) -> ModelConfig:
    return ModelConfig(
        phonemes=tuple("abcde"), d_f=3, variant=variant, d_model=8, heads=2,
        encoder_layers=1, decoder_layers=1, conv_kernel=3, ffn_hidden=8,
        predictor_hidden=8, n_bins=8, mel_bins=4, ffnn_hidden=6, init_seed=seed,
    )


def tiny_batch(cfg: ModelConfig, seed: int = 5):
    rng = rng_from_seed(seed)
    examples = []
    for i, (length, n) in enumerate([(4, 3), (3, 2)]):
        d = rng.integers(1, 3, length)
        examples.append(Example(
            f"u{i}", rng.integers(0, cfg.vocab_size, length), rng.standard_normal((n, cfg.d_f)),
            rng.standard_normal(length), rng.standard_normal(length), rng.standard_normal(length),
            d, rng.standard_normal((int(d.sum()), cfg.mel_bins)),
        ))
    return collate(examples)


def _projected(module, forward, inputs, rng) -> float:
    """Check f = sum(proj * forward()) over module params and the listed inputs."""
    proj = rng.standard_normal(forward().shape)
    module.zero_grad()
    forward()
    dx = module.backward(proj)
    dx = dx if isinstance(dx, tuple) else (dx,)
    params = list(module.params().values())
    arrays = [p.value for p in params] + list(inputs)
    analytic = [p.grad.copy() for p in params] + [np.asarray(g) for g in dx[: len(inputs)]]
    return grad_check(lambda: float(np.sum(proj * forward())), arrays, analytic)


def _layer_cases(rng) -> dict:
    cases = {}
    x = rng.standard_normal((2, 4, 3))
    lin = Linear(3, 5, rng)
    cases["linear"] = _projected(lin, lambda: lin.forward(x), [x], rng)
    ln = LayerNorm(5)
    ln.gamma.value[:] = rng.standard_normal(5)
    x5 = rng.standard_normal((3, 5))
    cases["layer_norm"] = _projected(ln, lambda: ln.forward(x5), [x5], rng)
    conv = Conv1d(3, 4, 3, rng)
    cases["conv1d"] = _projected(conv, lambda: conv.forward(x), [x], rng)
    emb = Embedding(6, 4, rng)
    ids = np.array([[0, 3, 3, 5]])
    cases["embedding"] = _projected(emb, lambda: emb.forward(ids), [], rng)

    q = rng.standard_normal((2, 4, 8))
    kv = rng.standard_normal((2, 3, 8))
    km = np.array([[True, True, True], [True, True, False]])
    mha = MultiHeadAttention(8, 2, rng)
    cases["multihead_attention"] = _projected(mha, lambda: mha.forward(q, kv, km), [q, kv], rng)

    pm = np.array([[True] * 4, [True, True, True, False]])
    blk = FFTBlock(8, 2, 8, 3, 0.0, rng)
    cases["fft_block"] = _projected(blk, lambda: blk.forward(q, pm), [q], rng)
    fus = CrossAttnFusion(8, 2, 8, 0.0, rng)
    cases["fusion"] = _projected(fus, lambda: fus.forward(q, pm, kv, km), [q, kv], rng)
    vp = VariancePredictor(8, 6, 3, 0.0, rng)
    cases["variance_predictor"] = _projected(vp, lambda: vp.forward(q, pm), [q], rng)
    f = rng.standard_normal((2, 3, 3))
    venc = VisualEncoder(3, 8, 1, 2, 8, 3, 0.0, rng)
    cases["visual_encoder"] = _projected(venc, lambda: venc.forward(f, km), [], rng)
    ffnn = FFNN(3, hidden=6, dropout=0.0, seed=3)
    xf = rng.standard_normal((4, 3))
    cases["ffnn"] = _projected(ffnn, lambda: ffnn.forward(xf), [], rng)
    return cases


def _model_case(variant: str) -> float:
    cfg = tiny_config(variant)
    model = VisualSpeech(cfg)
    batch = tiny_batch(cfg)

    def loss() -> float:
        result = model.forward(batch, teacher_forcing=True, training=False)
        return tts_losses(model, batch, result)[0]["total"]

    model.zero_grad()
    result = model.forward(batch, teacher_forcing=True, training=False)
    _, dped, dmel = tts_losses(model, batch, result)
    model.backward(dped, dmel)
    params = model.params()
    return grad_check(loss, [p.value for p in params.values()], [p.grad.copy() for p in params.values()])


def run_gradient_suite(seed: int = 0, variants=VARIANTS) -> dict[str, float]:
    """Return {case name: max relative error}; runs in float64."""
    with precision(np.float64):
        rng = rng_from_seed(seed, 303)
        results = _layer_cases(rng)
        for v in variants:
            results[f"model/{v}"] = _model_case(v)
    return results
