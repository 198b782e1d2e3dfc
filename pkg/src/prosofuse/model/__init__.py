"""Acoustic model: encoders, fusion, variance adaptor, decoder, FFNN and checkpoints."""

from .attention import MultiHeadAttention, plain_attention, pool_fuse, pool_fuse_backward
from .blocks import BlockStack, CrossAttnFusion, FFTBlock, TextEncoder, VariancePredictor, VisualEncoder, sinusoidal_pe
from .checkpoint import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint_file,
    load_module_tensors,
    module_tensors,
    save_checkpoint_file,
)
from .config import VARIANTS, ModelConfig
from .gradsuite import run_gradient_suite, tiny_batch, tiny_config
from .network import (
    FFNN,
    Batch,
    Example,
    ForwardResult,
    PedPrediction,
    VarianceAdaptor,
    VisualSpeech,
    collate,
    durations_from_log,
    forward_tts,
    length_regulate,
    length_regulate_backward,
    masked_mse,
    quantize,
    tts_losses,
)

__all__ = [
    "Batch",
    "BlockStack",
    "CrossAttnFusion",
    "Example",
    "FFNN",
    "FFTBlock",
    "ForwardResult",
    "ModelConfig",
    "MultiHeadAttention",
    "PedPrediction",
    "TextEncoder",
    "VARIANTS",
    "VarianceAdaptor",
    "VariancePredictor",
    "VisualEncoder",
    "VisualSpeech",
    "collate",
    "decode_checkpoint",
    "durations_from_log",
    "encode_checkpoint",
    "forward_tts",
    "length_regulate",
    "length_regulate_backward",
    "load_checkpoint_file",
    "load_module_tensors",
    "masked_mse",
    "module_tensors",
    "plain_attention",
    "pool_fuse",
    "pool_fuse_backward",
    "quantize",
    "run_gradient_suite",
    "save_checkpoint_file",
    "sinusoidal_pe",
    "tiny_batch",
    "tiny_config",
    "tts_losses",
]
