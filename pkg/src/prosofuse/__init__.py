"""Visual-text prosody fusion for non-autoregressive TTS, on a from-scratch numpy engine."""

__version__ = "0.1.0"
