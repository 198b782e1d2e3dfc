from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError

VARIANTS = ("TextOnly", "PoolFusion", "CrossAttnFusion")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and target-space settings; hashed into checkpoints.

    ``*_norm`` pairs are the (mean, std) that map model targets back to raw
    units: Hz for pitch, frames via exp for log-duration. (0, 1) means the
    targets were used unnormalized.
    """

    phonemes: tuple[str, ...] = ()
    d_f: int = 16
    variant: str = "CrossAttnFusion"
    d_model: int = 256
    heads: int = 2
    encoder_layers: int = 4
    decoder_layers: int = 4
    conv_kernel: int = 9
    ffn_hidden: int = 1024
    encoder_dropout: float = 0.2
    decoder_dropout: float = 0.2
    fusion_dropout: float = 0.2
    predictor_kernel: int = 3
    predictor_hidden: int = 256
    predictor_dropout: float = 0.5
    n_bins: int = 256
    bin_range: tuple[float, float] = (-4.0, 4.0)
    mel_bins: int = 80
    ffnn_hidden: int = 256
    ffnn_dropout: float = 0.5
    pitch_norm: tuple[float, float] = (0.0, 1.0)
    energy_norm: tuple[float, float] = (0.0, 1.0)
    log_duration_norm: tuple[float, float] = (0.0, 1.0)
    init_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        for name in ("d_f", "d_model", "heads", "conv_kernel", "ffn_hidden", "predictor_kernel",
                     "predictor_hidden", "n_bins", "mel_bins", "ffnn_hidden"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.encoder_layers < 0 or self.decoder_layers < 0:
            raise ConfigError("layer counts must be nonnegative")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} is not divisible by {self.heads} heads")
        if self.d_model % 2:
            raise ConfigError("d_model must be even for sinusoidal positions")
        if self.bin_range[0] >= self.bin_range[1]:
            raise ConfigError("bin range must be increasing")
        object.__setattr__(self, "phonemes", tuple(self.phonemes))
        object.__setattr__(self, "bin_range", tuple(float(x) for x in self.bin_range))
        for name in ("pitch_norm", "energy_norm", "log_duration_norm"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))

    @property
    def vocab_size(self) -> int:
        return max(1, len(self.phonemes))

    def phone_ids(self, phones) -> list[int]:
        from ..errors import VocabError

        index = {p: i for i, p in enumerate(self.phonemes)}
        try:
            return [index[p] for p in phones]
        except KeyError as exc:
            raise VocabError(f"phone {exc.args[0]!r} is not in the model vocabulary") from None

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown model config keys {sorted(unknown)}")
        obj = dict(obj)
        for key in ("phonemes", "bin_range", "pitch_norm", "energy_norm", "log_duration_norm"):
            if key in obj:
                obj[key] = tuple(obj[key])
        return cls(**obj)

    def config_hash(self) -> int:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return zlib.crc32(blob) & 0xFFFFFFFF
