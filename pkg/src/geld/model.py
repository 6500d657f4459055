"""Model configuration and the named learnable-parameter set."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numeric import Tensor

FFN_MULT = 4


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. The defaults are the full-size model;
    tests and desk-scale training use a reduced copy."""

    hidden_dim: int = 128
    num_heads: int = 8
    decoder_layers: int = 6
    region_rows: int = 3
    region_cols: int = 3

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("hidden_dim must be divisible by num_heads")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def num_regions(self) -> int:
        return self.region_rows * self.region_cols


def desk_model_config() -> ModelConfig:
    """Small configuration for CPU-scale experiments."""
    return ModelConfig(hidden_dim=32, num_heads=8, decoder_layers=2)


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _attention_block(rng, h, prefix) -> dict[str, Tensor]:
    t = {}
    for w in ("Wq", "Wk", "Wv", "Wo"):
        t[f"{prefix}.{w}"] = Tensor(_uniform_init(rng, (h, h), h), requires_grad=True, name=f"{prefix}.{w}")
    return t


def _ffn_block(rng, h, prefix) -> dict[str, Tensor]:
    hh = FFN_MULT * h
    return {
        f"{prefix}.ffn_W1": Tensor(_uniform_init(rng, (h, hh), h), requires_grad=True, name=f"{prefix}.ffn_W1"),
        f"{prefix}.ffn_b1": Tensor(np.zeros(hh), requires_grad=True, name=f"{prefix}.ffn_b1"),
        f"{prefix}.ffn_W2": Tensor(_uniform_init(rng, (hh, h), hh), requires_grad=True, name=f"{prefix}.ffn_W2"),
        f"{prefix}.ffn_b2": Tensor(np.zeros(h), requires_grad=True, name=f"{prefix}.ffn_b2"),
    }


@dataclass
class ModelParams:
    """All learnable tensors, addressable by name for the optimizer and the
    checkpoint writer. Tensor layout:

      enc.embed_W (2,h), enc.embed_b (h,)
      enc.{Wq,Wk,Wv,Wo} (h,h), enc.norm1_g / enc.norm2_g (h,)
      enc.ffn_W1 (h,4h), enc.ffn_b1 (4h,), enc.ffn_W2 (4h,h), enc.ffn_b2 (h,)
      dec.<i>.{Wq,Wk,Wv,Wo} (h,h), dec.<i>.dist_lambda (heads,)
      dec.<i>.norm1_g / norm2_g (h,), dec.<i>.ffn_* as above
      out_W (h,1)
    """

    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        h = config.hidden_dim
        t: dict[str, Tensor] = {}
        t["enc.embed_W"] = Tensor(_uniform_init(rng, (2, h), 2), requires_grad=True, name="enc.embed_W")
        t["enc.embed_b"] = Tensor(np.zeros(h), requires_grad=True, name="enc.embed_b")
        t.update(_attention_block(rng, h, "enc"))
        t["enc.norm1_g"] = Tensor(np.ones(h), requires_grad=True, name="enc.norm1_g")
        t["enc.norm2_g"] = Tensor(np.ones(h), requires_grad=True, name="enc.norm2_g")
        t.update(_ffn_block(rng, h, "enc"))
        # role markers added to the decoder input's first/last rows; without
        # them the previous and destination nodes are indistinguishable from
        # candidates and the next-node task is ill-posed
        t["dec.role_prev"] = Tensor(_uniform_init(rng, (h,), h), requires_grad=True, name="dec.role_prev")
        t["dec.role_dest"] = Tensor(_uniform_init(rng, (h,), h), requires_grad=True, name="dec.role_dest")
        for i in range(config.decoder_layers):
            p = f"dec.{i}"
            t.update(_attention_block(rng, h, p))
            t[f"{p}.dist_lambda"] = Tensor(np.zeros(config.num_heads), requires_grad=True, name=f"{p}.dist_lambda")
            t[f"{p}.norm1_g"] = Tensor(np.ones(h), requires_grad=True, name=f"{p}.norm1_g")
            t[f"{p}.norm2_g"] = Tensor(np.ones(h), requires_grad=True, name=f"{p}.norm2_g")
            t.update(_ffn_block(rng, h, p))
        t["out_W"] = Tensor(_uniform_init(rng, (h, 1), h), requires_grad=True, name="out_W")
        return cls(config, t)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> dict[str, Tensor]:
        return self.tensors

    def cast(self, dtype) -> "ModelParams":
        """A no-grad copy in the given dtype (float32 for inference)."""
        out = {
            k: Tensor(v.data.astype(dtype), name=v.name) for k, v in self.tensors.items()
        }
        return ModelParams(self.config, out)

    def copy(self) -> "ModelParams":
        out = {
            k: Tensor(v.data.copy(), requires_grad=v.requires_grad, name=v.name)
            for k, v in self.tensors.items()
        }
        return ModelParams(self.config, out)

    @property
    def dtype(self):
        return self.tensors["out_W"].dtype

    def allclose(self, other: "ModelParams") -> bool:
        if set(self.tensors) != set(other.tensors):
            return False
        return all(np.array_equal(v.data, other.tensors[k].data) for k, v in self.tensors.items())
