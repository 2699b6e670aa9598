"""Simulated latent codec: a configurable distortion channel.

Stands in for a real autoencoder pair.  Quantization models the bounded,
roughly value-independent error of a VAE round trip; optional additive
Gaussian noise models residual reconstruction error.  The channel noise is
keyed off a public digest of the quantized content, so it is deterministic
per container but independent across containers, and involves no secret.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .diffusion import Sample, _finish
from .errors import ParameterError
from .keys import CHANNEL_NOISE_TAG, NoiseContext, SecretKey, gaussian_field

CODEC_KINDS = ("identity", "quantize", "quantize_noise")
DEFAULT_CLIP = (-4.0, 4.0)


@dataclass(frozen=True)
class CodecSpec:
    kind: str = "identity"
    bits: int = 8
    noise_std: float = 0.0
    clip: tuple[float, float] = DEFAULT_CLIP

    def __post_init__(self):
        if self.kind not in CODEC_KINDS:
            raise ParameterError(f"unknown codec kind {self.kind!r}")
        if not 1 <= self.bits <= 16:
            raise ParameterError("quantization bits must be in 1..16")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be >= 0")
        if not self.clip[0] < self.clip[1]:
            raise ParameterError("clip range must satisfy lo < hi")

    @classmethod
    def parse(cls, text: str) -> "CodecSpec":
        """Parse config strings like 'identity', 'quantize:8', 'quantize_noise:8:0.01'."""
        parts = text.strip().split(":")
        kind = parts[0]
        if kind == "identity":
            if len(parts) != 1:
                raise ParameterError(f"identity codec takes no arguments: {text!r}")
            return cls()
        try:
            if kind == "quantize" and len(parts) == 2:
                return cls(kind="quantize", bits=int(parts[1]))
            if kind == "quantize_noise" and len(parts) == 3:
                return cls(kind="quantize_noise", bits=int(parts[1]), noise_std=float(parts[2]))
        except ValueError as exc:
            raise ParameterError(f"bad codec spec {text!r}: {exc}") from exc
        raise ParameterError(f"bad codec spec {text!r}")

    def to_string(self) -> str:
        if self.kind == "identity":
            return "identity"
        if self.kind == "quantize":
            return f"quantize:{self.bits}"
        return f"quantize_noise:{self.bits}:{self.noise_std:g}"

    @property
    def step(self) -> float:
        return (self.clip[1] - self.clip[0]) / (1 << self.bits)


def _quantize64(values: np.ndarray, spec: CodecSpec) -> np.ndarray:
    lo, hi = spec.clip
    q = spec.step
    clipped = np.clip(values.astype(np.float64), lo, hi)
    idx = np.minimum(np.floor((clipped - lo) / q), (1 << spec.bits) - 1)
    return lo + (idx + 0.5) * q


def _channel_noise_key(quantized64: np.ndarray) -> SecretKey:
    # Public derivation: anyone can recompute it from the transmitted values.
    h = hashlib.blake2b(digest_size=32, person=b"psyd.channel")
    h.update(quantized64.astype("<f8").tobytes())
    return SecretKey(h.digest())


def decode_latent(z: Sample, spec: CodecSpec) -> Sample:
    """Latent -> transmitted signal (the Dec(.) half of the channel)."""
    if not np.isfinite(z.values).all():
        raise ParameterError("codec input must be finite")
    if spec.kind == "identity":
        return Sample(z.values.copy(), "pixel")
    out = _quantize64(z.values, spec)
    if spec.kind == "quantize_noise" and spec.noise_std > 0:
        ctx = NoiseContext(_channel_noise_key(out), 0, CHANNEL_NOISE_TAG)
        out = out + spec.noise_std * gaussian_field(ctx, z.shape, "f64")
    return _finish(out, z, space="pixel")


def encode_latent(x: Sample, spec: CodecSpec) -> Sample:
    """Transmitted signal -> latent (the Enc(.) half, undoing postprocessing)."""
    if spec.kind == "identity":
        return Sample(x.values.copy(), "latent")
    lo, hi = spec.clip
    out = np.clip(x.values.astype(np.float64), lo, hi)
    return _finish(out, x, space="latent")
