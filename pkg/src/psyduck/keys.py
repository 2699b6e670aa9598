"""Key material and keyed, replayable Gaussian noise fields.

Sender and receiver regenerate identical denoising trajectories from shared
32-byte keys, so every noise value consumed by the protocol must be a pure
function of (key, timestep, stream tag, element index).  The construction:

* BLAKE2b keyed with the secret expands (timestep, stream_tag) into a
  128-bit block: a 64-bit Philox key plus a 64-bit counter prefix.
* Philox4x32-10 is run with that key over counters whose low 64 bits are
  the row-major element index, yielding four 32-bit words per element.
* The words are composed little-endian into two 64-bit words, mapped into
  (0, 1) via u = ((w >> 11) + 0.5) * 2**-53, and pushed through the
  Box-Muller cosine branch: z = sqrt(-2 ln u1) * cos(2 pi u2).

Counter-based generation means arbitrary sub-fields are regenerable
independently, and distinct (timestep, stream_tag) pairs can never collide
on a counter because they live under distinct derived blocks.  The integer
pipeline is bit-exact everywhere; the float tail is deterministic for a
fixed libm.  f32 fields are computed in f64 and rounded once per element.
"""

from __future__ import annotations

import hashlib
import os
import stat
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

KEY_BYTES = 32

# Stream tags namespace the noise consumed at different protocol points.
INIT_NOISE_TAG = 0  # the shared initial field x_T
STEP_NOISE_TAG = 1  # per-step injected noise
CHANNEL_NOISE_TAG = 2  # public codec channel noise

_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_U53 = 2.0 ** -53


@dataclass(frozen=True)
class SecretKey:
    """32 bytes of opaque key material, compared by value.

    The repr never exposes the material; use :meth:`to_hex` explicitly when
    writing a key file.
    """

    material: bytes

    def __post_init__(self):
        if not isinstance(self.material, bytes) or len(self.material) != KEY_BYTES:
            raise ParameterError(f"secret key must be exactly {KEY_BYTES} bytes")

    def __repr__(self) -> str:  # never leak material into logs
        return "SecretKey(<32 bytes>)"

    @classmethod
    def generate(cls) -> "SecretKey":
        return cls(os.urandom(KEY_BYTES))

    @classmethod
    def from_hex(cls, text: str) -> "SecretKey":
        text = text.strip()
        if len(text) != 2 * KEY_BYTES:
            raise ParameterError("key hex must be exactly 64 characters")
        try:
            return cls(bytes.fromhex(text))
        except ValueError as exc:
            raise ParameterError(f"invalid key hex: {exc}") from exc

    def to_hex(self) -> str:
        return self.material.hex()


@dataclass(frozen=True)
class KeySet:
    """Synchronization key plus the ordered reference keys k_0..k_{r-1}."""

    sync: SecretKey
    refs: tuple[SecretKey, ...]

    def __post_init__(self):
        if len(self.refs) < 2:
            raise ParameterError("a key set needs at least 2 reference keys")
        everyone = (self.sync,) + tuple(self.refs)
        if len({k.material for k in everyone}) != len(everyone):
            raise ParameterError("sync and reference keys must be pairwise distinct")

    @property
    def r(self) -> int:
        return len(self.refs)


@dataclass(frozen=True)
class NoiseContext:
    """Addresses one noise field: (key, timestep, stream_tag) fixes it fully."""

    key: SecretKey
    timestep: int
    stream_tag: int = STEP_NOISE_TAG

    def __post_init__(self):
        if self.timestep < 0:
            raise ParameterError("timestep must be >= 0")
        if not 0 <= self.stream_tag < 256:
            raise ParameterError("stream_tag must fit in one byte")


def derive_keyset(master: SecretKey, r: int) -> KeySet:
    """Expand one shared master secret into a sync key and r reference keys.

    Derivation is a keyed one-way expansion over a role label and index, so
    identical inputs give identical key sets on every platform and the refs
    for a larger r extend those of a smaller r.
    """
    if r < 2:
        raise ParameterError("reference key count r must be >= 2")
    sync = SecretKey(_expand(master, b"psyduck.sync", 0))
    refs = tuple(SecretKey(_expand(master, b"psyduck.ref", i)) for i in range(r))
    return KeySet(sync=sync, refs=refs)


def _expand(master: SecretKey, label: bytes, index: int) -> bytes:
    h = hashlib.blake2b(key=master.material, digest_size=KEY_BYTES)
    h.update(label)
    h.update(struct.pack("<I", index))
    return h.digest()


def context_block(ctx: NoiseContext) -> tuple[int, int, int, int]:
    """Derive the Philox key words and counter prefix for a context.

    Returns (k0, k1, c2, c3) as 32-bit integers.  Distinct contexts under
    one key map to distinct blocks, which is what guarantees that their
    element counters never overlap.
    """
    h = hashlib.blake2b(key=ctx.key.material, digest_size=16)
    h.update(struct.pack("<qI", ctx.timestep, ctx.stream_tag))
    return struct.unpack("<4I", h.digest())


def philox_words(ctx: NoiseContext, count: int, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Two uint64 words per element index, for indices [start, start+count).

    Philox4x32-10 over counter (index_lo, index_hi, c2, c3); the four output
    words x0..x3 compose little-endian into w0 = x0 | x1<<32 and
    w1 = x2 | x3<<32.
    """
    if count < 0:
        raise ParameterError("count must be >= 0")
    k0_, k1_, c2_, c3_ = context_block(ctx)
    j = np.arange(start, start + count, dtype=np.uint64)
    c0 = j & _MASK32
    c1 = j >> np.uint64(32)
    c2 = np.full(count, c2_, dtype=np.uint64)
    c3 = np.full(count, c3_, dtype=np.uint64)
    k0 = np.uint64(k0_)
    k1 = np.uint64(k1_)
    for _ in range(10):
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        c0 = (p1 >> np.uint64(32)) ^ c1 ^ k0
        c2 = (p0 >> np.uint64(32)) ^ c3 ^ k1
        c1 = p1 & _MASK32
        c3 = p0 & _MASK32
        k0 = (k0 + _PHILOX_W0) & _MASK32
        k1 = (k1 + _PHILOX_W1) & _MASK32
    w0 = c0 | (c1 << np.uint64(32))
    w1 = c2 | (c3 << np.uint64(32))
    return w0, w1


def _normal_from_words(w0: np.ndarray, w1: np.ndarray) -> np.ndarray:
    # ((w >> 11) + 0.5) * 2**-53 lies strictly inside (0, 1), so the log is finite.
    u1 = ((w0 >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
    u2 = ((w1 >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def gaussian_field(
    ctx: NoiseContext,
    shape: tuple[int, ...] | int,
    precision: str = "f64",
) -> np.ndarray:
    """iid standard-normal field addressed by context, row-major.

    Pure function of (ctx, shape, precision): replaying it yields identical
    values, which is what lets the receiver rebuild the sender's
    trajectories.
    """
    if isinstance(shape, int):
        shape = (shape,)
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ParameterError(f"shape must be nonempty with positive dims, got {shape}")
    if precision not in ("f32", "f64"):
        raise ParameterError(f"precision must be 'f32' or 'f64', got {precision!r}")
    n = int(np.prod(shape))
    z = _normal_from_words(*philox_words(ctx, n)).reshape(shape)
    if precision == "f32":
        return z.astype(np.float32)
    return z


def write_key_file(path: str, key: SecretKey) -> None:
    """Write a key file: 64 hex chars + newline, mode 0600."""
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    try:
        os.write(fd, (key.to_hex() + "\n").encode("ascii"))
    finally:
        os.close(fd)
    try:
        os.chmod(path, 0o600)
    except OSError:
        pass


def read_key_file(path: str) -> SecretKey:
    """Read a key file, warning when it is readable by group/other."""
    try:
        mode = stat.S_IMODE(os.stat(path).st_mode)
        if mode & 0o077:
            warnings.warn(
                f"key file {path} is accessible by group/other (mode {oct(mode)}); "
                "expected user-only access",
                UserWarning,
                stacklevel=2,
            )
    except OSError:
        pass  # stat failure surfaces on the open below
    with open(path, "r", encoding="ascii") as fh:
        return SecretKey.from_hex(fh.read())
