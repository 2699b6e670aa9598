"""The embedding protocol: cell partitioning, local mixing, divergence,
message framing, and the encode/decode pipelines.

Encode: denoise the shared trajectory down to t = d+1 under the sync key,
fork it into r trajectories driven by the reference keys for the last d
steps, select per cell according to the message digits, take the final
step, and push the result through the latent codec.  Decode replays the
reference trajectories one step further (to t = 0) and recovers each digit
as the reference closest to the received sample within that digit's cell.
The per-cell argmin equals the global L2 argmin over all digit strings
because the objective is separable across cells.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .codec import CodecSpec, decode_latent, encode_latent
from .diffusion import (
    PRECISION_DTYPES,
    BackendSpec,
    Sample,
    Schedule,
    _finish,
    _predict_mean64,
    diffusion_step,
    preprocess,
)
from .errors import (
    CapacityError,
    ContainerFormatError,
    FramingError,
    ParameterError,
    ScheduleMismatchError,
    ShapeMismatchError,
)
from .keys import STEP_NOISE_TAG, KeySet, NoiseContext, gaussian_field

HEADER_BITS = 32

FINAL_STEP_KEY_MODES = ("sync", "reference")


def bits_per_digit(r: int) -> int:
    """floor(log2 r): usable bits per cell; digits >= 2**bits go unused."""
    if r < 2:
        raise ParameterError("need r >= 2")
    return r.bit_length() - 1


# ---------------------------------------------------------------------------
# Cell partitioning


@dataclass(frozen=True)
class CellMap:
    """Partition of the sample index set into equal rectangular cells.

    cell_shape must divide sample_shape elementwise; cells are ordered
    row-major over the cell grid and each cell carries one message digit.
    """

    sample_shape: tuple[int, ...]
    cell_shape: tuple[int, ...]

    def __post_init__(self):
        sshape = tuple(int(s) for s in self.sample_shape)
        cshape = tuple(int(c) for c in self.cell_shape)
        object.__setattr__(self, "sample_shape", sshape)
        object.__setattr__(self, "cell_shape", cshape)
        if len(sshape) == 0 or any(s < 1 for s in sshape):
            raise ParameterError(f"bad sample shape {sshape}")
        if len(cshape) != len(sshape):
            raise ParameterError("cell_shape must have the same rank as sample_shape")
        if any(c < 1 or s % c != 0 for s, c in zip(sshape, cshape)):
            raise ParameterError(
                f"cell shape {cshape} must divide sample shape {sshape} elementwise"
            )

    @classmethod
    def unit(cls, sample_shape: tuple[int, ...]) -> "CellMap":
        """One element per cell (the default granularity)."""
        sample_shape = tuple(int(s) for s in sample_shape)
        return cls(sample_shape, (1,) * len(sample_shape))

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(s // c for s, c in zip(self.sample_shape, self.cell_shape))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.grid_shape))

    @property
    def cell_size(self) -> int:
        return int(np.prod(self.cell_shape))

    def cell_view(self, values: np.ndarray) -> np.ndarray:
        """View of `values` as (n_cells, cell_size), cells row-major."""
        if tuple(values.shape) != self.sample_shape:
            raise ShapeMismatchError(
                f"values shape {tuple(values.shape)} != sample shape {self.sample_shape}"
            )
        interleaved: list[int] = []
        for g, c in zip(self.grid_shape, self.cell_shape):
            interleaved.extend((g, c))
        split = values.reshape(interleaved)
        rank = len(self.sample_shape)
        order = list(range(0, 2 * rank, 2)) + list(range(1, 2 * rank, 2))
        return split.transpose(order).reshape(self.n_cells, self.cell_size)

    def scatter_cells(self, cells: np.ndarray) -> np.ndarray:
        """Inverse of cell_view: (n_cells, cell_size) back to sample shape."""
        if tuple(cells.shape) != (self.n_cells, self.cell_size):
            raise ShapeMismatchError(
                f"cells shape {tuple(cells.shape)} != ({self.n_cells}, {self.cell_size})"
            )
        rank = len(self.sample_shape)
        blocked = cells.reshape(self.grid_shape + self.cell_shape)
        order = [None] * (2 * rank)
        for axis in range(rank):
            order[2 * axis] = axis
            order[2 * axis + 1] = rank + axis
        return blocked.transpose(order).reshape(self.sample_shape)


# ---------------------------------------------------------------------------
# Protocol parameters and message framing


@dataclass(frozen=True)
class ProtocolParams:
    d: int
    r: int
    cells: CellMap
    final_step_key_mode: str = "sync"
    step_mode: str = "stochastic"
    precision: str = "f64"
    repetition: int = 1  # odd k: each digit occupies k cells, majority-voted

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError("divergent step count d must be >= 1")
        if self.r < 2:
            raise ParameterError("reference count r must be >= 2")
        if self.final_step_key_mode not in FINAL_STEP_KEY_MODES:
            raise ParameterError(f"unknown final_step_key_mode {self.final_step_key_mode!r}")
        if self.step_mode not in ("stochastic", "deterministic"):
            raise ParameterError(f"unknown step_mode {self.step_mode!r}")
        if self.precision not in PRECISION_DTYPES:
            raise ParameterError(f"unknown precision {self.precision!r}")
        if self.repetition < 1 or self.repetition % 2 == 0:
            raise ParameterError("repetition must be an odd count >= 1")
        if self.data_digits * bits_per_digit(self.r) < HEADER_BITS:
            raise ParameterError(
                f"{self.cells.n_cells} cells at r={self.r}, repetition="
                f"{self.repetition} cannot hold the {HEADER_BITS}-bit frame header"
            )

    @property
    def bits_per_digit(self) -> int:
        return bits_per_digit(self.r)

    @property
    def data_digits(self) -> int:
        """Distinct digits carried after repetition coding."""
        return self.cells.n_cells // self.repetition

    def validate_against(self, sched: Schedule, spec: BackendSpec) -> None:
        if self.d + 1 > sched.T:
            raise ScheduleMismatchError(
                f"d={self.d} needs at least {self.d + 1} timesteps, schedule has T={sched.T}"
            )
        if self.step_mode != spec.step_mode:
            raise ParameterError(
                f"params.step_mode={self.step_mode!r} disagrees with "
                f"backend step_mode={spec.step_mode!r}"
            )


@dataclass
class BitMessage:
    """Framed payload digits, one per cell, each in 0..r-1."""

    digits: np.ndarray
    bits_per_digit: int
    repetition: int = 1

    def __post_init__(self):
        self.digits = np.asarray(self.digits, dtype=np.int64)
        if self.digits.ndim != 1:
            raise ParameterError("digits must be one-dimensional")
        if self.bits_per_digit < 1:
            raise ParameterError("bits_per_digit must be >= 1")
        if self.repetition < 1 or self.repetition % 2 == 0:
            raise ParameterError("repetition must be an odd count >= 1")

    def __len__(self) -> int:
        return int(self.digits.size)


def capacity(params: ProtocolParams) -> int:
    """Payload capacity in bits: one digit per cell (divided by any
    repetition factor), minus the frame header."""
    return params.data_digits * params.bits_per_digit - HEADER_BITS


def max_payload_bytes(params: ProtocolParams) -> int:
    return capacity(params) // 8


def pack_message(payload: bytes, params: ProtocolParams) -> BitMessage:
    """Frame payload bytes into digits: 32-bit big-endian length, payload
    bits, zero padding; bits grouped most-significant-first.  With
    repetition k > 1 each digit is written to k consecutive cells."""
    bpd = params.bits_per_digit
    n_data = params.data_digits
    total_bits = n_data * bpd
    need = HEADER_BITS + 8 * len(payload)
    if need > total_bits:
        limit = max_payload_bytes(params)
        raise CapacityError(
            f"payload of {len(payload)} bytes exceeds capacity; "
            f"max {limit} bytes at {params.cells.n_cells} cells, r={params.r}"
            + (f", repetition={params.repetition}" if params.repetition > 1 else ""),
            max_payload_bytes=limit,
        )
    bits = np.zeros(total_bits, dtype=np.uint8)
    head = np.unpackbits(np.frombuffer(struct.pack(">I", len(payload)), dtype=np.uint8))
    bits[:HEADER_BITS] = head
    if payload:
        bits[HEADER_BITS:need] = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    weights = 1 << np.arange(bpd - 1, -1, -1, dtype=np.int64)
    digits = bits.reshape(n_data, bpd).astype(np.int64) @ weights
    if params.repetition > 1:
        spread = np.repeat(digits, params.repetition)
        digits = np.zeros(params.cells.n_cells, dtype=np.int64)
        digits[: spread.size] = spread
    return BitMessage(digits=digits, bits_per_digit=bpd, repetition=params.repetition)


def _majority_vote(digits: np.ndarray, k: int) -> np.ndarray:
    """Plurality vote over groups of k cells, ties to the lowest digit."""
    n_data = digits.size // k
    groups = digits[: n_data * k].reshape(n_data, k)
    top = int(digits.max(initial=0)) + 1
    counts = np.zeros((n_data, top), dtype=np.int64)
    for col in range(k):
        np.add.at(counts, (np.arange(n_data), groups[:, col]), 1)
    return np.argmax(counts, axis=1).astype(np.int64)


def unpack_message(message: BitMessage) -> bytes:
    """Inverse of pack_message.

    Repeated digits are majority-voted first.  Digits are reduced to their
    low bits_per_digit bits (values above 2**bits_per_digit can only
    appear on decoded messages when r is not a power of two).  A declared
    payload length beyond capacity raises FramingError: it signals a wrong
    key or a corrupted container.
    """
    bpd = message.bits_per_digit
    digits = message.digits
    if message.repetition > 1:
        digits = _majority_vote(digits, message.repetition)
    digits = digits & ((1 << bpd) - 1)
    shifts = np.arange(bpd - 1, -1, -1, dtype=np.int64)
    bits = ((digits[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)
    if bits.size < HEADER_BITS:
        raise FramingError("digit stream shorter than the frame header")
    declared = struct.unpack(">I", np.packbits(bits[:HEADER_BITS]).tobytes())[0]
    if HEADER_BITS + 8 * declared > bits.size:
        raise FramingError(
            f"declared payload of {declared} bytes exceeds capacity of "
            f"{(bits.size - HEADER_BITS) // 8} bytes (wrong key or corrupted container?)"
        )
    if declared == 0:
        return b""
    body = bits[HEADER_BITS : HEADER_BITS + 8 * declared]
    return np.packbits(body).tobytes()


# ---------------------------------------------------------------------------
# Diverged trajectories and local mixing


@dataclass
class DivergedSet:
    """Ordered trajectories x_t^0..x_t^{r-1} sharing a common ancestor."""

    t: int
    samples: list[Sample]

    def __post_init__(self):
        if not self.samples:
            raise ParameterError("diverged set needs at least one sample")
        first = self.samples[0]
        for s in self.samples[1:]:
            if s.shape != first.shape or s.precision != first.precision:
                raise ParameterError("diverged samples must share shape and precision")

    @property
    def r(self) -> int:
        return len(self.samples)


def _mix_values(digits: np.ndarray, stacks: list[np.ndarray], cells: CellMap) -> np.ndarray:
    views = np.stack([cells.cell_view(v) for v in stacks])
    picked = views[digits, np.arange(cells.n_cells), :]
    return cells.scatter_cells(picked)


def mix(message: BitMessage, diverged: DivergedSet, cells: CellMap) -> Sample:
    """Assemble one sample by selecting, per cell, the diverged sample named
    by that cell's digit.  Purely local: digit j touches only cell j."""
    if len(message) != cells.n_cells:
        raise ParameterError(
            f"message has {len(message)} digits but the cell map has {cells.n_cells} cells"
        )
    if message.digits.min() < 0 or message.digits.max() >= diverged.r:
        raise ParameterError(
            f"digits must lie in 0..{diverged.r - 1}, got max {int(message.digits.max())}"
        )
    values = _mix_values(message.digits, [s.values for s in diverged.samples], cells)
    first = diverged.samples[0]
    return Sample(values.copy(), first.space)


def diverge(
    x_start: Sample,
    t_start: int,
    steps: int,
    keys: KeySet,
    sched: Schedule,
    spec: BackendSpec,
) -> DivergedSet:
    """Run each reference key for `steps` denoising steps from x_start."""
    if steps < 0 or t_start - steps < 0:
        raise ParameterError(f"cannot take {steps} steps from t={t_start}")
    samples = []
    for key in keys.refs:
        x = x_start.copy()
        for t in range(t_start, t_start - steps, -1):
            x = diffusion_step(x, t, key, sched, spec)
        samples.append(x)
    return DivergedSet(t=t_start - steps, samples=samples)


def shared_trajectory(
    keys: KeySet,
    params: ProtocolParams,
    sched: Schedule,
    spec: BackendSpec,
) -> Sample:
    """Preprocess and denoise under the sync key down to t = d+1."""
    x = preprocess(keys.sync, params.cells.sample_shape, sched, params.precision)
    for t in range(sched.T, params.d + 1, -1):
        x = diffusion_step(x, t, keys.sync, sched, spec)
    return x


def cover_sample(
    keys: KeySet,
    params: ProtocolParams,
    sched: Schedule,
    spec: BackendSpec,
) -> Sample:
    """The undiverged sample: the full sync-key trajectory down to t = 0."""
    x = preprocess(keys.sync, params.cells.sample_shape, sched, params.precision)
    for t in range(sched.T, 0, -1):
        x = diffusion_step(x, t, keys.sync, sched, spec)
    return x


def _final_step(
    x1: Sample,
    message: BitMessage,
    keys: KeySet,
    params: ProtocolParams,
    sched: Schedule,
    spec: BackendSpec,
) -> Sample:
    """The t=1 step on the mixed sample.

    'sync' takes it under the sync key.  'reference' keys the injected noise
    per cell by that cell's selected reference, which matches the noise the
    decoder's references receive at t=1 (only observable when sigma_1 > 0).
    """
    if params.final_step_key_mode == "sync":
        return diffusion_step(x1, 1, keys.sync, sched, spec)
    mean64 = _predict_mean64(x1, 1, sched, spec)
    sigma_1 = float(sched.sigma[0])
    if spec.step_mode == "stochastic" and sigma_1 > 0.0:
        fields = [
            gaussian_field(NoiseContext(key, 1, STEP_NOISE_TAG), x1.shape, "f64")
            for key in keys.refs
        ]
        mean64 = mean64 + sigma_1 * _mix_values(message.digits, fields, params.cells)
    return _finish(mean64, x1)


def encode_digits(
    message: BitMessage,
    keys: KeySet,
    params: ProtocolParams,
    sched: Schedule,
    spec: BackendSpec,
) -> Sample:
    """Embed a digit string and return the pre-codec stego latent x_0^A."""
    params.validate_against(sched, spec)
    if keys.r < params.r:
        raise ParameterError(f"key set has {keys.r} refs but params.r={params.r}")
    x = shared_trajectory(keys, params, sched, spec)
    diverged = diverge(x, params.d + 1, params.d, keys, sched, spec)
    x1 = mix(message, diverged, params.cells)
    return _final_step(x1, message, keys, params, sched, spec)


def reference_samples(
    keys: KeySet,
    params: ProtocolParams,
    sched: Schedule,
    spec: BackendSpec,
) -> DivergedSet:
    """The decoder's fully denoised references x_0^0..x_0^{r-1}."""
    params.validate_against(sched, spec)
    x = shared_trajectory(keys, params, sched, spec)
    return diverge(x, params.d + 1, params.d + 1, keys, sched, spec)


def decode_digits(
    received: Sample,
    references: DivergedSet,
    cells: CellMap,
) -> tuple[BitMessage, np.ndarray]:
    """Per-cell nearest reference (ties to the lowest index) plus margins.

    Returns the recovered digits and, per cell, the gap between the
    second-best and best Euclidean distances.  Equals the global L2 argmin
    over all digit strings because the squared objective separates over
    cells and the per-cell square root is monotone.
    """
    if received.shape != references.samples[0].shape:
        raise ShapeMismatchError(
            f"received shape {received.shape} != reference shape {references.samples[0].shape}"
        )
    target = received.values.astype(np.float64)
    dists = np.sqrt(
        np.stack(
            [
                cells.cell_view(np.square(ref.values.astype(np.float64) - target)).sum(axis=1)
                for ref in references.samples
            ]
        )
    )
    digits = np.argmin(dists, axis=0).astype(np.int64)
    top2 = np.partition(dists, 1, axis=0)[:2]
    margins = top2[1] - top2[0]
    bpd = bits_per_digit(references.r)
    return BitMessage(digits=digits, bits_per_digit=bpd), margins


# ---------------------------------------------------------------------------
# Container format


_DTYPE_CODES = {"f32": 0, "f64": 1}
_DTYPE_FROM_CODE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_SPACE_CODES = {"pixel": 0, "latent": 1}
_SPACE_FROM_CODE = {0: "pixel", 1: "latent"}

CONTAINER_MAGIC = b"PSYD"
CONTAINER_VERSION = 1


@dataclass(frozen=True)
class StegoContainer:
    """Self-describing transmitted sample.

    Little-endian layout: magic "PSYD", version u16, dtype u8 (0=f32,
    1=f64), space u8 (0=pixel, 1=latent), ndim u8, dims u32 x ndim, then
    the raw row-major value buffer.
    """

    values: np.ndarray
    space: str

    @classmethod
    def from_sample(cls, sample: Sample) -> "StegoContainer":
        return cls(values=sample.values.copy(), space=sample.space)

    def to_sample(self) -> Sample:
        return Sample(self.values.copy(), self.space)

    @property
    def precision(self) -> str:
        return "f32" if self.values.dtype == np.float32 else "f64"

    def to_bytes(self) -> bytes:
        shape = self.values.shape
        head = CONTAINER_MAGIC
        head += struct.pack("<H", CONTAINER_VERSION)
        head += struct.pack("<B", _DTYPE_CODES[self.precision])
        head += struct.pack("<B", _SPACE_CODES[self.space])
        head += struct.pack("<B", len(shape))
        head += struct.pack(f"<{len(shape)}I", *shape)
        wire_dtype = "<f4" if self.precision == "f32" else "<f8"
        return head + np.ascontiguousarray(self.values).astype(wire_dtype).tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "StegoContainer":
        if len(blob) < 9:
            raise ContainerFormatError("container truncated before header end")
        if blob[:4] != CONTAINER_MAGIC:
            raise ContainerFormatError(f"bad magic {blob[:4]!r}")
        (version,) = struct.unpack_from("<H", blob, 4)
        if version != CONTAINER_VERSION:
            raise ContainerFormatError(f"unsupported container version {version}")
        dtype_code, space_code, ndim = struct.unpack_from("<BBB", blob, 6)
        if dtype_code not in _DTYPE_FROM_CODE:
            raise ContainerFormatError(f"unknown dtype code {dtype_code}")
        if space_code not in _SPACE_FROM_CODE:
            raise ContainerFormatError(f"unknown space code {space_code}")
        if ndim < 1:
            raise ContainerFormatError("container needs at least one dimension")
        if len(blob) < 9 + 4 * ndim:
            raise ContainerFormatError("container truncated inside dims")
        shape = struct.unpack_from(f"<{ndim}I", blob, 9)
        if any(s < 1 for s in shape):
            raise ContainerFormatError(f"container has zero-sized dims {shape}")
        dtype = _DTYPE_FROM_CODE[dtype_code]
        offset = 9 + 4 * ndim
        count = 1
        for s in shape:
            count *= int(s)
        expected = offset + count * dtype.itemsize
        if len(blob) != expected:
            raise ContainerFormatError(
                f"container has {len(blob)} bytes, layout implies {expected}"
            )
        values = np.frombuffer(blob, dtype=dtype, offset=offset).reshape(shape)
        return cls(values=values.astype(dtype.newbyteorder("=")), space=_SPACE_FROM_CODE[space_code])

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "StegoContainer":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# ---------------------------------------------------------------------------
# End-to-end encode / decode


def encode(
    payload: bytes,
    keys: KeySet,
    params: ProtocolParams,
    sched: Schedule,
    spec: BackendSpec,
    codec: CodecSpec,
) -> StegoContainer:
    """Embed payload bytes and return the transmitted container.

    Deterministic given all inputs: encoding twice yields byte-identical
    containers.
    """
    message = pack_message(payload, params)
    stego_latent = encode_digits(message, keys, params, sched, spec)
    transmitted = decode_latent(stego_latent, codec)
    return StegoContainer.from_sample(transmitted)


def decode(
    container: StegoContainer,
    keys: KeySet,
    params: ProtocolParams,
    sched: Schedule,
    spec: BackendSpec,
    codec: CodecSpec,
) -> bytes:
    """Recover the payload from a container.

    Raises FramingError when the digit stream is implausible (wrong key,
    corruption, or a degenerate configuration whose references carry no
    divergence at all).
    """
    if container.precision != params.precision:
        raise ShapeMismatchError(
            f"container precision {container.precision} != params precision {params.precision}"
        )
    if tuple(container.values.shape) != params.cells.sample_shape:
        raise ShapeMismatchError(
            f"container shape {tuple(container.values.shape)} != "
            f"sample shape {params.cells.sample_shape}"
        )
    received = encode_latent(container.to_sample(), codec)
    references = reference_samples(keys, params, sched, spec)
    message, margins = decode_digits(received, references, params.cells)
    if float(margins.max(initial=0.0)) == 0.0:
        raise FramingError(
            "all references are equidistant from the received sample; the "
            "configuration carries no divergence (deterministic step mode?)"
        )
    message = BitMessage(
        digits=message.digits,
        bits_per_digit=message.bits_per_digit,
        repetition=params.repetition,
    )
    return unpack_message(message)


def brute_force_decode_digits(
    received: Sample,
    references: DivergedSet,
    cells: CellMap,
) -> BitMessage:
    """Exhaustive L2 argmin over every digit string; oracle for small grids.

    Cost is r**n_cells evaluations; refuse anything past 2**20 candidates.
    """
    n_cells = cells.n_cells
    r = references.r
    if n_cells * math.log2(r) > 20:
        raise ParameterError("brute-force decoding is limited to r**cells <= 2**20")
    target = cells.cell_view(received.values.astype(np.float64))
    views = np.stack([cells.cell_view(ref.values.astype(np.float64)) for ref in references.samples])
    cell_ids = np.arange(n_cells)
    best_digits = None
    best_cost = np.inf
    digits = np.zeros(n_cells, dtype=np.int64)
    while True:
        mixed = views[digits, cell_ids, :]
        cost = float(np.sum((mixed - target) ** 2))
        if cost < best_cost:
            best_cost = cost
            best_digits = digits.copy()
        # odometer increment over base-r digit strings
        pos = n_cells - 1
        while pos >= 0:
            digits[pos] += 1
            if digits[pos] < r:
                break
            digits[pos] = 0
            pos -= 1
        if pos < 0:
            break
    return BitMessage(digits=best_digits, bits_per_digit=bits_per_digit(r))
