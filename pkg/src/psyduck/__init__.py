"""Training-free steganography in keyed diffusion-denoising trajectories.

Embeds bitstrings by forking a shared denoising trajectory under per-digit
reference keys for the last d steps and locally mixing the forks; decoding
replays the forks from the shared keys and picks, per cell, the nearest
reference.  A closed-form Gaussian backend makes every protocol property
checkable at desk scale.
"""

from .codec import CodecSpec, decode_latent, encode_latent
from .diffusion import (
    BackendSpec,
    Sample,
    Schedule,
    diffusion_step,
    forward_diffuse,
    make_schedule,
    model_predict,
    preprocess,
    schedule_from_preset,
)
from .errors import (
    BridgeError,
    BridgeTimeoutError,
    CapacityError,
    ConfigError,
    ContainerFormatError,
    FramingError,
    ParameterError,
    PsyduckError,
    ScheduleMismatchError,
    ShapeMismatchError,
)
from .keys import (
    KeySet,
    NoiseContext,
    SecretKey,
    derive_keyset,
    gaussian_field,
    read_key_file,
    write_key_file,
)
from .protocol import (
    BitMessage,
    CellMap,
    DivergedSet,
    ProtocolParams,
    StegoContainer,
    capacity,
    decode,
    decode_digits,
    diverge,
    encode,
    encode_digits,
    max_payload_bytes,
    mix,
    pack_message,
    reference_samples,
    unpack_message,
)

__version__ = "0.1.0"
