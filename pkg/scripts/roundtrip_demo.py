#!/usr/bin/env python3
"""Embed a message, transmit it through a quantizing channel, recover it.

Walks the whole pipeline once with commentary, printing the error norms
and per-cell margins along the way.  Everything is seeded, so two runs
print the same numbers.
"""

import numpy as np

from psyduck import (
    BackendSpec,
    CellMap,
    CodecSpec,
    ProtocolParams,
    SecretKey,
    StegoContainer,
    decode,
    derive_keyset,
    encode,
    max_payload_bytes,
    schedule_from_preset,
)
from psyduck.analysis import security_error
from psyduck.protocol import encode_digits, pack_message

MESSAGE = b"a single spark can start a prairie fire"


def main() -> None:
    sched = schedule_from_preset("linear-50")
    backend = BackendSpec()
    # 8-element patch cells buy enough per-digit redundancy to survive the
    # 8-bit quantizing channel with margin to spare
    params = ProtocolParams(d=3, r=2, cells=CellMap((4096,), (8,)))
    codec = CodecSpec.parse("quantize:8")
    keys = derive_keyset(SecretKey(bytes(range(32))), params.r)

    print(f"capacity: {max_payload_bytes(params)} bytes over {params.cells.n_cells} cells")
    print(f"payload:  {len(MESSAGE)} bytes")

    container = encode(MESSAGE, keys, params, sched, backend, codec)
    blob = container.to_bytes()
    print(f"container: {len(blob)} bytes ({container.precision}, {container.values.shape})")

    stego_latent = encode_digits(pack_message(MESSAGE, params), keys, params, sched, backend)
    e_sec = security_error(stego_latent, keys, params, sched, backend)
    n = stego_latent.size
    print(f"E_sec: {e_sec:.4f}  ({e_sec / np.sqrt(n):.5f} per element)")

    recovered = decode(StegoContainer.from_bytes(blob), keys, params, sched, backend, codec)
    print(f"recovered: {recovered!r}")
    print("exact" if recovered == MESSAGE else "MISMATCH")


if __name__ == "__main__":
    main()
