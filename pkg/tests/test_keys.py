import numpy as np
import pytest
from scipy import stats

from psyduck.errors import ParameterError
from psyduck.keys import (
    INIT_NOISE_TAG,
    STEP_NOISE_TAG,
    KeySet,
    NoiseContext,
    SecretKey,
    context_block,
    derive_keyset,
    gaussian_field,
    philox_words,
    read_key_file,
    write_key_file,
)

MASTER = SecretKey(bytes(range(32)))
CTX = NoiseContext(MASTER, timestep=7, stream_tag=STEP_NOISE_TAG)


# --- scalar reference implementation (independent oracle for the word pipeline)


def _philox_ref(ctr: tuple[int, int, int, int], key: tuple[int, int]) -> list[int]:
    c = list(ctr)
    k = list(key)
    for _ in range(10):
        p0 = (0xD2511F53 * c[0]) & 0xFFFFFFFFFFFFFFFF
        p1 = (0xCD9E8D57 * c[2]) & 0xFFFFFFFFFFFFFFFF
        c = [
            (p1 >> 32) ^ c[1] ^ k[0],
            p1 & 0xFFFFFFFF,
            (p0 >> 32) ^ c[3] ^ k[1],
            p0 & 0xFFFFFFFF,
        ]
        k[0] = (k[0] + 0x9E3779B9) & 0xFFFFFFFF
        k[1] = (k[1] + 0xBB67AE85) & 0xFFFFFFFF
    return c


def test_philox_known_answer_vectors():
    # Published 10-round test vectors for the 4x32 variant.
    assert _philox_ref((0, 0, 0, 0), (0, 0)) == [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]
    ff = 0xFFFFFFFF
    assert _philox_ref((ff, ff, ff, ff), (ff, ff)) == [0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]
    assert _philox_ref(
        (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0)
    ) == [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]


def test_words_match_scalar_reference():
    k0, k1, c2, c3 = context_block(CTX)
    w0, w1 = philox_words(CTX, 5, start=1000)
    for offset, j in enumerate(range(1000, 1005)):
        x = _philox_ref((j & 0xFFFFFFFF, j >> 32, c2, c3), (k0, k1))
        assert int(w0[offset]) == x[0] | (x[1] << 32)
        assert int(w1[offset]) == x[2] | (x[3] << 32)


def test_subfield_regeneration():
    full, _ = philox_words(CTX, 64)
    part, _ = philox_words(CTX, 8, start=40)
    assert np.array_equal(full[40:48], part)


# --- gaussian_field contract


def test_field_replay_is_identical():
    a = gaussian_field(CTX, (4, 4))
    b = gaussian_field(CTX, (4, 4))
    assert np.array_equal(a, b)
    assert a.shape == (4, 4)


def test_field_is_row_major_prefix_consistent():
    small = gaussian_field(CTX, (8,))
    large = gaussian_field(CTX, (4, 4))
    assert np.array_equal(small, large.reshape(-1)[:8])


def test_f32_is_rounded_f64():
    z64 = gaussian_field(CTX, (1024,), "f64")
    z32 = gaussian_field(CTX, (1024,), "f32")
    assert z32.dtype == np.float32
    assert np.array_equal(z32, z64.astype(np.float32))


def test_distinct_keys_decorrelated():
    ks = derive_keyset(MASTER, 2)
    n = 1_000_000
    a = gaussian_field(NoiseContext(ks.refs[0], 1, STEP_NOISE_TAG), (n,))
    b = gaussian_field(NoiseContext(ks.refs[1], 1, STEP_NOISE_TAG), (n,))
    rho = np.corrcoef(a, b)[0, 1]
    assert abs(rho) < 0.01


def test_standard_normal_moments():
    z = gaussian_field(CTX, (1_000_000,))
    assert abs(z.mean()) < 4e-3
    assert abs(z.var() - 1.0) < 0.01


def test_kolmogorov_smirnov_normality():
    n = 1_000_000
    z = gaussian_field(NoiseContext(MASTER, 3, INIT_NOISE_TAG), (n,))
    ks = stats.kstest(z, "norm").statistic
    assert ks < 1.63 / np.sqrt(n)  # 1% critical value


def test_values_always_finite():
    z = gaussian_field(CTX, (100_000,))
    assert np.isfinite(z).all()


@pytest.mark.parametrize("shape", [(), (0,), (4, 0)])
def test_bad_shapes_rejected(shape):
    with pytest.raises(ParameterError):
        gaussian_field(CTX, shape)


def test_counter_accounting_no_overlap():
    # distinct (timestep, stream_tag) under one key must map to distinct
    # philox blocks, so their element counters can never collide
    blocks = set()
    for t in range(0, 64):
        for tag in (INIT_NOISE_TAG, STEP_NOISE_TAG):
            blocks.add(context_block(NoiseContext(MASTER, t, tag)))
    assert len(blocks) == 64 * 2


# --- key derivation


def test_derive_keyset_deterministic():
    a = derive_keyset(MASTER, 2)
    b = derive_keyset(MASTER, 2)
    assert a.sync.material == b.sync.material
    assert [k.material for k in a.refs] == [k.material for k in b.refs]


def test_derive_keyset_distinct_keys():
    ks = derive_keyset(MASTER, 2)
    assert ks.sync.material != ks.refs[0].material != ks.refs[1].material


def test_derive_keyset_prefix_consistent():
    two = derive_keyset(MASTER, 2)
    four = derive_keyset(MASTER, 4)
    assert len(four.refs) == 4
    assert four.sync.material == two.sync.material
    assert [k.material for k in four.refs[:2]] == [k.material for k in two.refs]


def test_derive_keyset_requires_two_refs():
    with pytest.raises(ParameterError):
        derive_keyset(MASTER, 1)


def test_keyset_rejects_duplicates():
    with pytest.raises(ParameterError):
        KeySet(sync=MASTER, refs=(MASTER, SecretKey(bytes(32))))


def test_secret_key_repr_redacted():
    assert "00" not in repr(MASTER)
    assert MASTER.to_hex().startswith("000102")


def test_secret_key_length_checked():
    with pytest.raises(ParameterError):
        SecretKey(b"short")


# --- key files


def test_key_file_round_trip(tmp_path):
    import warnings

    path = str(tmp_path / "k.key")
    write_key_file(path, MASTER)
    text = open(path).read()
    assert len(text) == 65 and text.endswith("\n")
    with warnings.catch_warnings():
        warnings.simplefilter("error")  # a 0600 file must not warn
        assert read_key_file(path).material == MASTER.material


def test_key_file_mode_warning(tmp_path):
    import os

    path = str(tmp_path / "k.key")
    write_key_file(path, MASTER)
    os.chmod(path, 0o644)
    with pytest.warns(UserWarning, match="group/other"):
        read_key_file(path)
