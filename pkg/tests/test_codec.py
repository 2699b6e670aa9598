import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psyduck.codec import CodecSpec, decode_latent, encode_latent
from psyduck.diffusion import Sample
from psyduck.errors import ParameterError
from psyduck.keys import NoiseContext, SecretKey, gaussian_field

FIELD = gaussian_field(NoiseContext(SecretKey(bytes(range(32))), 0, 2), (4096,))


def test_identity_is_bit_exact():
    z = Sample(FIELD.copy())
    out = decode_latent(z, CodecSpec())
    assert np.array_equal(out.values, z.values)
    assert out.space == "pixel"
    back = encode_latent(out, CodecSpec())
    assert np.array_equal(back.values, z.values)
    assert back.space == "latent"


def test_quantize_error_bound_is_half_step():
    spec = CodecSpec(kind="quantize", bits=8, clip=(-4.0, 4.0))
    z = Sample(np.clip(FIELD, -4, 4))
    out = decode_latent(z, spec)
    assert np.max(np.abs(out.values - z.values)) <= 8.0 / 2**9 + 1e-12


def test_quantize_two_bit_levels():
    spec = CodecSpec(kind="quantize", bits=2, clip=(-1.0, 1.0))
    # enumerate the midrise levels directly
    levels = -1.0 + (np.arange(4) + 0.5) * 0.5
    assert np.allclose(levels, [-0.75, -0.25, 0.25, 0.75])
    out = decode_latent(Sample(np.array([0.3])), spec)
    assert out.values[0] == pytest.approx(0.25)
    # every output value must be one of the levels
    grid = decode_latent(Sample(np.linspace(-2, 2, 101)), spec)
    assert np.isin(np.round(grid.values, 10), np.round(levels, 10)).all()


def test_quantize_is_idempotent():
    spec = CodecSpec(kind="quantize", bits=5)
    once = decode_latent(Sample(FIELD.copy()), spec)
    twice = decode_latent(Sample(once.values.copy()), spec)
    assert np.array_equal(once.values, twice.values)


def test_encode_after_decode_is_fixed_point():
    spec = CodecSpec(kind="quantize", bits=4)
    out = decode_latent(Sample(FIELD.copy()), spec)
    back = encode_latent(out, spec)
    assert np.array_equal(back.values, out.values)


def test_quantize_noise_roundtrip_error_model():
    # error std ~= sqrt(q^2/12 + noise_std^2) within 10% at 1e6 elements
    spec = CodecSpec(kind="quantize_noise", bits=8, noise_std=0.01)
    big = gaussian_field(NoiseContext(SecretKey(bytes(32)), 1, 2), (1_000_000,))
    z = Sample(big)
    out = decode_latent(z, spec)
    err = out.values - z.values
    q = spec.step
    expected = np.sqrt(q**2 / 12.0 + spec.noise_std**2)
    assert abs(err.std() - expected) / expected < 0.10


def test_quantize_noise_is_deterministic_per_content():
    spec = CodecSpec(kind="quantize_noise", bits=6, noise_std=0.05)
    z = Sample(FIELD.copy())
    a = decode_latent(z, spec)
    b = decode_latent(z, spec)
    assert np.array_equal(a.values, b.values)
    # but different content draws different channel noise
    other = decode_latent(Sample(FIELD + 0.5), spec)
    assert not np.array_equal(a.values - _quantized(z, spec), other.values - _quantized(Sample(FIELD + 0.5), spec))


def _quantized(z, spec):
    return decode_latent(z, CodecSpec(kind="quantize", bits=spec.bits, clip=spec.clip)).values


def test_rmse_monotone_in_bits_and_noise():
    z = Sample(FIELD.copy())
    rmses = []
    for bits in (8, 6, 4, 2):
        out = decode_latent(z, CodecSpec(kind="quantize", bits=bits))
        rmses.append(float(np.sqrt(np.mean((out.values - z.values) ** 2))))
    assert all(a <= b for a, b in zip(rmses, rmses[1:]))
    noisy = []
    for std in (0.0, 0.01, 0.05, 0.2):
        out = decode_latent(z, CodecSpec(kind="quantize_noise", bits=8, noise_std=std))
        noisy.append(float(np.sqrt(np.mean((out.values - z.values) ** 2))))
    assert all(a <= b for a, b in zip(noisy, noisy[1:]))


@given(st.sampled_from(["identity", "quantize:8", "quantize:1", "quantize_noise:8:0.01", "quantize_noise:3:2"]))
def test_spec_string_round_trip(text):
    spec = CodecSpec.parse(text)
    assert CodecSpec.parse(spec.to_string()) == spec


@pytest.mark.parametrize(
    "bad", ["quantize", "quantize:0", "quantize:17", "quantize_noise:8", "identity:3", "jpeg:90", "quantize_noise:8:-1"]
)
def test_bad_spec_strings_rejected(bad):
    with pytest.raises(ParameterError):
        CodecSpec.parse(bad)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=2**32 - 1))
def test_quantizer_idempotence_property(bits, seed):
    rng = np.random.default_rng(seed)
    z = Sample(rng.normal(0, 2, size=64))
    spec = CodecSpec(kind="quantize", bits=bits)
    once = decode_latent(z, spec)
    assert np.array_equal(decode_latent(Sample(once.values.copy()), spec).values, once.values)
    assert np.max(np.abs(np.clip(z.values, -4, 4) - once.values)) <= spec.step / 2 + 1e-12
