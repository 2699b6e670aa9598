import numpy as np
import pytest

from psyduck import (
    BackendSpec,
    CellMap,
    CodecSpec,
    ProtocolParams,
    SecretKey,
    derive_keyset,
    schedule_from_preset,
)

MASTER = SecretKey(bytes(range(32)))


@pytest.fixture(scope="session")
def sched50():
    return schedule_from_preset("linear-50")


@pytest.fixture(scope="session")
def sched1000():
    return schedule_from_preset("linear-1000")


@pytest.fixture(scope="session")
def backend():
    return BackendSpec()


@pytest.fixture(scope="session")
def backend_det():
    return BackendSpec(step_mode="deterministic")


@pytest.fixture()
def master():
    return MASTER


@pytest.fixture()
def keyset():
    return derive_keyset(MASTER, 2)


@pytest.fixture()
def keyset4():
    return derive_keyset(MASTER, 4)


@pytest.fixture()
def params_small(keyset):
    return ProtocolParams(d=2, r=2, cells=CellMap.unit((256,)))


@pytest.fixture()
def identity_codec():
    return CodecSpec()


def random_payload(rng: np.random.Generator, n: int) -> bytes:
    return rng.bytes(n)
