import hashlib
import os

import pytest

from psyduck.cli import main
from psyduck.keys import SecretKey, read_key_file

SMALL_CONFIG = """\
schedule.preset = linear-50
protocol.d = 2
protocol.r = 2
sample.shape = 1056
codec.spec = identity
"""


@pytest.fixture()
def workdir(tmp_path):
    cfg = tmp_path / "psyduck.cfg"
    cfg.write_text(SMALL_CONFIG)
    key = tmp_path / "master.key"
    assert main(["keygen", "--out", str(key)]) == 0
    return tmp_path, str(cfg), str(key)


def test_keygen_format_and_mode(tmp_path):
    out = tmp_path / "k.key"
    assert main(["keygen", "--out", str(out)]) == 0
    text = out.read_text()
    assert len(text) == 65 and text.endswith("\n")
    int(text.strip(), 16)  # 64 hex chars
    assert os.stat(out).st_mode & 0o777 == 0o600
    read_key_file(str(out))  # accepted downstream
    other = tmp_path / "k2.key"
    main(["keygen", "--out", str(other)])
    assert other.read_text() != text


def test_encode_decode_round_trip(workdir, capfdbinary):
    tmp, cfg, key = workdir
    payload = tmp / "msg.bin"
    payload.write_bytes(b"attack at dawn")
    container = tmp / "out.psyd"
    assert main(["encode", "--config", cfg, "--key", key,
                 "--in", str(payload), "--out", str(container)]) == 0
    err = capfdbinary.readouterr().err.decode()
    assert "capacity_bytes=128" in err and "payload_bytes=14" in err and "e_sec=" in err

    decoded = tmp / "decoded.bin"
    assert main(["decode", "--config", cfg, "--key", key,
                 "--in", str(container), "--out", str(decoded)]) == 0
    assert decoded.read_bytes() == b"attack at dawn"


def test_decode_payload_to_stdout(workdir, capfdbinary):
    tmp, cfg, key = workdir
    payload = tmp / "msg.bin"
    payload.write_bytes(bytes(range(64)))
    container = tmp / "out.psyd"
    main(["encode", "--config", cfg, "--key", key, "--in", str(payload), "--out", str(container)])
    capfdbinary.readouterr()
    assert main(["decode", "--config", cfg, "--key", key, "--in", str(container)]) == 0
    captured = capfdbinary.readouterr()
    assert captured.out == bytes(range(64))  # stdout carries only the payload


def test_encode_is_deterministic(workdir):
    tmp, cfg, key = workdir
    payload = tmp / "msg.bin"
    payload.write_bytes(b"same inputs, same bytes")
    a, b = tmp / "a.psyd", tmp / "b.psyd"
    assert main(["encode", "--config", cfg, "--key", key, "--in", str(payload), "--out", str(a)]) == 0
    assert main(["encode", "--config", cfg, "--key", key, "--in", str(payload), "--out", str(b)]) == 0
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()


def test_capacity_exceeded_exit_2(workdir, capfd):
    tmp, cfg, key = workdir
    payload = tmp / "big.bin"
    payload.write_bytes(bytes(129))  # capacity is 128 bytes at 1056 cells
    assert main(["encode", "--config", cfg, "--key", key,
                 "--in", str(payload), "--out", str(tmp / "x.psyd")]) == 2
    assert "max 128 bytes" in capfd.readouterr().err


def test_bad_config_exit_3(workdir):
    tmp, _, key = workdir
    bad = tmp / "bad.cfg"
    bad.write_text("protocol.d = banana\n")
    assert main(["encode", "--config", str(bad), "--key", key,
                 "--in", "-", "--out", str(tmp / "x.psyd")]) == 3


def test_truncated_container_exit_4(workdir, capfd):
    tmp, cfg, key = workdir
    payload = tmp / "msg.bin"
    payload.write_bytes(b"shorten me")
    container = tmp / "out.psyd"
    main(["encode", "--config", cfg, "--key", key, "--in", str(payload), "--out", str(container)])
    blob = container.read_bytes()
    container.write_bytes(blob[: len(blob) // 2])
    assert main(["decode", "--config", cfg, "--key", key, "--in", str(container)]) == 4


def test_wrong_key_exit_5(workdir, capfd):
    tmp, cfg, key = workdir
    payload = tmp / "msg.bin"
    payload.write_bytes(b"for your eyes only")
    container = tmp / "out.psyd"
    main(["encode", "--config", cfg, "--key", key, "--in", str(payload), "--out", str(container)])
    from psyduck.keys import write_key_file

    wrong = tmp / "wrong.key"
    write_key_file(str(wrong), SecretKey(os.urandom(32)))
    assert main(["decode", "--config", cfg, "--key", str(wrong), "--in", str(container)]) == 5
    assert "framing" in capfd.readouterr().err


def test_missing_container_exit_4(workdir):
    tmp, cfg, key = workdir
    assert main(["decode", "--config", cfg, "--key", key, "--in", str(tmp / "nope.psyd")]) == 4


def test_sweep_row_counts(workdir, capfd):
    tmp, cfg, key = workdir
    grid = tmp / "grid.txt"
    grid.write_text("d = 1, 2\ncodec = quantize:6\ntrials = 3\n")
    out = tmp / "sweep.csv"
    small = tmp / "small.cfg"
    small.write_text(SMALL_CONFIG.replace("1056", "96"))
    assert main(["sweep", "--config", str(small), "--grid", str(grid), "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 1 + 2 * 3 + 2


def test_sweep_empty_grid_exit_3(workdir):
    tmp, cfg, key = workdir
    grid = tmp / "empty.txt"
    grid.write_text("# intentionally empty\n")
    assert main(["sweep", "--config", cfg, "--grid", str(grid),
                 "--out", str(tmp / "x.csv"), "--trials", "1"]) == 3


def test_env_override_changes_capacity(workdir, capfd, monkeypatch):
    tmp, cfg, key = workdir
    monkeypatch.setenv("PSYDUCK_SAMPLE_SHAPE", "544")
    payload = tmp / "msg.bin"
    payload.write_bytes(b"x")
    assert main(["encode", "--config", cfg, "--key", key,
                 "--in", str(payload), "--out", str(tmp / "x.psyd")]) == 0
    assert "capacity_bytes=64" in capfd.readouterr().err


def test_verify_reports_all_pass(workdir, capfd):
    tmp, cfg, key = workdir
    small = tmp / "verify.cfg"
    small.write_text(SMALL_CONFIG.replace("1056", "544"))
    assert main(["verify", "--config", str(small), "--roundtrips", "2"]) == 0
    out = capfd.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out
