"""Client side of the psyduck-bridge/1 subprocess wire protocol.

The bridge exposes a real (or mock) latent diffusion pipeline as an
external backend: newline-delimited JSON requests on its stdin, responses
on its stdout, tensors as base64 little-endian f32 buffers, one request in
flight at a time.  Keyed noise never crosses the wire; the bridge returns
only the deterministic mean prediction, and this side injects sigma_t-
scaled noise itself, preserving the mean-plus-noise decomposition the
security argument relies on.
"""

from __future__ import annotations

import base64
import json
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .errors import BridgeError, BridgeTimeoutError

PROTOCOL_VERSION = "psyduck-bridge/1"
DEFAULT_TIMEOUT = 120.0


def tensor_to_wire(values: np.ndarray) -> dict:
    arr = np.ascontiguousarray(values, dtype="<f4")
    return {
        "dtype": "f32",
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def tensor_from_wire(obj: dict) -> np.ndarray:
    if not isinstance(obj, dict) or obj.get("dtype") != "f32":
        raise BridgeError(f"bad tensor payload: {obj!r}", code="bad-tensor")
    try:
        raw = base64.b64decode(obj["data"], validate=True)
        shape = tuple(int(s) for s in obj["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise BridgeError(f"bad tensor payload: {exc}", code="bad-tensor") from exc
    expected = 4 * int(np.prod(shape)) if shape else 0
    if len(raw) != expected:
        raise BridgeError(
            f"tensor buffer has {len(raw)} bytes, shape {shape} implies {expected}",
            code="bad-tensor",
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


@dataclass
class BridgeInfo:
    version: str
    model: str
    space: str
    latent_shape: tuple[int, ...]
    T: int
    beta_start: float
    beta_end: float


class BridgeClient:
    """Launches and drives one bridge subprocess.

    Strict request/response pairing by id; a missing or late response past
    the timeout kills the subprocess and raises BridgeTimeoutError.
    """

    def __init__(self, command: str | list[str], timeout: float = DEFAULT_TIMEOUT):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise BridgeError("empty bridge command")
        self.timeout = timeout
        self._next_id = 0
        self._info: BridgeInfo | None = None
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"failed to launch bridge {argv!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def request(self, op: str, **fields) -> dict:
        if self._proc.poll() is not None:
            raise BridgeError(f"bridge process exited with code {self._proc.returncode}")
        self._next_id += 1
        rid = self._next_id
        message = {"id": rid, "op": op, **fields}
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise BridgeError(f"failed to send request: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close(kill=True)
            raise BridgeTimeoutError(f"bridge did not answer {op!r} within {self.timeout}s")
        if line is None:
            raise BridgeError("bridge closed its output stream")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"unparseable bridge response: {line!r}") from exc
        if response.get("id") != rid:
            raise BridgeError(
                f"response id {response.get('id')!r} does not match request id {rid}"
            )
        if not response.get("ok"):
            err = response.get("error") or {}
            raise BridgeError(
                err.get("message", "bridge error"), code=err.get("code", "error")
            )
        return response

    def init(self) -> BridgeInfo:
        response = self.request("init", version=PROTOCOL_VERSION)
        version = response.get("version")
        if version != PROTOCOL_VERSION:
            raise BridgeError(f"bridge speaks {version!r}, expected {PROTOCOL_VERSION!r}")
        sched = response.get("schedule") or {}
        try:
            self._info = BridgeInfo(
                version=version,
                model=str(response.get("model", "")),
                space=str(response.get("space", "latent")),
                latent_shape=tuple(int(s) for s in response["latent_shape"]),
                T=int(sched["T"]),
                beta_start=float(sched["beta_start"]),
                beta_end=float(sched["beta_end"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BridgeError(f"malformed init response: {exc}") from exc
        return self._info

    @property
    def info(self) -> BridgeInfo:
        if self._info is None:
            return self.init()
        return self._info

    def model_predict(self, values: np.ndarray, t: int, seed_hex: str | None = None) -> np.ndarray:
        fields = {"t": int(t), "tensor": tensor_to_wire(values)}
        if seed_hex is not None:
            fields["seed"] = seed_hex
        response = self.request("model_predict", **fields)
        out = tensor_from_wire(response.get("tensor"))
        if out.shape != tuple(values.shape):
            raise BridgeError(
                f"model_predict returned shape {out.shape}, expected {tuple(values.shape)}"
            )
        return out

    def sigma(self, t: int) -> float:
        return float(self.request("sigma", t=int(t))["sigma"])

    def enc(self, values: np.ndarray) -> np.ndarray:
        return tensor_from_wire(self.request("enc", tensor=tensor_to_wire(values)).get("tensor"))

    def dec(self, values: np.ndarray) -> np.ndarray:
        return tensor_from_wire(self.request("dec", tensor=tensor_to_wire(values)).get("tensor"))

    def shutdown(self) -> None:
        try:
            self.request("shutdown")
        except BridgeError:
            pass
        self.close()

    def close(self, kill: bool = False) -> None:
        if self._proc.poll() is None:
            if kill:
                self._proc.kill()
            else:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
        self._proc.wait()

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close(kill=True)


def launch_bridge(command: str, timeout: float = DEFAULT_TIMEOUT) -> BridgeClient:
    """Launch a bridge and complete the handshake."""
    client = BridgeClient(command, timeout=timeout)
    client.init()
    return client
