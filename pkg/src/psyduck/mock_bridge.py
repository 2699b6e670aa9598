"""Reference bridge responder with no ML runtime.

Serves the psyduck-bridge/1 wire protocol over stdio around a tiny
analytic stand-in model: the mean prediction shrinks the input by
sqrt(alpha_t) (the exact denoiser for a standard normal prior) and the
autoencoder pair is the identity, so tensors survive a round trip
bit-exactly.  Usable both as the conformance-test peer and as a live
target for `--backend bridge:"python -m psyduck.mock_bridge"`.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .bridge_client import PROTOCOL_VERSION, tensor_from_wire, tensor_to_wire
from .errors import BridgeError


class MockModel:
    def __init__(self, latent_shape: tuple[int, ...], T: int, beta_start: float, beta_end: float):
        self.latent_shape = latent_shape
        self.T = T
        self.beta_start = beta_start
        self.beta_end = beta_end
        beta = np.linspace(beta_start, beta_end, T)
        self.alpha = 1.0 - beta
        abar = np.cumprod(self.alpha)
        abar_prev = np.concatenate(([1.0], abar[:-1]))
        self.sigma = np.sqrt(beta * (1.0 - abar_prev) / (1.0 - abar))

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise BridgeError(f"timestep {t} outside 1..{self.T}", code="bad-timestep")

    def predict(self, x: np.ndarray, t: int) -> np.ndarray:
        self.check_t(t)
        return (np.sqrt(self.alpha[t - 1]) * x.astype(np.float64)).astype(np.float32)


def _parse_shape(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def serve(args: argparse.Namespace) -> int:
    if args.fail_init:
        print("mock bridge: simulated model load failure", file=sys.stderr)
        return 1
    T, b0, b1 = args.schedule
    model = MockModel(_parse_shape(args.latent_shape), int(T), b0, b1)
    out = sys.stdout
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        rid = None
        try:
            request = json.loads(line)
            rid = request.get("id")
            op = request.get("op")
            if args.hang_op and op == args.hang_op:
                time.sleep(3600.0)
            if op == "init":
                body = {
                    "version": PROTOCOL_VERSION,
                    "model": args.model,
                    "space": "latent",
                    "latent_shape": list(model.latent_shape),
                    "schedule": {"T": model.T, "beta_start": model.beta_start,
                                 "beta_end": model.beta_end},
                }
            elif op == "model_predict":
                x = tensor_from_wire(request.get("tensor"))
                body = {"tensor": tensor_to_wire(model.predict(x, int(request["t"])))}
            elif op == "sigma":
                t = int(request["t"])
                model.check_t(t)
                body = {"sigma": float(model.sigma[t - 1])}
            elif op in ("enc", "dec"):
                # identity autoencoder: the round trip must be bit-exact
                body = {"tensor": dict(request.get("tensor") or {})}
                tensor_from_wire(body["tensor"])  # validate
            elif op == "shutdown":
                out.write(json.dumps({"id": rid, "ok": True}) + "\n")
                out.flush()
                return 0
            else:
                raise BridgeError(f"unknown op {op!r}", code="unknown-op")
            out.write(json.dumps({"id": rid, "ok": True, **body}) + "\n")
        except json.JSONDecodeError as exc:
            out.write(json.dumps({
                "id": None, "ok": False,
                "error": {"code": "malformed", "message": f"unparseable request: {exc}"},
            }) + "\n")
        except BridgeError as exc:
            out.write(json.dumps({
                "id": rid, "ok": False,
                "error": {"code": exc.code, "message": str(exc)},
            }) + "\n")
        except (KeyError, TypeError, ValueError) as exc:
            out.write(json.dumps({
                "id": rid, "ok": False,
                "error": {"code": "bad-request", "message": f"{type(exc).__name__}: {exc}"},
            }) + "\n")
        out.flush()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="mock psyduck bridge responder")
    parser.add_argument("--model", default="mock")
    parser.add_argument("--latent-shape", default="4,8,8")
    parser.add_argument("--schedule", default="10,0.0001,0.05",
                        type=lambda s: tuple(float(p) for p in s.split(",")),
                        help="T,beta_start,beta_end")
    parser.add_argument("--hang-op", default=None,
                        help="sleep forever on this op (timeout testing)")
    parser.add_argument("--fail-init", action="store_true",
                        help="simulate a model load failure (exit 1)")
    return serve(parser.parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
