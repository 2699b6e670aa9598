"""Command-line surface: keygen, encode, decode, sweep, verify.

stdout carries only payload bytes or reports meant for capture; all
diagnostics go to stderr, so the tool composes in pipes.  Exit codes:
0 success, 1 verify failure, 2 capacity, 3 configuration, 4 I/O or
backend, 5 framing (wrong key / corrupted container).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time

import numpy as np

from . import analysis, config as config_mod, protocol
from .bridge_client import launch_bridge
from .codec import CodecSpec, decode_latent
from .errors import (
    BridgeError,
    CapacityError,
    ConfigError,
    ContainerFormatError,
    FramingError,
    ParameterError,
    PsyduckError,
    ScheduleMismatchError,
    ShapeMismatchError,
)
from .keys import SecretKey, derive_keyset, read_key_file, write_key_file
from .protocol import StegoContainer

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CAPACITY = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_FRAMING = 5


def _err(message: str) -> None:
    print(f"psyduck: {message}", file=sys.stderr)


def _load_config(args) -> config_mod.Config:
    cfg = config_mod.load_config(args.config) if args.config else config_mod.Config()
    cfg = config_mod.apply_env_overrides(cfg)
    if getattr(args, "backend", None):
        backend = args.backend
        if backend != "analytic" and not backend.startswith("bridge:"):
            raise ConfigError(f"--backend must be 'analytic' or 'bridge:<command>', got {backend!r}")
        cfg = dataclasses.replace(cfg, backend=backend)
    return cfg


def _build_runtime(cfg: config_mod.Config):
    bridge = None
    if cfg.backend.startswith("bridge:"):
        bridge = launch_bridge(cfg.backend[len("bridge:"):])
        info = bridge.info
        runtime = config_mod.build_runtime(cfg, bridge=bridge)
        sched = runtime.sched
        if info.T != sched.T or not (
            np.isclose(info.beta_start, sched.beta[0]) and np.isclose(info.beta_end, sched.beta[-1])
        ):
            bridge.shutdown()
            raise ConfigError(
                f"bridge schedule (T={info.T}, beta {info.beta_start}..{info.beta_end}) "
                f"does not match config (T={sched.T}, beta {sched.beta[0]}..{sched.beta[-1]})"
            )
        if tuple(info.latent_shape) != cfg.sample_shape:
            bridge.shutdown()
            raise ConfigError(
                f"bridge latent shape {info.latent_shape} does not match "
                f"sample.shape {cfg.sample_shape}"
            )
        return runtime
    return config_mod.build_runtime(cfg)


def _read_payload(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def cmd_keygen(args) -> int:
    key = SecretKey.generate()
    write_key_file(args.out, key)
    _err(f"wrote key file {args.out}")
    return EXIT_OK


def cmd_encode(args) -> int:
    cfg = _load_config(args)
    runtime = _build_runtime(cfg)
    keys = derive_keyset(read_key_file(args.key), runtime.params.r)
    payload = _read_payload(args.inp)
    message = protocol.pack_message(payload, runtime.params)
    stego_latent = protocol.encode_digits(
        message, keys, runtime.params, runtime.sched, runtime.backend
    )
    container = StegoContainer.from_sample(decode_latent(stego_latent, runtime.codec))
    container.save(args.out)
    e_sec = analysis.security_error(
        stego_latent, keys, runtime.params, runtime.sched, runtime.backend
    )
    _err(
        f"capacity_bytes={protocol.max_payload_bytes(runtime.params)} "
        f"payload_bytes={len(payload)} e_sec={e_sec:.6g}"
    )
    if runtime.backend.bridge is not None:
        runtime.backend.bridge.shutdown()
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = _load_config(args)
    runtime = _build_runtime(cfg)
    keys = derive_keyset(read_key_file(args.key), runtime.params.r)
    container = StegoContainer.load(args.inp)
    payload = protocol.decode(
        container, keys, runtime.params, runtime.sched, runtime.backend, runtime.codec
    )
    if args.out and args.out != "-":
        with open(args.out, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.buffer.flush()
    _err(f"decoded {len(payload)} bytes")
    if runtime.backend.bridge is not None:
        runtime.backend.bridge.shutdown()
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    runtime = _build_runtime(cfg)
    with open(args.grid, "r", encoding="utf-8") as fh:
        grid, grid_trials = config_mod.parse_grid(fh.read())
    trials = args.trials or grid_trials
    if not trials or trials < 1:
        raise ConfigError("sweep needs a positive trial count (--trials or 'trials =' in grid)")
    aggregates = analysis.run_sweep(
        grid,
        trials,
        args.out,
        sample_shape=cfg.sample_shape,
        sched=runtime.sched,
        backend=runtime.backend,
        final_step_key_mode=cfg.final_step_key_mode,
        cell_shape=cfg.cell_shape,
        seed=args.seed,
        include_auc=args.auc,
    )
    _err(f"wrote {args.out}: {len(aggregates)} grid points x {trials} trials")
    for agg in aggregates:
        _err(
            f"  d={agg['d']} r={agg['r']} {agg['precision']} {agg['codec']}: "
            f"accuracy={agg['bit_accuracy']:.4f} E_sec={agg['E_sec']:.4g}"
        )
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    runtime = _build_runtime(cfg)
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failures += 1

    # Round-trip oracle (identity codec; exactness needs a clean channel).
    identity = CodecSpec()
    t0 = time.perf_counter()
    d_values = [d for d in (1, 2, 3, 10) if d + 1 <= runtime.sched.T]
    total = ok_count = 0
    rng = np.random.default_rng(args.seed)
    for d in d_values:
        params = protocol.ProtocolParams(
            d=d,
            r=runtime.params.r,
            cells=runtime.params.cells,
            final_step_key_mode=runtime.params.final_step_key_mode,
            step_mode=runtime.params.step_mode,
            precision=runtime.params.precision,
        )
        for i in range(args.roundtrips):
            keys = derive_keyset(analysis.trial_key(args.seed, d, i), params.r)
            payload = rng.bytes(protocol.max_payload_bytes(params))
            container = protocol.encode(
                payload, keys, params, runtime.sched, runtime.backend, identity
            )
            out = protocol.decode(
                container, keys, params, runtime.sched, runtime.backend, identity
            )
            total += 1
            ok_count += int(out == payload)
    report(
        "round-trip identity",
        ok_count == total,
        f"{ok_count}/{total} exact payload round trips, d in {d_values}, "
        f"{time.perf_counter() - t0:.1f}s",
    )

    bound = analysis.bound_check(
        runtime.sched, runtime.backend, trials=args.trials, seed=args.seed
    )
    report(
        "security-error bound",
        bound.passed,
        f"max ratio {bound.max_ratio:.3f} at (d,r)={bound.max_point}, "
        f"baseline {bound.baseline:.3f}, limit {3 * bound.baseline:.3f}",
    )

    security = analysis.stochastic_security_test(seed=args.seed)
    worst = min(security.entries, key=lambda e: e.p_corrected)
    report(
        "mixed-noise indistinguishability",
        security.passed,
        f"min corrected p={worst.p_corrected:.4f} ({worst.test}, r={worst.r}) "
        f"over {len(security.entries)} tests at alpha={security.alpha}",
    )

    fault = analysis.stochastic_security_test(seed=args.seed, variance_scale=1.5)
    report(
        "fault-injection power",
        any(e.test == "variance" and not e.passed for e in fault.entries),
        "1.5x variance fault is caught by the variance test",
    )
    return EXIT_OK if failures == 0 else EXIT_VERIFY_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psyduck",
        description="training-free steganography in keyed diffusion trajectories",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a master key file")
    p.add_argument("--out", required=True, help="key file path")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("encode", help="embed a payload into a stego container")
    p.add_argument("--config", help="config file (defaults apply when omitted)")
    p.add_argument("--key", required=True, help="master key file")
    p.add_argument("--in", dest="inp", default="-", help="payload file or - for stdin")
    p.add_argument("--out", required=True, help="container output path")
    p.add_argument("--backend", help="analytic or bridge:'<command>'")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="recover a payload from a stego container")
    p.add_argument("--config", help="config file (defaults apply when omitted)")
    p.add_argument("--key", required=True, help="master key file")
    p.add_argument("--in", dest="inp", required=True, help="container path")
    p.add_argument("--out", default="-", help="payload output path or - for stdout")
    p.add_argument("--backend", help="analytic or bridge:'<command>'")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="run an accuracy/security sweep grid")
    p.add_argument("--config", help="config file (defaults apply when omitted)")
    p.add_argument("--grid", required=True, help="grid file")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--trials", type=int, help="trials per grid point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--auc", action="store_true", help="attach detector AUC per grid point")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the property batteries and print PASS/FAIL")
    p.add_argument("--config", help="config file (defaults apply when omitted)")
    p.add_argument("--trials", type=int, default=30, help="bound-check trials per point")
    p.add_argument("--roundtrips", type=int, default=10, help="payloads per d value")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        _err(f"capacity error: {exc}")
        return EXIT_CAPACITY
    except FramingError as exc:
        _err(f"framing error: {exc}")
        return EXIT_FRAMING
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except (ParameterError, ScheduleMismatchError, ShapeMismatchError) as exc:
        _err(f"parameter error: {exc}")
        return EXIT_CONFIG
    except ContainerFormatError as exc:
        _err(f"container error: {exc}")
        return EXIT_IO
    except BridgeError as exc:
        _err(f"bridge error: {exc}")
        return EXIT_IO
    except OSError as exc:
        _err(f"i/o error: {exc}")
        return EXIT_IO
    except PsyduckError as exc:
        _err(str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
