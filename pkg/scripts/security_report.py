#!/usr/bin/env python3
"""Run the security batteries and print a one-page report.

Covers the normalized security-error envelope across (d, r), the
mixed-noise indistinguishability battery with its fault-injection power
check, and the statistical detector's null calibration.
"""

import argparse

import numpy as np

from psyduck.analysis import bound_check, detector_auc, stochastic_security_test, trial_key
from psyduck.codec import CodecSpec, decode_latent
from psyduck.diffusion import BackendSpec, schedule_from_preset
from psyduck.keys import derive_keyset
from psyduck.protocol import (
    CellMap,
    ProtocolParams,
    StegoContainer,
    cover_sample,
    encode,
    max_payload_bytes,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=30)
    parser.add_argument("--detector-samples", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    sched = schedule_from_preset("linear-50")
    backend = BackendSpec()

    print("== security-error envelope ==")
    bound = bound_check(sched, backend, trials=args.trials, seed=args.seed)
    for (d, r), rho in sorted(bound.ratios.items()):
        print(f"  d={d:2d} r={r}: rho={rho:.3f}")
    print(f"  anchor rho(1,2)={bound.baseline:.3f}; "
          f"max {bound.max_ratio:.3f} <= 3x anchor: {'PASS' if bound.passed else 'FAIL'}")

    print("== mixed-noise battery ==")
    honest = stochastic_security_test(seed=args.seed)
    for e in honest.entries:
        print(f"  r={e.r} {e.test:14s}: p={e.p_value:.4f} corrected={e.p_corrected:.4f}")
    print(f"  all pass at corrected 1%: {'PASS' if honest.passed else 'FAIL'}")
    fault = stochastic_security_test(seed=args.seed, variance_scale=1.5)
    caught = any(e.test == "variance" and not e.passed for e in fault.entries)
    print(f"  1.5x variance fault caught: {'PASS' if caught else 'FAIL'}")

    print("== detector null calibration ==")
    params = ProtocolParams(d=1, r=2, cells=CellMap.unit((1056,)))
    identity = CodecSpec()
    rng = np.random.default_rng(args.seed)
    stegos, covers = [], []
    for i in range(args.detector_samples):
        keys = derive_keyset(trial_key(args.seed, 1, i), 2)
        payload = rng.bytes(max_payload_bytes(params))
        stegos.append(encode(payload, keys, params, sched, backend, identity))
        keys = derive_keyset(trial_key(args.seed, 2, i), 2)
        covers.append(
            StegoContainer.from_sample(decode_latent(cover_sample(keys, params, sched, backend), identity))
        )
    report = detector_auc(covers, stegos, seed=args.seed)
    inside = report.ci_low <= 0.5 <= report.ci_high
    print(f"  AUC={report.auc:.3f} 95% CI=({report.ci_low:.3f}, {report.ci_high:.3f}) "
          f"contains 0.5: {'PASS' if inside else 'FAIL'}")


if __name__ == "__main__":
    main()
