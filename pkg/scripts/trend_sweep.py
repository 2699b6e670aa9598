#!/usr/bin/env python3
"""Reproduce the headline trend tables on the closed-form backend.

Writes two CSVs under results/: accuracy vs codec bit depth at fixed
divergence, and accuracy vs divergence depth at fixed codec.  Runtime is
about a minute at the default trial count.
"""

import argparse
import os

from psyduck.analysis import SweepGrid, run_sweep
from psyduck.diffusion import BackendSpec, schedule_from_preset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--out-dir", default="results")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    sched = schedule_from_preset("linear-50")
    backend = BackendSpec()
    shape = (1056,)

    bits_grid = SweepGrid(
        d_values=(2,),
        codecs=("quantize:8", "quantize:6", "quantize:4", "quantize:2"),
    )
    out = os.path.join(args.out_dir, "accuracy_vs_bits.csv")
    aggs = run_sweep(bits_grid, args.trials, out, sample_shape=shape,
                     sched=sched, backend=backend, seed=args.seed)
    print(f"wrote {out}")
    for agg in aggs:
        print(f"  {agg['codec']:12s} accuracy={agg['bit_accuracy']:.4f}")

    depth_grid = SweepGrid(d_values=(1, 2, 3), codecs=("quantize:6",))
    out = os.path.join(args.out_dir, "accuracy_vs_depth.csv")
    aggs = run_sweep(depth_grid, args.trials, out, sample_shape=shape,
                     sched=sched, backend=backend, seed=args.seed)
    print(f"wrote {out}")
    for agg in aggs:
        print(f"  d={agg['d']} accuracy={agg['bit_accuracy']:.4f} "
              f"margin={agg['separation_margin']:.4f} E_sec={agg['E_sec']:.3f}")


if __name__ == "__main__":
    main()
