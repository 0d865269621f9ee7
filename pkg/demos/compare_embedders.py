"""Spectral embedding against Isomap, chordal Isomap and LLE on exact
hemisphere samples (fast) or on a rendered sphere (full pipeline).

    python demos/compare_embedders.py [--mode exact|rendered] [--seeds 0 1 2]
"""

import argparse
from collections import defaultdict

import numpy as np

from hemiembed.comparison import compare_embedders
from hemiembed.pipeline import PipelineConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--mode", choices=["exact", "rendered"], default="exact")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = p.parse_args()

    cfg = PipelineConfig(favor_threshold=0.0, row_sum_mode="inverse-r-squared")
    rows = compare_embedders(args.seeds, args.mode, cfg)
    by_method = defaultdict(list)
    for r in rows:
        by_method[r.method].append((r.procrustes_error, r.mean_angle_error))
    print(f"{'method':15s} {'procrustes':>10s} {'angle (deg)':>12s}")
    for method, vals in by_method.items():
        err, ang = np.mean(vals, axis=0)
        print(f"{method:15s} {err:10.4f} {ang:12.2f}")


if __name__ == "__main__":
    main()
