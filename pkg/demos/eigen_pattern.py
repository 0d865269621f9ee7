"""Smallest Laplacian eigenvalues on exact hemisphere samples against the
spherical-harmonic pattern 2, 6, 6, 12 (Dirichlet) and 0, 2, 2, 6, 6 (Neumann).

    python demos/eigen_pattern.py [--count 2000]
"""

import argparse

from hemiembed.claims import eigen_pattern_check


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--row-sum", choices=["constant", "inverse-r-squared"], default="inverse-r-squared")
    args = p.parse_args()

    chk = eigen_pattern_check(count=args.count, row_sum=args.row_sum)
    print(f"scale {chk.scale:.4g}, correlation of z with the Dirichlet vector {chk.z_correlation:.4f}")
    print(f"{'condition':10s} {'i':>2s} {'expected':>8s} {'scaled':>8s}")
    for (cond, i, exp, rec), rel in zip(chk.series(), chk.relative_residuals):
        print(f"{cond:10s} {i:2d} {exp:8.2f} {rec:8.3f}   {rel:6.1%}")
    print(f"largest relative residual {chk.max_residual:.1%}")


if __name__ == "__main__":
    main()
