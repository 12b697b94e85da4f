"""Find the smallest width constant kappa whose Matern class member certifies at B/3."""

import argparse

from gplb.kernels import Kernel, unit_grid
from gplb.rkhs import calibrate_kappa, matern_width


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--lengthscale", type=float, default=0.2)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--B", type=float, default=1.7)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--grid", type=int, default=None, help="certificate points per axis")
    p.add_argument("--tol", type=float, default=1e-3)
    args = p.parse_args()
    per_axis = args.grid or {1: 256, 2: 64}.get(args.d, 16)
    k = Kernel.matern(args.nu, args.lengthscale)
    kappa = calibrate_kappa(k, args.d, args.eps, args.B, unit_grid(per_axis, args.d), tol=args.tol)
    w = matern_width(args.eps, args.B, args.nu, kappa)
    print(f"kappa={kappa:.6g} w={w:.6g} cells_per_axis={int(1 / w)}")


if __name__ == "__main__":
    main()
