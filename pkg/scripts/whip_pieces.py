"""Ground-state level of truncated whip pieces against the strip threshold.

Prints lambda_1 of each bent piece for a range of half-lengths L, divided by
(pi_p)^p, next to the calibration target 1 - margin.  A ratio that stays
above the target for every L means whip_layout cannot succeed at this h.
"""
import argparse
import time

from plap.eigensolver import solve_ground_state
from plap.geometry import _piece_grid
from plap.spectral import pi_p


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs="+", default=[2.0, 3.0])
    ap.add_argument("--pieces", type=int, default=3)
    ap.add_argument("--lengths", type=float, nargs="+", default=[4.0, 8.0, 16.0])
    ap.add_argument("--h", type=float, default=1 / 32)
    ap.add_argument("--margin", type=float, default=0.10)
    args = ap.parse_args()
    print("p,piece,L,nodes,lambda,ratio,target,seconds")
    for p in args.p:
        ref = pi_p(p, args.h) ** p
        for n in range(args.pieces):
            for L in args.lengths:
                t0 = time.perf_counter()
                grid = _piece_grid(n, L, args.h)
                lam = solve_ground_state(grid, p).lam
                print(f"{p},{n},{L},{grid.n_interior},{lam:.8f},{lam / ref:.6f},{1 - args.margin},"
                      f"{time.perf_counter() - t0:.1f}", flush=True)


if __name__ == "__main__":
    main()
