"""Threshold-at-infinity estimates for the straight strip under refinement."""
import argparse
import math

from plap.geometry import StraightLine, Waveguide
from plap.spectral import estimate_Ep, pi_p


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs="+", default=[2.0, 3.0])
    ap.add_argument("--h", type=float, nargs="+", default=[1 / 16, 1 / 32, 1 / 64])
    ap.add_argument("--windows", type=float, nargs="+", default=[12.0, 20.0])
    args = ap.parse_args()
    strip = Waveguide(StraightLine(), 0.5)
    print("p,h,window,R,lambda_ext,rel_error")
    for p in args.p:
        ref = math.pi ** 2 if p == 2 else pi_p(p) ** p
        for h in args.h:
            ep = estimate_Ep(strip, p, [1.0, 2.0, 3.0], args.windows, h)
            for R, W, lam in ep.table:
                print(f"{p},{h},{W},{R},{lam:.8f},{lam / ref - 1:+.4%}", flush=True)


if __name__ == "__main__":
    main()
