"""Gap verdict for a unit-width slab with an attached disc, as the disc grows."""
import argparse

import numpy as np

from plap.geometry import SlabWithBall
from plap.spectral import gap_certificate, massive_core_radius


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--h", type=float, default=1 / 32)
    ap.add_argument("--factors", type=float, nargs="+", default=[0.5, 0.75, 1.0, 1.5, 2.0, 3.0])
    args = ap.parse_args()
    rt = massive_core_radius(args.p, 1, args.h)
    print(f"# threshold radius {rt:.4f}")
    print("factor,radius,verdict,upper_bound,ep_estimate,escape_fraction")
    for f in args.factors:
        rep = gap_certificate(SlabWithBall(0.5, f * rt), 1, args.p, args.h)
        print(f"{f},{f * rt:.4f},{rep.verdict},{rep.upper_bound:.6f},{rep.ep_estimate:.6f},"
              f"{rep.escape_fraction:.3g}", flush=True)


if __name__ == "__main__":
    main()
