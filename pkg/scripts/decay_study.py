"""Fitted against theoretical decay rates for slab-with-disc ground states."""
import argparse

from plap.eigensolver import solve_ground_state
from plap.geometry import SlabWithBall, build_grid
from plap.spectral import default_layout, estimate_Ep, estimate_r0, fit_decay, theoretical_decay


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--h", type=float, default=1 / 32)
    ap.add_argument("--radii", type=float, nargs="+", default=[1.0, 1.5, 2.35])
    args = ap.parse_args()
    print("radius,lambda,Ep,alpha_theory,alpha_fit,n_bins")
    for r in args.radii:
        spec = SlabWithBall(0.5, r)
        win, R_list, W_list = default_layout(spec, args.h)
        res = solve_ground_state(build_grid(spec, args.h, win), args.p)
        ep = estimate_Ep(spec, args.p, R_list, W_list, args.h)
        model = theoretical_decay(res.lam, ep.extrapolated, args.p)
        model = theoretical_decay(res.lam, ep.extrapolated, args.p, estimate_r0(ep, model.eps_lambda))
        fit = fit_decay(res.u)
        print(f"{r},{res.lam:.6f},{ep.extrapolated:.6f},{model.alpha_theory:.5f},{fit.alpha_fit:.5f},"
              f"{fit.n_bins}", flush=True)


if __name__ == "__main__":
    main()
