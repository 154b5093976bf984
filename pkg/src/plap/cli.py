"""Command-line front end: ``plap <command> --config FILE [--out DIR] [--seed N]``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, config_digest, load_config, load_domain, _number
from .eigensolver import (
    courant_fischer_p2, piece_ground_states, solve_ground_state, sweep_perturbed,
)
from .errors import PlapError
from .geometry import build_grid
from .spectral import (
    _calibrated, check_caccioppoli, default_layout, disjoint_pieces, estimate_Ep, estimate_r0,
    fit_decay, gap_certificate, gradient_decay_profile, radial_profile, theoretical_decay,
)

SCHEMA_VERSION = 1
COMMANDS = ("eig", "lsbound", "epinf", "decay", "perturb", "gap", "check")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("plap")


class SolverFailure(Exception):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}


# ------------------------------------------------------------ output helpers

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    _atomic_write(path, buf.getvalue())


def payload_json(payload) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False)


# ------------------------------------------------------------ commands

def _grid(cfg: RunConfig):
    window = cfg.window or default_layout(cfg.domain, cfg.h)[0]
    return build_grid(cfg.domain, cfg.h, window)


def _ep_lists(cfg: RunConfig):
    _, R_def, W_def = default_layout(cfg.domain, cfg.h)
    return list(cfg.R_list or R_def), list(cfg.window_list or W_def)


def cmd_eig(cfg: RunConfig, out: Path | None = None) -> dict:
    grid = _grid(cfg)
    res = solve_ground_state(grid, cfg.p, cfg.solver)
    payload = {"n_interior": grid.n_interior, **res.summary()}
    if cfg.p == 2:
        payload["courant_fischer"] = courant_fischer_p2(grid, min(max(cfg.k, 3), grid.n_interior))
    if not res.converged:
        raise SolverFailure("ground state did not converge", payload)
    return payload


def cmd_lsbound(cfg: RunConfig, out: Path | None = None) -> dict:
    spec = _calibrated(cfg.domain, cfg.p, cfg.h, cfg.margin, cfg.solver)
    pieces = disjoint_pieces(spec, cfg.k, cfg.h)
    grids = [build_grid(s, cfg.h, w) for s, w in pieces]
    results = piece_ground_states(grids, cfg.p, cfg.solver)
    payload = {
        "k": cfg.k,
        "upper_bound": max(r.lam for r in results),
        "piece_lambdas": [r.lam for r in results],
        "piece_converged": [r.converged for r in results],
    }
    if not all(r.converged for r in results):
        raise SolverFailure("a piece did not converge", payload)
    return payload


def cmd_epinf(cfg: RunConfig, out: Path | None = None) -> dict:
    R_list, W_list = _ep_lists(cfg)
    ep = estimate_Ep(cfg.domain, cfg.p, R_list, W_list, cfg.h, cfg.solver)
    if out is not None:
        write_csv(out / "epinf.csv", ("R", "window", "lambda_ext"), ep.table)
    return {"table": [list(r) for r in ep.table], "extrapolated": ep.extrapolated,
            "monotone_ok": ep.monotone_ok}


def cmd_decay(cfg: RunConfig, out: Path | None = None) -> dict:
    p = cfg.p
    grid = _grid(cfg)
    res = solve_ground_state(grid, p, cfg.solver)
    R_list, W_list = _ep_lists(cfg)
    ep = estimate_Ep(cfg.domain, p, R_list, W_list, cfg.h, cfg.solver)
    model = theoretical_decay(res.lam, ep.extrapolated, p, 0.0)
    model = theoretical_decay(res.lam, ep.extrapolated, p, estimate_r0(ep, model.eps_lambda))
    fit = fit_decay(res.u, cfg.floor)
    model = model.with_fit(fit)
    cacc = {f"R={R:g},delta={d / (p - 1):g}": check_caccioppoli(res.u, res.lam, R, d / (p - 1), p)
            for R in cfg.decay_R for d in cfg.deltas}
    tails = gradient_decay_profile(res.u, res.lam, p, cfg.decay_R, model)
    if out is not None:
        r, M = radial_profile(res.u)
        env = model.C_fit * np.exp(-model.alpha_theory * r)
        write_csv(out / "decay_profile.csv", ("r", "max_abs_u", "envelope"), zip(r, M, env))
    payload = {
        "lambda": res.lam, "converged": res.converged, "Ep": ep.extrapolated,
        "eps_lambda": model.eps_lambda, "C4": model.C4, "alpha_theory": model.alpha_theory,
        "r0": model.r0, "C1": model.C1, "alpha_fit": model.alpha_fit, "C_fit": model.C_fit,
        "fit_range": list(model.fit_range), "n_bins": fit.n_bins,
        "caccioppoli": cacc, "gradient_tails": [list(t) for t in tails],
    }
    if not res.converged:
        raise SolverFailure("ground state did not converge", payload)
    return payload


def cmd_perturb(cfg: RunConfig, out: Path | None = None) -> dict:
    grid = _grid(cfg)
    base = solve_ground_state(grid, cfg.p, cfg.solver)
    sweep = sweep_perturbed(grid, cfg.p, cfg.potential, cfg.eps_list, cfg.solver)
    rows = [(r.meta["eps"], r.lam, r.residual) for r in sweep]
    if out is not None:
        write_csv(out / "perturb.csv", ("eps", "lambda", "residual"), rows)
    payload = {
        "unperturbed_lambda": base.lam,
        "sweep": [{"eps": e, "lambda": l, "residual": r, "linf_ratio": s.meta["linf_ratio"],
                   "converged": s.converged} for (e, l, r), s in zip(rows, sweep)],
    }
    if not (base.converged and all(s.converged for s in sweep)):
        raise SolverFailure("sweep member did not converge", payload)
    return payload


def cmd_gap(cfg: RunConfig, out: Path | None = None) -> dict:
    R_list, W_list = _ep_lists(cfg)
    rep = gap_certificate(cfg.domain, cfg.k, cfg.p, cfg.h, cfg.solver, safety=cfg.safety,
                          margin=cfg.margin, window=cfg.window, R_list=R_list, window_list=W_list)
    return rep.as_dict()


def cmd_check(cfg: RunConfig | None = None, out: Path | None = None) -> dict:
    from .checks import run_all
    results = run_all()
    payload = {"checks": results, "all_passed": all(results.values())}
    if not payload["all_passed"]:
        raise SolverFailure("invariant check failed", payload)
    return payload


HANDLERS = {
    "eig": cmd_eig, "lsbound": cmd_lsbound, "epinf": cmd_epinf, "decay": cmd_decay,
    "perturb": cmd_perturb, "gap": cmd_gap, "check": cmd_check,
}


# ------------------------------------------------------------ entry point

def bundled_config(name: str) -> Path | None:
    stem = name[:-5] if name.endswith(".toml") else name
    ref = resources.files("plap") / "configs" / f"{stem}.toml"
    return Path(str(ref)) if ref.is_file() else None


def _resolve_config(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    alt = bundled_config(path)
    if alt is None:
        raise ConfigError(f"config file {path} not found")
    return alt


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plap", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML run configuration (or the name of a bundled one)")
    ap.add_argument("--out", default=".", help="output directory (default: current)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--p", dest="p")
    ap.add_argument("--h", dest="h")
    ap.add_argument("--k", type=int)
    ap.add_argument("--domain-file", help="TOML file whose [domain] table replaces the config's")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def make_record(command, cfg, payload, status, started, finished) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": command,
        "status": status,
        "config_digest": config_digest(cfg) if cfg is not None else None,
        "config": cfg.to_dict() if cfg is not None else None,
        "payload": payload,
        "timestamps": {"started": started, "finished": finished},
        "toolkit_version": __version__,
    }


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    started = _now()
    cfg = None
    try:
        if args.config is None and args.command != "check":
            raise ConfigError("--config is required for this command")
        if args.config is not None:
            cfg = load_config(_resolve_config(args.config))
            over = {
                "p": None if args.p is None else _number(args.p, "--p"),
                "h": None if args.h is None else _number(args.h, "--h"),
                "k": args.k, "seed": args.seed,
            }
            if args.domain_file is not None:
                over["domain"], window = load_domain(args.domain_file)
                if window is not None:
                    over["window"] = window
            cfg = cfg.with_overrides(**over)
    except ConfigError as exc:
        print(f"plap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    status, code = "ok", EXIT_OK
    try:
        payload = HANDLERS[args.command](cfg, out)
    except SolverFailure as exc:
        payload = {**exc.payload, "error": str(exc)}
        status, code = "solver_failure", EXIT_SOLVER
    except ConfigError as exc:
        print(f"plap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlapError as exc:
        payload = {"error": f"{type(exc).__name__}: {exc}"}
        status, code = "solver_failure", EXIT_SOLVER
    record = make_record(args.command, cfg, payload, status, started, _now())
    record["timestamps"]["elapsed_s"] = round(time.perf_counter() - t0, 3)
    path = out / f"{args.command}.json"
    _atomic_write(path, payload_json(record) + "\n")
    if code:
        print(f"plap: {args.command} failed: {payload.get('error')}", file=sys.stderr)
    else:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
