"""TOML run configurations: parsing, validation and canonical form."""
from __future__ import annotations

import hashlib
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import geometry as geo
from .eigensolver import SolverOptions
from .energy import PowerLaw
from .errors import InvalidInput

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "domain_to_dict",
           "domain_from_dict", "canonical_toml", "config_digest"]


class ConfigError(InvalidInput):
    """Malformed or invalid configuration; the message names the offending field."""


_DOMAINS = {c.__name__: c for c in (
    geo.Interval, geo.Box, geo.Ball, geo.SlabWithBall, geo.Waveguide, geo.Whip,
    geo.Union, geo.Intersection, geo.DifferenceBall, geo.Translate,
)}
_CURVES = {"StraightLine": geo.StraightLine, "CosBump": geo.CosBump}


def _number(value, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{where}: cannot read {value!r} as a number") from None
    if isinstance(value, (int, float)):
        return float(value)
    raise ConfigError(f"{where}: expected a number, got {value!r}")


def _numbers(value, where: str) -> list[float]:
    if not isinstance(value, list):
        raise ConfigError(f"{where}: expected a list of numbers")
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(value)]


# ------------------------------------------------------------ domains

def domain_to_dict(spec) -> dict:
    if isinstance(spec, (geo.StraightLine, geo.CosBump)):
        out = {"type": type(spec).__name__}
        out.update({f.name: getattr(spec, f.name) for f in fields(spec)})
        return out
    out = {"type": type(spec).__name__}
    for f in fields(spec):
        v = getattr(spec, f.name)
        if v is None:
            continue
        if f.name in ("parts",):
            v = [domain_to_dict(s) for s in v]
        elif f.name in ("inner", "curve"):
            v = domain_to_dict(v)
        elif isinstance(v, tuple):
            v = [float(x) for x in v]
        elif isinstance(v, float):
            v = float(v)
        out[f.name] = v
    return out


def domain_from_dict(d: dict, where: str = "domain"):
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError(f"{where}: needs a 'type' key")
    kind = d["type"]
    if where.endswith("curve"):
        cls = _CURVES.get(kind)
    else:
        cls = _DOMAINS.get(kind)
    if cls is None:
        raise ConfigError(f"{where}.type: unknown type {kind!r}")
    names = {f.name for f in fields(cls)}
    extra = set(d) - names - {"type"}
    if extra:
        raise ConfigError(f"{where}: unexpected keys {sorted(extra)} for {kind}")
    kw = {}
    for f in fields(cls):
        if f.name not in d:
            continue
        v, sub = d[f.name], f"{where}.{f.name}"
        if f.name == "parts":
            if not isinstance(v, list):
                raise ConfigError(f"{sub}: expected a list of domains")
            v = tuple(domain_from_dict(x, f"{sub}[{i}]") for i, x in enumerate(v))
        elif f.name == "inner":
            v = domain_from_dict(v, sub)
        elif f.name == "curve":
            v = domain_from_dict(v, f"{where}.curve")
        elif f.name in ("n", "segments"):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{sub}: expected an integer")
        elif isinstance(v, list):
            v = tuple(_numbers(v, sub))
        else:
            v = _number(v, sub)
        kw[f.name] = v
    try:
        return cls(**kw)
    except InvalidInput as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


# ------------------------------------------------------------ run config

@dataclass(frozen=True)
class RunConfig:
    domain: object
    p: float = 2.0
    h: float = 1 / 64
    window: geo.Box | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    k: int = 1
    R_list: tuple = ()
    window_list: tuple = ()
    eps_list: tuple = (1.0, 0.1, 0.01, 0.001)
    potential: PowerLaw = field(default_factory=lambda: PowerLaw(2.0))
    safety: float = 0.05
    margin: float = 0.10
    floor: float = 1e-12
    decay_R: tuple = (2.0, 4.0, 6.0)
    deltas: tuple = (0.1, 0.3)

    def to_dict(self) -> dict:
        out = {
            "p": self.p, "h": self.h, "k": self.k,
            "domain": domain_to_dict(self.domain),
            "solver": asdict(self.solver),
            "potential": {"type": "PowerLaw", "q": self.potential.q},
            "epinf": {"R_list": list(self.R_list), "window_list": list(self.window_list)},
            "perturb": {"eps_list": list(self.eps_list)},
            "gap": {"safety": self.safety, "margin": self.margin},
            "decay": {"floor": self.floor, "R_list": list(self.decay_R), "deltas": list(self.deltas)},
        }
        if self.window is not None:
            out["window"] = {"lo": list(self.window.lo), "hi": list(self.window.hi)}
        return out

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "domain" in kw and "window" not in kw:
            # a window sized for the old domain would silently clip the new one
            kw["window"] = None
        if "seed" in kw:
            kw["solver"] = replace(self.solver, seed=int(kw.pop("seed")))
        return _validated(replace(self, **kw)) if kw else self


def _section(d: dict, name: str) -> dict:
    v = d.get(name, {})
    if not isinstance(v, dict):
        raise ConfigError(f"{name}: expected a table")
    return v


def _validated(cfg: RunConfig) -> RunConfig:
    if not cfg.p > 1:
        raise ConfigError(f"p: must satisfy p > 1 (got {cfg.p})")
    if not cfg.h > 0:
        raise ConfigError(f"h: must satisfy h > 0 (got {cfg.h})")
    if not (isinstance(cfg.k, int) and cfg.k >= 1):
        raise ConfigError(f"k: must be an integer >= 1 (got {cfg.k})")
    if not 0 <= cfg.safety < 1:
        raise ConfigError("gap.safety: must lie in [0, 1)")
    if not 0 <= cfg.margin < 1:
        raise ConfigError("gap.margin: must lie in [0, 1)")
    if not cfg.floor > 0:
        raise ConfigError("decay.floor: must be > 0")
    if any(e <= 0 for e in cfg.eps_list) or len(set(cfg.eps_list)) != len(cfg.eps_list):
        raise ConfigError("perturb.eps_list: amplitudes must be positive and distinct")
    if any(not 0 < dl < 1 for dl in cfg.deltas):
        raise ConfigError("decay.deltas: each delta must lie in (0, 1); it is divided by p - 1")
    if cfg.window is not None and cfg.window.dim != cfg.domain.dim:
        raise ConfigError("window: dimension does not match the domain")
    return cfg


def parse_config(data: dict) -> RunConfig:
    if "domain" not in data:
        raise ConfigError("domain: missing [domain] table")
    known = {"p", "h", "k", "domain", "window", "solver", "potential", "epinf", "perturb",
             "gap", "decay", "experiment"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unexpected top-level keys {sorted(extra)}")
    domain = domain_from_dict(data["domain"])
    kw: dict = {"domain": domain}
    if "p" in data:
        kw["p"] = _number(data["p"], "p")
    if "h" in data:
        kw["h"] = _number(data["h"], "h")
    if "k" in data:
        if not isinstance(data["k"], int) or isinstance(data["k"], bool):
            raise ConfigError("k: expected an integer")
        kw["k"] = data["k"]
    if "window" in data:
        w = _section(data, "window")
        try:
            kw["window"] = geo.Box(tuple(_numbers(w.get("lo"), "window.lo")),
                                   tuple(_numbers(w.get("hi"), "window.hi")))
        except InvalidInput as exc:
            raise ConfigError(f"window: {exc}") from None
    s = _section(data, "solver")
    allowed = {f.name: f for f in fields(SolverOptions)}
    bad = set(s) - set(allowed)
    if bad:
        raise ConfigError(f"solver: unexpected keys {sorted(bad)}")
    sk = {}
    for name, v in s.items():
        if name in ("max_iters", "seed", "restarts", "stall_window"):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"solver.{name}: expected an integer")
            sk[name] = v
        else:
            sk[name] = _number(v, f"solver.{name}")
    try:
        kw["solver"] = SolverOptions(**sk)
    except InvalidInput as exc:
        raise ConfigError(f"solver: {exc}") from None
    pot = _section(data, "potential")
    if pot:
        if pot.get("type", "PowerLaw") != "PowerLaw":
            raise ConfigError("potential.type: only PowerLaw is supported")
        try:
            kw["potential"] = PowerLaw(_number(pot.get("q", 2.0), "potential.q"))
        except InvalidInput as exc:
            raise ConfigError(f"potential.q: {exc}") from None
    ep = _section(data, "epinf")
    if "R_list" in ep:
        kw["R_list"] = tuple(_numbers(ep["R_list"], "epinf.R_list"))
    if "window_list" in ep:
        kw["window_list"] = tuple(_numbers(ep["window_list"], "epinf.window_list"))
    pt = _section(data, "perturb")
    if "eps_list" in pt:
        kw["eps_list"] = tuple(_numbers(pt["eps_list"], "perturb.eps_list"))
    gp = _section(data, "gap")
    for name in ("safety", "margin"):
        if name in gp:
            kw[name] = _number(gp[name], f"gap.{name}")
    dc = _section(data, "decay")
    if "floor" in dc:
        kw["floor"] = _number(dc["floor"], "decay.floor")
    if "R_list" in dc:
        kw["decay_R"] = tuple(_numbers(dc["R_list"], "decay.R_list"))
    if "deltas" in dc:
        kw["deltas"] = tuple(_numbers(dc["deltas"], "decay.deltas"))
    return _validated(RunConfig(**kw))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def load_domain(path):
    """(domain, window or None) from a file holding a [domain] table and optionally [window]."""
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    domain = domain_from_dict(data.get("domain", data))
    window = None
    if "window" in data:
        w = _section(data, "window")
        try:
            window = geo.Box(tuple(_numbers(w.get("lo"), "window.lo")), tuple(_numbers(w.get("hi"), "window.hi")))
        except InvalidInput as exc:
            raise ConfigError(f"window: {exc}") from None
    return domain, window


def canonical_toml(cfg: RunConfig) -> str:
    return tomli_w.dumps(_sorted(cfg.to_dict()))


def _sorted(d):
    if isinstance(d, dict):
        return {k: _sorted(d[k]) for k in sorted(d)}
    if isinstance(d, list):
        return [_sorted(v) for v in d]
    return d


def config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_toml(cfg).encode("utf-8")).hexdigest()
