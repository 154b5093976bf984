import csv
import json
import math

import pytest
from hypothesis import given, strategies as st

from plap import cli
from plap.config import (
    ConfigError, RunConfig, canonical_toml, config_digest, domain_from_dict, domain_to_dict,
    load_config, parse_config,
)
from plap.geometry import (
    Ball, Box, CosBump, DifferenceBall, Interval, SlabWithBall, StraightLine, Translate, Union,
    Waveguide, Whip,
)

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

DOMAINS = [
    Interval(0.0, 1.0), Box((0.0, 0.0), (1.0, 2.0)), Ball((0.0, 0.0), 1.5), SlabWithBall(0.5, 2.0),
    Waveguide(CosBump(2), 0.5), Waveguide(StraightLine(), 0.5), Whip(3), Whip(2, (4.0, 5.0)),
    Union((Ball((0.0, 0.0), 1.0), Ball((2.0, 0.0), 1.0))), DifferenceBall(SlabWithBall(0.5, 1.0), 2.0),
    Translate(Ball((0.0, 0.0), 1.0), (3.0, 0.0)),
]


@pytest.mark.parametrize("spec", DOMAINS, ids=lambda s: type(s).__name__)
def test_domain_round_trip(spec):
    assert domain_from_dict(domain_to_dict(spec)) == spec


@pytest.mark.parametrize("name", ["interval", "ball", "strip", "slab_ball", "whip"])
def test_canonical_form_idempotent(name):
    cfg = load_config(cli.bundled_config(name))
    text = canonical_toml(cfg)
    again = parse_config(tomllib.loads(text))
    assert again == cfg
    assert canonical_toml(again) == text
    assert config_digest(again) == config_digest(cfg)


@given(p=st.floats(1.01, 8.0), h=st.floats(1e-3, 0.5), k=st.integers(1, 6), seed=st.integers(0, 10 ** 6))
def test_round_trip_property(p, h, k, seed):
    cfg = load_config(cli.bundled_config("slab_ball")).with_overrides(p=p, h=h, k=k, seed=seed)
    back = parse_config(tomllib.loads(canonical_toml(cfg)))
    assert back == cfg


def test_fraction_strings():
    cfg = parse_config({"h": "1/256", "domain": {"type": "Interval", "a": 0, "b": 1}})
    assert cfg.h == 1 / 256


@pytest.mark.parametrize("data, field", [
    ({"p": 0.5}, "p > 1"),
    ({"h": -1.0}, "h"),
    ({"k": 0}, "k"),
    ({"p": "abc"}, "p"),
    ({"bogus": 1}, "bogus"),
    ({"solver": {"max_iters": 0}}, "max_iters"),
    ({"solver": {"colour": 1}}, "colour"),
    ({"gap": {"safety": 1.5}}, "gap.safety"),
    ({"perturb": {"eps_list": [0.1, 0.1]}}, "eps_list"),
    ({"decay": {"deltas": [1.5]}}, "deltas"),
    ({"potential": {"q": -2}}, "potential.q"),
    ({"window": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]}}, "window"),
])
def test_validation_names_field(data, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config({"domain": {"type": "Interval", "a": 0, "b": 1}, **data})


@pytest.mark.parametrize("domain, field", [
    ({"type": "Ball", "center": [0, 0], "radius": -1}, "domain"),
    ({"type": "Nope"}, "domain.type"),
    ({"type": "Ball", "center": [0, 0], "radius": 1, "extra": 2}, "extra"),
    ({"type": "Waveguide", "halfwidth": 1.0, "curve": {"type": "CosBump", "n": 0}}, "domain"),
    ({"type": "Whip", "segments": 1.5}, "domain.segments"),
])
def test_domain_validation(domain, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config({"domain": domain})


def _write(tmp_path, text):
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    return str(path)


def test_cli_eig_interval(tmp_path, capsys):
    assert cli.main(["eig", "--config", "interval", "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "eig.json").read_text())
    assert rec["experiment"] == "eig" and rec["status"] == "ok"
    assert rec["schema_version"] == cli.SCHEMA_VERSION
    assert abs(rec["payload"]["lambda"] / math.pi ** 2 - 1) < 0.01
    assert len(rec["config_digest"]) == 64
    assert set(rec["timestamps"]) >= {"started", "finished"}


def test_cli_bad_p_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, 'p = 0.5\n[domain]\ntype = "Interval"\na = 0\nb = 1\n')
    assert cli.main(["eig", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "p > 1" in capsys.readouterr().err


def test_cli_malformed_toml(tmp_path, capsys):
    cfg = _write(tmp_path, "p = = 2\n")
    assert cli.main(["eig", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_cli_missing_config(tmp_path, capsys):
    assert cli.main(["eig", "--config", str(tmp_path / "none.toml")]) == 2
    assert cli.main(["eig"]) == 2


def test_cli_solver_failure_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, 'p = 3.0\nh = "1/32"\n[domain]\ntype = "Ball"\ncenter = [0, 0]\nradius = 1\n'
                           '[solver]\nmax_iters = 2\n')
    assert cli.main(["eig", "--config", cfg, "--out", str(tmp_path)]) == 3
    rec = json.loads((tmp_path / "eig.json").read_text())
    assert rec["status"] == "solver_failure"
    assert rec["payload"]["converged"] is False and "error" in rec["payload"]


def _payload(tmp_path, args):
    assert cli.main(args + ["--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / f"{args[0]}.json").read_text())
    return json.dumps(rec["payload"], sort_keys=True), rec


def test_cli_deterministic(tmp_path):
    a, ra = _payload(tmp_path / "a", ["eig", "--config", "ball", "--seed", "3", "--h", "1/16"])
    b, rb = _payload(tmp_path / "b", ["eig", "--config", "ball", "--seed", "3", "--h", "1/16"])
    assert a == b
    assert ra["config_digest"] == rb["config_digest"]
    assert ra["config"]["solver"]["seed"] == 3


def test_cli_overrides_change_digest(tmp_path):
    _, ra = _payload(tmp_path / "a", ["eig", "--config", "ball", "--h", "1/16"])
    _, rb = _payload(tmp_path / "b", ["eig", "--config", "ball", "--h", "1/16", "--p", "2.5"])
    assert ra["config_digest"] != rb["config_digest"]
    assert rb["config"]["p"] == 2.5


def test_cli_domain_file(tmp_path):
    dom = tmp_path / "dom.toml"
    dom.write_text('[domain]\ntype = "Interval"\na = 0\nb = 2\n')
    _, rec = _payload(tmp_path, ["eig", "--config", "interval", "--domain-file", str(dom)])
    assert abs(rec["payload"]["lambda"] / (math.pi ** 2 / 4) - 1) < 0.01


def _csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_cli_perturb_csv(tmp_path):
    _, rec = _payload(tmp_path, ["perturb", "--config", "interval", "--h", "1/64"])
    rows = _csv(tmp_path / "perturb.csv")
    assert rows[0] == ["eps", "lambda", "residual"]
    lams = [float(r[1]) for r in rows[1:]]
    assert lams == sorted(lams, reverse=True) and len(lams) == 4


def test_cli_epinf_csv(tmp_path):
    _, rec = _payload(tmp_path, ["epinf", "--config", "strip", "--h", "1/16"])
    rows = _csv(tmp_path / "epinf.csv")
    assert rows[0] == ["R", "window", "lambda_ext"]
    assert len(rows) == 4 and rec["payload"]["monotone_ok"]


def test_cli_decay_csv_and_gap(tmp_path):
    _, rec = _payload(tmp_path, ["decay", "--config", "slab_ball", "--h", "1/16"])
    rows = _csv(tmp_path / "decay_profile.csv")
    assert rows[0] == ["r", "max_abs_u", "envelope"]
    pay = rec["payload"]
    assert pay["alpha_fit"] >= pay["alpha_theory"]
    assert all(pay["caccioppoli"].values())
    _, rec = _payload(tmp_path, ["gap", "--config", "slab_ball", "--h", "1/16"])
    assert rec["payload"]["verdict"] == "APPLIES"


def test_cli_lsbound(tmp_path):
    _, rec = _payload(tmp_path, ["lsbound", "--config", "ball", "--k", "2", "--h", "1/16"])
    pay = rec["payload"]
    assert pay["upper_bound"] == max(pay["piece_lambdas"]) and len(pay["piece_lambdas"]) == 2


def test_cli_check(tmp_path):
    _, rec = _payload(tmp_path, ["check"])
    assert rec["payload"]["all_passed"]
    assert rec["config"] is None


def test_record_json_has_no_nonfinite(tmp_path):
    text = cli.payload_json({"a": math.inf, "b": [math.nan, 1.0]})
    assert json.loads(text) == {"a": "inf", "b": ["nan", 1.0]}
