"""Config validation, subcommand behavior, exit codes, determinism."""

import json

import numpy as np
import pytest

from reslab import cli, specfun

from conftest import FIRST_G


def _write_config(tmp_path, payload, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


# ---------------------------------------------------------------------------
# config handling

def test_default_config_valid():
    cfg = cli.load_config(None)
    assert cfg["schema_version"] == cli.SCHEMA_VERSION
    assert cfg["potential"]["shape"] == "bump"


def test_unknown_key_rejected(tmp_path):
    path = _write_config(tmp_path, {"potentail": {}})
    with pytest.raises(cli.ConfigError):
        cli.load_config(path)


def test_nested_merge_and_overrides(tmp_path):
    path = _write_config(tmp_path, {"grid": {"nodes_per_dim": 4}})
    cfg = cli.load_config(path, tol_overrides="quadrature=1e-2", seed=7)
    assert cfg["grid"]["nodes_per_dim"] == 4
    assert cfg["grid"]["halfwidth"] == 1.0         # untouched sibling
    assert cfg["tolerances"]["quadrature"] == 1e-2
    assert cfg["seed"] == 7


def test_invalid_values_rejected(tmp_path):
    for payload in (
        {"schema_version": 99},
        {"potential": {"shape": "mexican_hat"}},
        {"grid": {"nodes_per_dim": 2}},
        {"cutoff_lambda1": -0.1},
        {"tolerances": {"identity": 0.0}},
        {"t_grid": {"t_min": 100.0, "t_max": 10.0}},
        {"flows": ["heat"]},
        {"probes": []},
        {"potential": {"shape": "pair_plus_bump", "coupling": 1.0}},
    ):
        path = _write_config(tmp_path, payload)
        with pytest.raises(cli.ConfigError):
            cli.load_config(path)
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, tol_overrides="nonsense")
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, tol_overrides="identity=abc")


def test_main_exit_code_on_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["--config", str(bad), "classify"]) == cli.EXIT_CONFIG
    missing = str(tmp_path / "nope.json")
    assert cli.main(["--config", missing, "classify"]) == cli.EXIT_CONFIG


# ---------------------------------------------------------------------------
# subcommands (fixed coupling to avoid re-tuning)

FIXED = {"potential": {"shape": "bump", "coupling": FIRST_G}}


def test_classify_free_and_fixed(tmp_path, capsys):
    free = _write_config(tmp_path, {"potential": {"shape": "free"}}, "f.json")
    out = tmp_path / "out-free"
    assert cli.main(["--config", free, "--out", str(out),
                     "classify"]) == cli.EXIT_PASS
    report = json.loads((out / "report.json").read_text())
    assert report["classification"] == "Free"

    fixed = _write_config(tmp_path, FIXED)
    out2 = tmp_path / "out-first"
    assert cli.main(["--config", fixed, "--out", str(out2),
                     "classify"]) == cli.EXIT_PASS
    report = json.loads((out2 / "report.json").read_text())
    assert report["classification"] == "FirstKind"
    assert report["rank_S1"] == 1
    vec = report["null_vectors"][0]
    assert abs(vec["far_field_exponent"] - 2.0) < 0.1
    assert vec["residual"] < 1e-6


def test_decay_free_cross_check(tmp_path):
    free = _write_config(tmp_path, {"potential": {"shape": "free"}})
    out = tmp_path / "out"
    assert cli.main(["--config", free, "--out", str(out),
                     "decay"]) == cli.EXIT_PASS
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    assert report["free_cross_check_max_rel_err"] < 1e-3


def test_expand_rejects_regular(tmp_path):
    cfgp = _write_config(tmp_path,
                         {"potential": {"shape": "bump", "coupling": 0.01}})
    out = tmp_path / "out"
    assert cli.main(["--config", cfgp, "--out", str(out),
                     "expand"]) == cli.EXIT_CONFIG


def test_expand_first_kind(tmp_path):
    cfgp = _write_config(tmp_path, FIXED)
    out = tmp_path / "out"
    assert cli.main(["--config", cfgp, "--out", str(out),
                     "expand"]) == cli.EXIT_PASS
    lines = (out / "expansion.csv").read_text().strip().splitlines()
    assert lines[0] == "lambda,rel_error,cond_direct"
    assert len(lines) == 4
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True and report["decreasing"] is True


def test_verify_passes_and_is_deterministic(tmp_path):
    cfgp = _write_config(tmp_path, FIXED)
    outputs = []
    for name in ("v1", "v2"):
        out = tmp_path / name
        assert cli.main(["--config", cfgp, "--out", str(out),
                         "verify"]) == cli.EXIT_PASS
        outputs.append(((out / "verify.csv").read_bytes(),
                        (out / "report.json").read_bytes()))
    assert outputs[0] == outputs[1]
    report = json.loads(outputs[0][1])
    assert report["all_passed"] is True
    names = {inv["name"] for inv in report["invariants"]}
    assert {"feshbach_identity", "jn_inversion", "expansion_orders",
            "plus_minus_conjugation", "free_propagator"} <= names


def test_verify_coarse_grid_warning(tmp_path, capsys):
    cfgp = _write_config(tmp_path, {
        "potential": {"shape": "free"}, "grid": {"nodes_per_dim": 4}})
    out = tmp_path / "out"
    code = cli.main(["--config", cfgp, "--out", str(out), "verify"])
    captured = capsys.readouterr()
    assert "coarse grid" in captured.err
    assert code == cli.EXIT_PASS


def test_verify_detects_corrupted_constant(tmp_path, monkeypatch):
    # fault injection: a wrong a1 shifts the Mexp2 remainder to lam^2
    # scaling, which the expansion-order invariant flags
    true = specfun.default_constants()
    import dataclasses
    bad = dataclasses.replace(true, a1=1.5 * true.a1)
    monkeypatch.setattr(specfun, "default_constants", lambda: bad)
    cfgp = _write_config(tmp_path, FIXED)
    out = tmp_path / "out"
    code = cli.main(["--config", cfgp, "--out", str(out), "verify"])
    assert code == cli.EXIT_INVARIANT
    report = json.loads((out / "report.json").read_text())
    failed = {inv["name"] for inv in report["invariants"]
              if not inv["passed"]}
    assert "expansion_orders" in failed


def test_csv_float_formatting_roundtrip(tmp_path):
    rows = [(1.0 / 3.0, complex(0.1, -0.2), "x")]
    path = tmp_path / "t.csv"
    cli.write_csv(path, ["a", "b", "c"], rows)
    text = path.read_text()
    assert repr(1.0 / 3.0) in text
    val = float(text.splitlines()[1].split(",")[0])
    assert val == 1.0 / 3.0
