import json

import numpy as np
import pytest

from fbcap import cli
from fbcap.closedform import beumco, bumco, match_cost
from fbcap.errors import SchemaError
from fbcap.io import ChannelSpec, canonical_dumps, deltas_csv, trajectory_csv, values_csv
from fbcap.kernels import InitialCondition, InputPolicy


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# --- canonical JSON ----------------------------------------------------------

def test_canonical_json_sorted_and_exact():
    text = canonical_dumps({"b": 0.1, "a": [1, 2.0, None, True]})
    assert text == '{"a":[1,2.0,null,true],"b":0.10000000000000001}\n'
    assert json.loads(text)["b"] == 0.1


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        canonical_dumps({"x": float("nan")})


def test_spec_round_trip_bit_exact(rng):
    q = bumco(0.9, 0.1, 0.2, 0.4, 3)
    pi = InputPolicy(rng.dirichlet([1, 1], size=(4, 2)), 1, 2)
    spec = ChannelSpec(q, match_cost(3), pi, InitialCondition([0.3, 0.7], 1, 2))
    text = spec.dumps()
    back = ChannelSpec.loads(text)
    assert np.array_equal(back.channel.q, q.q)
    assert np.array_equal(back.policy.pi, pi.pi)
    assert np.array_equal(back.cost.gamma, spec.cost.gamma)
    assert back.dumps() == text


def test_spec_round_trip_keeps_alphabets():
    spec = ChannelSpec(beumco(0.95, 0.6, 0.8, 1))
    back = ChannelSpec.loads(spec.dumps())
    assert back.channel.output_alphabet.symbols == (0, "e", 1)


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d.update(q=[[[[0.5, "x"]]]]), "$.q[0][0][0][1]"),
    (lambda d: d.pop("M"), "$"),
    (lambda d: d.update(n=-1), "$.n"),
    (lambda d: d["q"][1].pop(), "$.q"),
    (lambda d: d.update(pi=[[[0.5, 0.6]] * 2] * 3), "$.pi"),
])
def test_schema_errors_name_the_path(mutate, path):
    doc = json.loads(ChannelSpec(bumco(0.9, 0.1, 0.2, 0.4, 2)).dumps())
    mutate(doc)
    with pytest.raises(SchemaError) as exc:
        ChannelSpec.from_dict(doc)
    assert str(exc.value).startswith(path + ":")


def test_invalid_json_is_schema_error():
    with pytest.raises(SchemaError):
        ChannelSpec.loads("{not json")


def test_csv_headers():
    assert trajectory_csv(np.full((1, 1, 2), 0.5)).splitlines()[0] == "t,w,x_or_y,prob"
    assert values_csv(np.zeros((2, 2))).splitlines()[0] == "t,w,value"
    assert deltas_csv(np.zeros((3, 2))).splitlines()[0] == "t,delta1,delta2"


# --- command line ----------------------------------------------------------------

def test_cli_ftfi_summary(capsys):
    code, out, _ = run(capsys, "ftfi", "--channel", "bumco:0.9,0.1,0.2,0.4", "--n", 50, "--mu", 1)
    assert code == 0
    summary = json.loads(out)
    assert abs(summary["per_unit_time"] - 0.2148) < 5e-3


def test_cli_closed_form_beumco_steady(capsys):
    code, out, _ = run(capsys, "closed-form", "--channel", "beumco:0.95,0.6,0.8", "--steady",
                       "--n", 30, "--traj-tol", 1e-4)
    assert code == 0
    summary = json.loads(out)
    assert abs(summary["capacity_ergodic"] - 0.8307) < 1e-3
    assert abs(summary["converged_at_stage"] - 6) <= 2


def test_cli_verify_uniform_fails(capsys):
    code, out, _ = run(capsys, "verify", "--channel", "bumco:0.9,0.1,0.2,0.4", "--policy", "uniform",
                       "--n", 10)
    assert code == 2
    assert abs(json.loads(out)["max_residual"] - 0.53190234837117378) < 1e-9


def test_cli_verify_solver_policy_passes(capsys, tmp_path):
    out_file = tmp_path / "sol.json"
    assert run(capsys, "ftfi", "--channel", "bumco:0.9,0.1,0.2,0.4", "--n", 10,
               "--out", out_file)[0] == 0
    code, out, _ = run(capsys, "verify", "--spec", out_file)
    assert code == 0 and json.loads(out)["passed"]


def test_cli_regime_error_exit_2(capsys):
    code, _, err = run(capsys, "closed-form", "--channel", "bumco:0.512,0.941,0.151,0.94", "--n", 5)
    assert code == 2
    assert "leaves [0, 1]" in err


@pytest.mark.parametrize("argv", [
    ["ftfi", "--channel", "nosuch:0.1"],
    ["ftfi", "--channel", "bsc:1.5"],
    ["ftfi", "--channel", "bsc:0.1", "--tol-inner", "-1"],
    ["ftfi"],
    ["verify", "--channel", "bsc:0.1", "--policy", "/nonexistent.json"],
])
def test_cli_input_errors_exit_1(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(cli.main(argv))
    assert exc.value.code == 1


def test_cli_bad_spec_reports_path(capsys, tmp_path):
    doc = json.loads(ChannelSpec(bumco(0.9, 0.1, 0.2, 0.4, 1)).dumps())
    doc["q"][0][1][0] = [0.5, -0.1]
    f = tmp_path / "bad.json"
    f.write_text(json.dumps(doc))
    code, _, err = run(capsys, "ftfi", "--spec", f)
    assert code == 1
    assert "$.q" in err


def test_cli_csv_output_deterministic(capsys, tmp_path):
    argv = ["ftfi", "--channel", "bumco:0.9,0.1,0.2,0.4", "--n", 8, "--cost", "match",
            "--s", 0.05, "--format", "csv"]
    run(capsys, *argv, "--out", tmp_path / "a")
    run(capsys, *argv, "--out", tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["output.csv", "policy.csv", "summary.json", "values.csv"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_cost_sweep_concave(capsys):
    code, out, _ = run(capsys, "cost-sweep", "--channel", "bumco:0.9,0.1,0.2,0.4", "--n", 20,
                       "--s-values", "0:0.5:6")
    assert code == 0
    rows = json.loads(out)["sweep"]
    k = np.array([r["kappa"] for r in rows])
    c = np.array([r["per_unit_time"] for r in rows])
    order = np.argsort(k)
    k, c = k[order], c[order]
    assert np.all(np.diff(c) >= -1e-9)
    assert np.all(np.diff(np.diff(c) / np.diff(k)) <= 1e-9)


def test_cli_cost_sweep_kappa_target(capsys):
    code, out, _ = run(capsys, "cost-sweep", "--channel", "bumco:0.9,0.1,0.2,0.4", "--n", 20,
                       "--kappa", 0.55, "--tol-cost", 1e-5)
    assert code == 0
    assert abs(json.loads(out)["achieved_cost"] - 0.55) < 1e-5


def test_cli_oracle_check(capsys):
    code, out, _ = run(capsys, "oracle-check", "--channel", "bumco:0.9,0.1,0.2,0.4", "--n", 1,
                       "--mu", 0)
    assert code == 0
    assert json.loads(out)["passed"]
