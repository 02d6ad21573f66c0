import json
import subprocess
import sys

import pytest

from statprinciples import cli

from cli_inputs import subcommand_cases, write_inputs


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    return write_inputs(tmp_path_factory.mktemp("cli"))


def run_json(argv, capsys):
    code = cli.run(argv)
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


def test_every_subcommand_covered(inputs):
    assert set(subcommand_cases(inputs)) == set(cli.COMMANDS)


@pytest.mark.parametrize("name", sorted(cli.COMMANDS))
def test_subcommand_runs_and_reports(name, inputs, capsys):
    code, report, err = run_json(subcommand_cases(inputs)[name], capsys)
    assert code == 0, err
    for key in ("command", "formula", "paper_principle", "parameters", "results", "tolerances"):
        assert key in report
    assert report["command"] == name


@pytest.mark.parametrize("name", sorted(cli.COMMANDS))
@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_byte_identical(name, fmt, inputs, capsys):
    argv = subcommand_cases(inputs)[name] + ["--format", fmt]
    outs = []
    for _ in range(2):
        assert cli.run(argv) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert outs[0]


def test_hm_retrieve_scalar(inputs, capsys):
    _, report, _ = run_json(subcommand_cases(inputs)["hm-retrieve"], capsys)
    assert report["results"]["predictive_mean"][0] == pytest.approx(2.6, abs=1e-12)
    assert report["results"]["predictive_cov"][0][0] == pytest.approx(0.8, abs=1e-12)


def test_wm_tm_bias(inputs, capsys):
    _, report, _ = run_json(subcommand_cases(inputs)["wm-tm"], capsys)
    assert report["results"]["true_bias"][0] == pytest.approx(-1.0)
    assert report["results"]["naive_bias"][0] == 0.0


def test_units_error_exit_code(capsys):
    assert cli.run(["units", "log(5 Pg)"]) == cli.EXIT_INPUT
    assert "log" in capsys.readouterr().err


def test_units_report(inputs, capsys):
    _, report, _ = run_json(subcommand_cases(inputs)["units"], capsys)
    res = report["results"]
    assert res["value"] == 6.0 and res["dimension"] == "Pg"
    assert res["coefficient_dimensions"] == ["Pg", "Pg*yr^-1", "Pg*yr^-2"]
    assert res["density_dimension"] == "Pg^-1"


def test_neff_phi_zero(inputs, capsys):
    _, report, _ = run_json(["neff", "--data", inputs["spatial"], "--scale", "0"], capsys)
    assert report["results"]["n_eff"] == report["results"]["n"] == 40


def test_simpson_report(inputs, capsys):
    _, report, _ = run_json(subcommand_cases(inputs)["simpson"], capsys)
    res = report["results"]
    assert res["conditional_correlation"] == pytest.approx(-0.372549, abs=1e-6)
    assert all(g < 0 for g in res["slice_gammas"]) and res["marginal_gamma"] > 0


def test_gamma_report(inputs, capsys):
    _, report, _ = run_json(subcommand_cases(inputs)["gamma"], capsys)
    assert report["results"]["gamma"] == pytest.approx(0.8)


def test_chain_swan_fallback(capsys):
    code, report, _ = run_json(["chain", "--demo", "swan", "--path", "swan,black"], capsys)
    assert code == 0 and report["results"]["joint_probability"] == 0.0
    assert len(report["results"]["zero_entries"]) == 8
    code, report, _ = run_json(["chain", "--demo", "swan", "--path", "swan,black", "--fallback-position", "1"], capsys)
    assert report["results"]["joint_probability"] > 0


def test_stochastic_commands_need_seed(inputs, capsys):
    argv = [a for a in subcommand_cases(inputs)["error-scaling"] if a not in ("--seed", "11")]
    assert cli.run(argv) == cli.EXIT_INPUT
    assert "--seed" in capsys.readouterr().err


def test_seed_changes_output(inputs, capsys):
    base = [a for a in subcommand_cases(inputs)["error-scaling"] if a not in ("--seed", "11")]
    cli.run(base + ["--seed", "1"])
    a = capsys.readouterr().out
    cli.run(base + ["--seed", "2"])
    assert a != capsys.readouterr().out


def test_config_defaults_and_tolerances(inputs, capsys):
    argv = ["error-scaling", "--config", inputs["config"], "--n-grid", "10,100"]
    code, report, _ = run_json(argv, capsys)
    assert code == 0
    assert report["seed"] == 7 and report["parameters"]["reps"] == 50
    code, report, _ = run_json(["hm-retrieve", "--model", inputs["model"], "--config", inputs["config"]], capsys)
    assert report["tolerances"]["precision_rel"] == 1e-9


def test_tol_override(inputs, capsys):
    argv = subcommand_cases(inputs)["hm-retrieve"] + ["--tol", "precision_rel=1e-6"]
    _, report, _ = run_json(argv, capsys)
    assert report["tolerances"]["precision_rel"] == 1e-6
    assert cli.run(subcommand_cases(inputs)["hm-retrieve"] + ["--tol", "oops"]) == cli.EXIT_INPUT


def test_invariant_violation_exit_code(inputs, capsys):
    # a negative tolerance cannot be met, so the precision check must fail
    argv = subcommand_cases(inputs)["hm-retrieve"] + ["--tol", "precision_rel=-1"]
    assert cli.run(argv) == cli.EXIT_INVARIANT


def test_negative_model_variance_exit_code(inputs, capsys):
    argv = ["conserve", "--data", inputs["regression"], "--response", "z", "--meas-var", "100"]
    assert cli.run(argv) == cli.EXIT_INVARIANT


def test_numerical_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "singular.json"
    path.write_text(json.dumps({"c": [0.0], "K": [[1.0]], "noise_cov": [[0.0]],
                                "prior_mean": [0.0], "prior_cov": [[1.0]], "z": [1.0]}))
    assert cli.run(["hm-retrieve", "--model", str(path)]) == cli.EXIT_NUMERICAL


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["no-such-command"],
        ["krige", "--sill", "1"],
        ["hm-retrieve", "--model", "/nonexistent.json"],
        ["gamma", "--data", "/nonexistent.csv"],
        ["simpson", "--rho-xy", "0.9", "--rho-wy", "0.9", "--rho-xw", "-0.9"],
    ],
)
def test_input_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        code = cli.run(argv)
        raise SystemExit(code)
    assert exc.value.code == cli.EXIT_INPUT


def test_out_file(inputs, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert cli.run(subcommand_cases(inputs)["gamma"] + ["--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["results"]["gamma"] == pytest.approx(0.8)


def test_csv_table_output(inputs, capsys):
    cli.run(subcommand_cases(inputs)["maup"] + ["--format", "csv"])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "level,n_blocks,correlation"
    assert len(lines) == 3


def test_console_entry_point(inputs):
    out = subprocess.run([sys.executable, "-m", "statprinciples", *subcommand_cases(inputs)["gamma"]],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["results"]["gamma"] == pytest.approx(0.8)
