import json
import math
import subprocess
import sys

import pytest

from tamperbias import bounds
from tamperbias.cli import CSV_COLUMNS, EXIT_CHECK, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from tamperbias.config import SpecError, load_config, parse_call, validate_config


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


BIAS_SMALL = """
kind = "bias"
space = "uniform_bits(6)"
objective = "majority"
[params]
seed = 3
mode = "monte_carlo"
tau = 0.3
gamma = 0.1
sampling = "binomial"
trials = 30
"""


def test_bounds_subcommand_prints_value(capsys):
    assert main(["bounds", "theorem_budget", "n=100", "mu=0.5", "rho=0.99"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "92.07" in out


def test_bounds_from_config(tmp_path, capsys):
    cfg = write(tmp_path, 'kind = "bounds"\n[bounds]\nformula = "budget_upper_bound"\n'
                          'args = { n = 100, mu = 0.5, tau = 0.05, gamma = 0.0 }\n')
    assert main(["bounds", "--config", cfg]) == EXIT_OK
    assert "= 10" in capsys.readouterr().out


def test_bounds_unknown_formula_is_invalid(capsys):
    assert main(["bounds", "nope", "n=1"]) == EXIT_INVALID


def test_verify_exact_small_grid(tmp_path):
    cfg = write(tmp_path, 'kind = "verify_exact"\n[params]\nseed = 0\n[suite]\nns = [3, 4]\ntaus = [0.2, 0.4]\n')
    assert main(["verify-exact", "--config", cfg, "--out", str(tmp_path / "o"), "--check"]) == EXIT_OK
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["pass"] is True
    lines = (tmp_path / "o" / "verify_exact.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 8 * 2


def test_bias_csv_layout(tmp_path):
    cfg = write(tmp_path, BIAS_SMALL)
    out = tmp_path / "o"
    assert main(["bias", "--config", cfg, "--out", str(out)]) == EXIT_OK
    lines = (out / "bias.csv").read_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == 1 + 30 + 1
    assert lines[-1].startswith("summary,")
    # wallclock stays empty without --timings
    assert all(line.endswith(",") for line in lines[1:])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["params"]["k_gain"] == 7733
    assert summary["trials"] == 30


def test_csv_byte_identical_across_runs_and_workers(tmp_path):
    cfg = write(tmp_path, BIAS_SMALL)
    outs = []
    for i, w in enumerate(["1", "4", "4"]):
        out = tmp_path / f"o{i}"
        assert main(["bias", "--config", cfg, "--out", str(out), "--workers", w]) == EXIT_OK
        outs.append(((out / "bias.csv").read_bytes(), (out / "summary.json").read_bytes()))
    assert outs[0][0] == outs[1][0] == outs[2][0]
    assert outs[1] == outs[2]


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, BIAS_SMALL)
    main(["bias", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["bias", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4"])
    assert (tmp_path / "a" / "bias.csv").read_bytes() != (tmp_path / "b" / "bias.csv").read_bytes()


def test_missing_seed_diagnostic(tmp_path, capsys):
    cfg = write(tmp_path, BIAS_SMALL.replace("seed = 3\n", ""))
    assert main(["validate", "--config", cfg]) == EXIT_INVALID
    assert "params.seed required" in capsys.readouterr().out
    assert main(["bias", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "params.seed required" in capsys.readouterr().err


def test_non_enumerable_space_diagnostic(tmp_path, capsys):
    cfg = write(tmp_path, BIAS_SMALL.replace("uniform_bits(6)", "sampled_bits(6)").replace(
        'mode = "monte_carlo"', 'mode = "exact"').replace("gamma = 0.1", "gamma = 0.0"))
    assert main(["validate", "--config", cfg]) == EXIT_INVALID
    assert "exact mode needs enumerable space" in capsys.readouterr().out
    cfg = write(tmp_path, BIAS_SMALL.replace("uniform_bits(6)", "sampled_bits(6)"), "b.toml")
    assert main(["validate", "--config", cfg]) == EXIT_INVALID
    assert "binomial sampling needs enumerable space" in capsys.readouterr().out


def test_tau_gamma_warning_does_not_block(tmp_path, capsys):
    cfg = write(tmp_path, BIAS_SMALL.replace("tau = 0.3", "tau = 0.15"))
    assert main(["validate", "--config", cfg]) == EXIT_OK
    out = capsys.readouterr().out
    assert "warning" in out and "tau <= 2*gamma" in out


@pytest.mark.parametrize("text", [
    'kind = "bias"\nspace = "uniform_bits(4)"\nobjective = "nonsense(1)"\n[params]\nseed = 1\ntau = 0.2\n',
    'kind = "bias"\nspace = "uniform_bits(4)"\nobjective = "and(2"\n[params]\nseed = 1\ntau = 0.2\n',
    'kind = "bias"\nbogus = 1\n',
    'kind = "bias"\nspace = "uniform_bits(4)"\nobjective = "and(2)"\n[params]\nseed = 1\ntau = 2.0\n',
    'kind = "nope"\n',
    'kind = "bias\n',
])
def test_invalid_configs_exit_2(tmp_path, text):
    cfg = write(tmp_path, text)
    assert main(["bias", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_kind_mismatch_exit_2(tmp_path):
    cfg = write(tmp_path, BIAS_SMALL)
    assert main(["evasion", "--config", cfg]) == EXIT_INVALID


def test_missing_config_file_exit_2(tmp_path):
    assert main(["bias", "--config", str(tmp_path / "absent.toml")]) == EXIT_INVALID


def test_runtime_failure_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, BIAS_SMALL.replace('objective = "majority"', "objective = \"external('false')\""))
    assert main(["bias", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "error" in capsys.readouterr().err


def test_check_violation_exit_3(tmp_path):
    # a mis-declared initial mean of 0.9 promises a bias the attack cannot reach from the true 1/8
    text = ('kind = "bias"\nspace = "uniform_bits(3)"\nobjective = "and(3)"\n'
            '[params]\nseed = 2\nmode = "exact"\ntau = 0.4\nmu = 0.9\ntrials = 200\n')
    cfg = write(tmp_path, text)
    out = tmp_path / "o"
    assert main(["bias", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert main(["bias", "--config", cfg, "--out", str(out), "--check"]) == EXIT_CHECK
    summary = json.loads((out / "summary.json").read_text())
    failed = [c for c in summary["comparators"] if not c["pass"]]
    assert [c["formula"] for c in failed] == ["ideal_bias_bound"]
    assert failed[0]["value"] == pytest.approx(1 - math.exp(-0.81 / (6 * 0.16)))


def test_check_passes_on_honest_config(tmp_path):
    text = ('kind = "bias"\nspace = "uniform_bits(3)"\nobjective = "and(3)"\n'
            '[params]\nseed = 2\nmode = "exact"\ntau = 0.4\ntrials = 200\n')
    assert main(["bias", "--config", write(tmp_path, text), "--out", str(tmp_path / "o"), "--check"]) == EXIT_OK


def test_evasion_and_poison_configs(tmp_path):
    assert main(["evasion", "--config", "configs/evasion_and2.toml", "--out", str(tmp_path / "e"), "--check"]) == 0
    s = json.loads((tmp_path / "e" / "summary.json").read_text())
    assert s["adversarial_risk"] == 1.0
    assert main(["poison", "--config", "configs/poison_exact.toml", "--out", str(tmp_path / "p")]) == 0
    header = (tmp_path / "p" / "poisoning.csv").read_text().splitlines()[0].split(",")
    assert header[2] == "m"


def test_timings_fill_wallclock(tmp_path):
    cfg = write(tmp_path, BIAS_SMALL)
    main(["bias", "--config", cfg, "--out", str(tmp_path / "o"), "--timings", "--trials", "3"])
    lines = (tmp_path / "o" / "bias.csv").read_text().splitlines()
    assert all(not line.endswith(",") for line in lines[1:])


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "tamperbias", "bounds", "azuma_approx_bound", "n=100", "tau=0.1",
                        "gamma=0.001", "s=2"], capture_output=True, text=True, timeout=60)
    assert r.returncode == 0
    assert "0.270429" in r.stdout


def test_shipped_configs_validate():
    import glob
    for path in sorted(glob.glob("configs/*.toml")):
        cfg = load_config(path)
        assert not [d for d in validate_config(cfg) if d.severity == "error"], path


def test_parse_call_grammar():
    assert parse_call("and(2)") == ("and", [2], {})
    assert parse_call("majority") == ("majority", [], {})
    assert parse_call("threshold([1, 2], 1.5)") == ("threshold", [[1, 2], 1.5], {})
    assert parse_call("threshold_1d(coord=1)") == ("threshold_1d", [], {"coord": 1})
    for bad in ["and(2", "f(x)", "1abc", "f(__import__('os'))"]:
        with pytest.raises(SpecError):
            parse_call(bad)

