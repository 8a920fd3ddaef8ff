import csv
import json
import math
import re
import time
from dataclasses import replace

import numpy as np
import pytest

from wgtransport import chiral_exact, cli, oracle, selftest
from wgtransport.params import SystemParams


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


MINIMAL = """
[scenario]
name = g2-curve
[system]
n_emitters = 30
beta = 0.05
"""


def test_minimal_config_defaults():
    cfg = cli.parse_config(MINIMAL)
    assert cfg.params.k0 == 0 and cfg.params.beta_l == 0
    assert cfg.tolerances.rel_tol == 1e-8
    assert cfg.realizations == 100
    assert cfg.seed == 0


def test_range_error_names_key_and_line():
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(MINIMAL.replace("beta = 0.05", "beta = 1.2"))
    (msg,) = info.value.problems
    assert "'beta'" in msg and "line 6" in msg and "out of range" in msg


def test_all_problems_reported_together():
    text = """[scenario]
name = g2-curve
[system]
n_emitters = ten
beta = 0.05
colour = red
[grid]
x_count = 0
[extras]
a = 1
"""
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(text)
    probs = info.value.problems
    assert any("line 4" in p and "integer" in p for p in probs)
    assert any("line 6" in p and "colour" in p for p in probs)
    assert any("line 8" in p and "x_count" in p for p in probs)
    assert any("line 9" in p and "extras" in p for p in probs)
    assert len(probs) == 4


def test_unknown_scenario_and_missing_system():
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config("[scenario]\nname = movie\n")
    assert any("unknown scenario" in p for p in info.value.problems)
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config("[scenario]\nname = g2-curve\n")
    assert sum("missing [system]" in p for p in info.value.problems) == 2


def test_figure4_config_accepted():
    cfg = cli.parse_config(
        """[scenario]
name = bidir-ensemble
[system]
n_emitters = 30
beta = 0.05
beta_l = 0.005
drive = 0.02
[ensemble]
realizations = 100
seed = 2024
"""
    )
    assert cfg.params.beta_l == 0.005 and cfg.realizations == 100 and cfg.seed == 2024


def test_backscatter_rejected_outside_ensemble():
    with pytest.raises(cli.ConfigError):
        cli.parse_config(MINIMAL + "beta_l = 0.01\n")


def test_g2_curve_scenario(tmp_path):
    cfg = cli.parse_config(MINIMAL + "[grid]\nx_min = -2\nx_max = 2\nx_count = 5\n").with_output(tmp_path)
    meta = cli.run_scenario(cfg)
    rows = _rows(tmp_path / "g2.csv")
    assert rows[0] == ["x_gamma_tot", "g2"]
    assert float(rows[3][0]) == 0.0 and float(rows[3][1]) == pytest.approx(47, rel=0.02)
    assert (tmp_path / "g2_asymp.csv").exists()
    saved = json.loads((tmp_path / "metadata.json").read_text())
    assert saved["config"] == json.loads(json.dumps(cfg.snapshot()))
    assert saved["version"] and saved["wall_time_s"] >= 0 and saved["seed"] == 0
    assert meta["files"] == ["g2.csv", "g2_asymp.csv"]


def test_csv_values_round_trip_with_17_digits(tmp_path):
    cli.write_csv(tmp_path / "v.csv", ["a"], [[math.pi, 1e-300, -2.5, 1 / 3]])
    for (text,), ref in zip(_rows(tmp_path / "v.csv")[1:], [math.pi, 1e-300, -2.5, 1 / 3]):
        assert float(text) == ref
    assert _rows(tmp_path / "v.csv")[1][0] == "3.1415926535897931"


def test_power_scan_columns(tmp_path):
    text = """[scenario]
name = power-scan
[system]
n_emitters = 1
beta = 0.05
drive = 0.1
[grid]
n_min = 1
n_max = 100
n_count = 5
"""
    cli.run_scenario(cli.parse_config(text).with_output(tmp_path))
    rows = _rows(tmp_path / "power.csv")
    assert rows[0] == ["n", "linear", "pair", "mixed", "total"]
    assert [int(float(r[0])) for r in rows[1:]] == [1, 3, 10, 32, 100]
    for r in rows[1:]:
        lin, pair, mixed, total = map(float, r[1:])
        assert total == pytest.approx(lin + pair + mixed, rel=1e-15)


def test_spectrum_and_collapse_scenarios(tmp_path):
    spec = "[scenario]\nname = spectrum\n[system]\nn_emitters = 80\nbeta = 0.05\n[grid]\ndelta_count = 11\n"
    cli.run_scenario(cli.parse_config(spec).with_output(tmp_path / "s"))
    assert _rows(tmp_path / "s" / "spectrum.csv")[0] == ["delta_k", "phi_abs2"]
    col = "[scenario]\nname = g2-collapse\n[grid]\nx_min = -5\nx_max = 5\nx_count = 21\n"
    meta = cli.run_scenario(cli.parse_config(col).with_output(tmp_path / "c"))
    assert len(meta["files"]) == 3
    assert meta["max_relative_spread"] < 0.05


def test_experiment_rates_metadata(tmp_path):
    meta = cli.run_scenario(cli.parse_config("[scenario]\nname = experiment-rates\n").with_output(tmp_path))
    assert meta["power_hz"] == pytest.approx(105e3, rel=0.05)
    assert meta["coincidence_hz"] == pytest.approx(1.7e3, rel=0.2)
    assert meta["config"]["gamma_tot_hz"] == pytest.approx(2 * math.pi * 5e6)
    assert {r[0] for r in _rows(tmp_path / "rates.csv")[1:]} >= {"power_hz", "coincidence_hz", "g2_corrected"}


ENSEMBLE = """[scenario]
name = bidir-ensemble
[system]
n_emitters = 6
beta = 0.1
beta_l = 0.02
drive = 0.01
[grid]
x_min = -3
x_max = 3
x_count = 7
[ensemble]
realizations = 8
seed = 17
"""


def test_byte_identical_across_runs_and_threads(tmp_path):
    cfg = _write(tmp_path, ENSEMBLE)
    for i, threads in enumerate(["1", "1", "3"]):
        assert cli.main(["--config", str(cfg), "--out", str(tmp_path / f"o{i}"), "--threads", threads]) == 0
    blobs = [(tmp_path / f"o{i}" / "bidir_g2.csv").read_bytes() for i in range(3)]
    assert blobs[0] == blobs[1] == blobs[2]


def test_seed_override_changes_ensemble(tmp_path):
    cfg = _write(tmp_path, ENSEMBLE)
    cli.main(["--config", str(cfg), "--out", str(tmp_path / "a")])
    cli.main(["--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "18"])
    assert json.loads((tmp_path / "b" / "metadata.json").read_text())["seed"] == 18
    assert (tmp_path / "a" / "bidir_g2.csv").read_bytes() != (tmp_path / "b" / "bidir_g2.csv").read_bytes()


def test_exit_code_config_error(tmp_path, capsys):
    assert cli.main(["--config", str(_write(tmp_path, "[scenario]\nname = nope\n"))]) == 2
    assert "unknown scenario" in capsys.readouterr().err
    assert cli.main([]) == 2
    assert cli.main(["--config", str(_write(tmp_path, MINIMAL)), "--threads", "-1"]) == 2


def test_exit_code_numerical_failure(tmp_path):
    text = "[scenario]\nname = spectrum\n[system]\nn_emitters = 120\nbeta = 0.45\n[grid]\ndelta_count = 5\n"
    assert cli.main(["--config", str(_write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 3


def test_exit_code_io_failure(tmp_path):
    assert cli.main(["--config", str(tmp_path / "absent.ini")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["--config", str(_write(tmp_path, MINIMAL)), "--out", str(blocker / "sub")]) == 4


def test_selftest_passes(capsys):
    assert cli.main(["--selftest"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-1] == f"{len(selftest._CHECKS)}/{len(selftest._CHECKS)} checks passed"
    assert all(line.startswith("PASS") for line in out[:-1])


def test_selftest_failure_exit_code(monkeypatch):
    monkeypatch.setattr(selftest, "_CHECKS", [("always fails", lambda: (False, "forced"))])
    assert cli.main(["--selftest"]) == 1


def _check(name):
    return dict(selftest._CHECKS)[name]


def test_mutation_flipped_chi_sign_is_caught(monkeypatch):
    """Negating the correlated kernel must break oracle equivalence."""
    orig = chiral_exact._expansion

    def flipped(n, beta, k0):
        e = orig(n, beta, k0)
        return replace(e, poly=tuple(-c for c in e.poly))

    name = "oracle: quadrature matches closed form"
    assert _check(name)()[0]
    monkeypatch.setattr(chiral_exact, "_expansion", flipped)
    passed, detail = _check(name)()
    assert not passed, detail


def test_tighter_tolerance_converges_within_runtime_budget():
    p = SystemParams(20, 0.05)
    x = np.linspace(-25, 25, 200)
    base, tight = oracle.QuadratureSpec(), oracle.QuadratureSpec(1e-12, 1e-10)
    oracle.psi_x_quadrature(p, x, base)  # warm caches
    t0 = time.perf_counter()
    v1, e1 = oracle.psi_x_quadrature(p, x, base)
    t1 = time.perf_counter()
    v2, _ = oracle.psi_x_quadrature(p, x, tight)
    t2 = time.perf_counter()
    assert np.all(np.abs(v1 - v2) <= e1)
    assert np.max(np.abs(v2 - chiral_exact.psi_exact(p, x))) < 1e-9
    assert (t2 - t1) <= 10 * (t1 - t0)


def test_n_for_linear_transmission():
    n = cli.n_for_linear_transmission(0.05, 1e-6)
    assert n == 66 and re.fullmatch(r"\d+", str(n))
