import csv
import io
import math
from pathlib import Path

import numpy as np
import pytest

from twinlev.cli import main
from twinlev.config import KEY_DOCS, RunConfig, parse_config
from twinlev.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
PAPER = str(ROOT / "configs" / "paper.cfg")
FIG3A = str(ROOT / "configs" / "fig3a.cfg")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_derive_paper_config(capsys):
    code, out, _ = run(capsys, "--config", PAPER, "derive")
    assert code == 0
    table = {r["quantity"]: float(r["value"]) for r in rows(out)}
    assert abs(table["omega0_over_2pi"] - 108e3) < 1e3
    assert abs(table["gamma_sc_over_omega0"] - 0.1) < 0.005
    assert abs(table["eta_eff"] - 0.38) < 0.01
    assert table["coupling_over_omega0"] >= 2.5


def test_empty_config_gives_defaults(tmp_path, capsys):
    empty = tmp_path / "empty.cfg"
    empty.write_text("# nothing\n")
    echo = tmp_path / "echo.cfg"
    code, out, _ = run(capsys, "--config", str(empty), "--echo-config", str(echo), "derive")
    assert code == 0
    assert parse_config(echo.read_text()) == RunConfig()
    _, ref, _ = run(capsys, "derive")
    assert out == ref


def test_echo_round_trip(tmp_path, capsys):
    echo = tmp_path / "echo.cfg"
    run(capsys, "--config", FIG3A, "--seed", "17", "--echo-config", str(echo), "derive")
    cfg = parse_config(echo.read_text())
    assert cfg.seed == 17 and cfg.model == "dimensionless"
    assert parse_config(cfg.to_text()) == cfg


@pytest.mark.parametrize("text,key", [
    ("power_w = lots\n", "power_w"),
    ("no_such_key = 1\n", "no_such_key"),
    ("eta_in = 0.3\neta_in = 0.4\n", "eta_in"),
    ("gamma_plus = -1\n", "gamma_plus"),
    ("sweep_param = radius_m\n", "sweep_param"),
])
def test_config_errors_exit_2(tmp_path, capsys, text, key):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    code, out, err = run(capsys, "--config", str(p), "derive")
    assert code == 2 and out == ""
    assert key in err


def test_physical_validation_names_key(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("eta_in = 1.5\n")
    code, _, err = run(capsys, "--config", str(p), "derive")
    assert code == 2 and "eta_in" in err


def test_missing_file_exit_2(capsys):
    code, _, err = run(capsys, "--config", "/nonexistent/x.cfg", "derive")
    assert code == 2


def test_unstable_trap_exit_1(tmp_path, capsys):
    p = tmp_path / "rep.cfg"
    p.write_text("charge2_e = 250\n")
    code, out, err = run(capsys, "--config", str(p), "derive")
    assert code == 1 and "UnstableTrap" in err


def test_every_key_documented():
    assert set(KEY_DOCS) == {f for f in RunConfig.__dataclass_fields__}


def test_psd_empty_range(tmp_path, capsys):
    p = tmp_path / "psd.cfg"
    p.write_text("psd_min_over_omega0 = 2\npsd_max_over_omega0 = 2\n")
    code, out, _ = run(capsys, "--config", str(p), "psd")
    assert code == 0
    assert out == "omega_rad_s,mode,channel,value_si\n"


def test_psd_spectrum(tmp_path, capsys):
    p = tmp_path / "psd.cfg"
    p.write_text("psd_points = 20\npsd_inner_points = 21\ngamma_plus = 0.1\ngamma_minus = 0.1\n")
    code, out, _ = run(capsys, "--config", str(p), "psd")
    assert code == 0
    r = rows(out)
    assert {(x["mode"], x["channel"]) for x in r} == {("+", "in"), ("+", "out"), ("-", "in"), ("-", "out")}
    assert all(math.isfinite(float(x["value_si"])) and float(x["value_si"]) > 0 for x in r)


def test_psd_recoil_panel_minimum_on_sql(tmp_path, capsys):
    p = tmp_path / "psd.cfg"
    p.write_text("model = dimensionless\nomega0_rad_s = 677603.3\neta_eff = 0.35\neta_out = 0.05\n"
                 "coupling_over_omega0 = 0.1\ngamma_minus = 0.1\ngamma_plus = 0.1\n"
                 "psd_panel = recoil\npsd_min_over_omega0 = 1e-3\npsd_max_over_omega0 = 10\npsd_points = 2001\n")
    code, out, _ = run(capsys, "--config", str(p), "psd")
    assert code == 0
    r = [x for x in rows(out) if x["mode"] == "-" and x["channel"] == "out"]
    vals = np.array([float(x["noise_normalized"]) for x in r])
    ws = math.sqrt(1.4)
    sql = ws * math.sqrt(1 / 0.35 + 1 / 0.05)
    assert abs(vals.min() / sql - 1) < 1e-4


def test_sql_command(capsys):
    code, out, _ = run(capsys, "--config", PAPER, "sql")
    assert code == 0
    for r in rows(out):
        assert abs(float(r["rel_diff"])) < 1e-6


def test_negativity_sweep_monotone(tmp_path, capsys):
    p = tmp_path / "neg.cfg"
    p.write_text(Path(FIG3A).read_text().replace("sweep_points = 41", "sweep_points = 21")
                 .replace("negativity_kind = both", "negativity_kind = unconditional"))
    code, out, _ = run(capsys, "--config", str(p), "--threads", "2", "negativity")
    assert code == 0
    r = rows(out)
    g = np.array([float(x["g_over_omega0"]) for x in r])
    E = np.array([float(x["E_N"]) for x in r])
    assert np.all(np.diff(g) > 0)
    on = E > 0
    assert on.any() and not on[0]
    first = np.argmax(on)
    assert np.all(np.diff(E[first:]) >= 0)


def test_outputs_byte_stable(tmp_path, capsys):
    p = tmp_path / "neg.cfg"
    p.write_text(Path(FIG3A).read_text().replace("sweep_points = 41", "sweep_points = 5"))
    a = run(capsys, "--config", str(p), "negativity")[1]
    b = run(capsys, "--config", str(p), "--threads", "3", "negativity")[1]
    assert a == b
    s = tmp_path / "sim.cfg"
    s.write_text(Path(FIG3A).read_text().replace("n_traj = 100", "n_traj = 0")
                 .replace("duration_s = 400", "duration_s = 5"))
    a = run(capsys, "--config", str(s), "simulate")[1]
    b = run(capsys, "--config", str(s), "simulate")[1]
    assert a == b and a.startswith("t_s,x_plus")
    c = run(capsys, "--config", str(s), "--seed", "2", "simulate")[1]
    assert c != a


def test_simulate_comparison_report(tmp_path, capsys):
    s = tmp_path / "sim.cfg"
    s.write_text(Path(FIG3A).read_text().replace("n_traj = 100", "n_traj = 20")
                 .replace("duration_s = 400", "duration_s = 200"))
    traj = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "--config", str(s), "--out", str(traj), "simulate")
    assert code == 0
    assert traj.read_text().startswith("t_s,")
    r = rows(out)
    assert len(r) == 6
    for x in r:
        if x["moment"] != "XP":
            z = abs(float(x["monte_carlo"]) - float(x["exact_realized_filter"])) / float(x["standard_error"])
            assert z < 4


def test_demo_electron(capsys):
    code, out, _ = run(capsys, "--config", PAPER, "demo-electron")
    assert code == 0
    assert float(rows(out)[0]["snr"]) >= 1


def test_equilibrium_command(capsys):
    code, out, _ = run(capsys, "--config", PAPER, "equilibrium")
    assert code == 0
    r = rows(out)[0]
    assert float(r["y01_m"]) == 0.0 and r["stable_x"] == "true"


def test_out_file(tmp_path, capsys):
    out = tmp_path / "d.csv"
    code, text, _ = run(capsys, "--config", PAPER, "--out", str(out), "derive")
    assert code == 0 and text == ""
    assert out.read_text().startswith("quantity,value,unit")
