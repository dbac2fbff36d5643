"""End-to-end checks of the command-line front end.

Exit-code contract: 0 clean, 1 config problems (including malformed
expressions, reported with a character position), 2 violated module
preconditions, 3 failed acceptance checks.  Everything runs in-process
through main() so stderr and exit codes stay observable.
"""

from pathlib import Path

import numpy as np
import pytest

from dbarkit.cli import (EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK,
                         EXIT_PRECONDITION, ConfigError, load_config, main,
                         refinement_study, run, sharpness_battery)
from dbarkit.division import FAIL, PASS
from dbarkit.domains import load_mask

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text):
    path = tmp_path / "exp.ini"
    path.write_text(text)
    return str(path)


def body(csv_path):
    lines = Path(csv_path).read_text().splitlines()
    assert lines[0].startswith("# ")
    return lines[1:]


# ------------------------------------------------------------ exit codes


def test_malformed_expression_exits_1_with_position(tmp_path, capsys):
    cfg = write(tmp_path, "[corona]\nf = sub(1, z)), z\n")
    assert main(["corona", "--config", cfg]) == EXIT_CONFIG
    assert "position" in capsys.readouterr().err


def test_missing_config_file_exits_1(capsys):
    assert main(["domains", "--config", "/no/such/file.ini"]) == EXIT_CONFIG


def test_command_mismatch_exits_1(tmp_path, capsys):
    cfg = write(tmp_path, "[run]\ncommand = corona\n")
    assert main(["cauchy", "--config", cfg]) == EXIT_CONFIG
    assert "declares command" in capsys.readouterr().err


def test_unknown_domain_kind_exits_1(tmp_path, capsys):
    cfg = write(tmp_path, "[domain]\nkind = torus\n\n[lconn]\nz0 = 0+0j\n")
    assert main(["lconn", "--config", cfg]) == EXIT_CONFIG


def test_bad_usage_exits_1(capsys):
    # argparse's own usage failures are config errors here, not exit 2
    assert main(["no_such_command"]) == EXIT_CONFIG


def test_domination_violation_exits_2(capsys):
    rc = main(["divide", "--f", "mul(2, z)", "--g", "z",
               "--power", "2", "--class", "C0"])
    assert rc == EXIT_PRECONDITION
    assert "|f| <= |g|" in capsys.readouterr().err


def test_disconnected_probe_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "[domain]\nkind = sector_chain\ncount = 6\n\n"
                          "[lconn]\nz0 = 0+0j\nscales = 0.2 0.05\nh = 1/256\n")
    assert main(["lconn", "--config", cfg]) == EXIT_PRECONDITION
    assert "disconnected" in capsys.readouterr().err


def test_failed_acceptance_exits_3(tmp_path, capsys):
    cfg = write(tmp_path, "[run]\nlevels = 1/32 1/64\n\n"
                          "[corona]\nf = sub(1, z), z\ndbar_tol = 1e-12\n")
    assert main(["corona", "--config", cfg, "--out", str(tmp_path / "out")]) \
        == EXIT_ACCEPTANCE


# -------------------------------------------------------- config loading


def test_increasing_ladder_rejected(tmp_path):
    cfg = write(tmp_path, "[run]\nlevels = 1/64 1/32\n\n[cauchy]\nf = 1\n")
    assert main(["cauchy", "--config", cfg]) == EXIT_CONFIG


def test_levels_flag_truncates_and_extends():
    cfg = load_config("cauchy", levels=2)
    assert cfg.h_list == (1 / 64, 1 / 128)
    cfg = load_config("cauchy", levels=4)
    assert cfg.h_list == (1 / 64, 1 / 128, 1 / 256, 1 / 512)


def test_default_domain_is_unit_disk():
    cfg = load_config("cauchy")
    assert np.all(cfg.domain.contains(np.array([0j, 0.9j])))
    assert not cfg.domain.contains(1.5 + 0j)


def test_tolerances_must_be_positive(tmp_path):
    cfg = write(tmp_path, "[corona]\nf = z\nresidual_tol = -1\n")
    assert main(["corona", "--config", cfg]) == EXIT_CONFIG


def test_threads_validated(tmp_path):
    assert main(["faa", "--n", "4", "--threads", "0"]) == EXIT_CONFIG


@pytest.mark.parametrize("body_text", [
    "[faa]\nn = \n",
    "[faa]\ntrials = fast\n",
    "[run]\ncommand = faa\nseed = 0x\n",
])
def test_non_integer_keys_rejected(tmp_path, capsys, body_text):
    cfg = write(tmp_path, body_text)
    assert main(["faa", "--config", cfg]) == EXIT_CONFIG
    assert "must be an integer" in capsys.readouterr().err


def test_non_numeric_number_rejected(tmp_path, capsys):
    cfg = write(tmp_path, "[corona]\nf = z\nslope_min = steep\n")
    assert main(["corona", "--config", cfg]) == EXIT_CONFIG
    assert "cannot parse number" in capsys.readouterr().err


# ----------------------------------------------------------- subcommands


def test_faa_table_matches_hand_values(tmp_path):
    out = tmp_path / "out"
    assert main(["faa", "--n", "4", "--out", str(out)]) == EXIT_OK
    rows = [line.split(",") for line in body(out / "faa.csv")[1:]]
    table = {r[1]: int(r[2]) for r in rows}
    assert table == {"4": 1, "3+1": 4, "2+2": 3, "2+1+1": 6, "1+1+1+1": 1}
    assert sum(table.values()) == 15


def test_faa_verify_report(tmp_path):
    cfg = write(tmp_path, "[faa]\ntrials = 25\n")
    out = tmp_path / "out"
    assert main(["faa", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = body(out / "faa.csv")[1:]
    assert len(rows) == 25
    assert all(float(r.split(",")[2]) <= 1e-10 for r in rows)


def test_csv_bodies_are_deterministic(tmp_path):
    cfg = write(tmp_path, "[faa]\ntrials = 15\n")
    bodies = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["faa", "--config", cfg, "--out", str(out)]) == EXIT_OK
        bodies.append(body(out / "faa.csv"))
    assert bodies[0] == bodies[1]


def test_domains_census_and_dump(tmp_path):
    cfg = write(tmp_path, "[domains]\ncomponents = 1\ndump = mask.txt\n")
    out = tmp_path / "out"
    assert main(["domains", "--config", cfg, "--levels", "2",
                 "--out", str(out)]) == EXIT_OK
    rows = [line.split(",") for line in body(out / "domains.csv")[1:]]
    assert len(rows) == 2
    for r in rows:
        assert int(r[4]) > int(r[5]) > 0  # inside > interior > 0
        assert int(r[8]) == 1
    dumped = load_mask(out / "mask.txt")
    assert dumped.counts()["inside"] == int(rows[-1][4])


def test_cauchy_ladder_report():
    cfg = load_config("cauchy", overrides={"f": "conj(z)"})
    cfg.h_list = (1 / 32, 1 / 64)
    rep = run(cfg)
    assert rep.exit_status == EXIT_OK
    assert rep.slopes["max_dev"]["slope"] == pytest.approx(
        1.9600895637894842, rel=1e-9)
    assert rep.rows[-1][3] == pytest.approx(3.505654324251952e-05, rel=1e-9)


def test_cauchy_single_level_has_no_slopes():
    cfg = load_config("cauchy", levels=1)
    rep = run(cfg)
    assert rep.slopes == {} and len(rep.rows) == 1


def test_bezout_both_routes():
    cfg = load_config("bezout", overrides={"f": "z, sub(1, z)"}, levels=1)
    rep = run(cfg)
    assert [r[0] for r in rep.rows] == ["poly", "pou"]
    assert all(r[1] < 1e-12 for r in rep.rows)
    assert rep.rows[0][2] == pytest.approx(1.0, abs=1e-12)  # delta
    assert rep.exit_status == EXIT_OK


def test_corona_report_exact_residual_flag():
    cfg = load_config("corona", overrides={"f": "sub(1, z), z"})
    cfg.h_list = (1 / 32, 1 / 64)
    rep = run(cfg)
    assert rep.exit_status == EXIT_OK
    assert rep.slopes["residual_sup"]["exact"]
    assert rep.slopes["dbar_sup"]["slope"] == pytest.approx(1.9822, abs=2e-3)
    assert rep.rows[-1][3] == pytest.approx(9.179382017550086e-04, rel=1e-6)


def test_divide_inline_flags(tmp_path):
    out = tmp_path / "out"
    rc = main(["divide", "--f", "z", "--g", "conj(z)", "--power", "4",
               "--class", "Dbar1", "--out", str(out)])
    assert rc == EXIT_OK
    rows = [line.split(",") for line in body(out / "divide.csv")[1:]]
    assert {r[0] for r in rows} >= {"value", "dbar", "d_of_dbar"}
    assert all(r[1] == PASS for r in rows)


def test_lconn_disk_csv(tmp_path):
    assert main(["lconn", "--config", str(CONFIG_DIR / "lconn_disk.ini"),
                 "--out", str(tmp_path)]) == EXIT_OK
    rows = [line.split(",") for line in body(tmp_path / "lconn.csv")[1:]]
    assert [r[2] for r in rows] == ["bounded"] * 3
    assert float(rows[0][1]) == pytest.approx(1.0652455355833288, rel=1e-9)


def test_lconn_expectation_mismatch_exits_3(tmp_path):
    cfg = write(tmp_path, "[lconn]\nz0 = 1+0j\nh = 1/64\nexpect = growing\n")
    assert main(["lconn", "--config", cfg]) == EXIT_ACCEPTANCE


def test_lconn_spiral_preset_matches_probe(tmp_path):
    assert main(["lconn", "--config", str(CONFIG_DIR / "lconn_spiral.ini"),
                 "--out", str(tmp_path)]) == EXIT_OK
    rows = [line.split(",") for line in body(tmp_path / "lconn.csv")[1:]]
    ratios = [float(r[1]) for r in rows]
    assert ratios == pytest.approx(
        [1.865714989023406, 3.9249805246659975, 6.60571785891787], rel=1e-9)
    assert all(r[2] == "growing" for r in rows)


def test_taylor_csv_and_expectations(tmp_path):
    out = tmp_path / "out"
    assert main(["taylor", "--config", str(CONFIG_DIR / "taylor_exp.ini"),
                 "--out", str(out)]) == EXIT_OK
    rows = [line.split(",") for line in body(out / "taylor.csv")[1:]]
    assert [int(r[0]) for r in rows] == [0, 1, 2]
    assert [float(r[1]) for r in rows] == pytest.approx(
        [3.016473791990812, 2.0220003286455577, 1.0329958483485353], rel=1e-9)
    # the branch-point quotient misses first-order contact; expect = fail
    cfg = write(tmp_path, "[taylor]\n"
                          "f = exp(mul(0.5, log(sub(1, z))))\n"
                          "z0 = 1+0j\nm = 1\ncoeffs = 0+0j, 0+0j\n"
                          "expect = fail\n")
    assert main(["taylor", "--config", cfg]) == EXIT_OK
    cfg = write(tmp_path, "[taylor]\n"
                          "f = exp(mul(0.5, log(sub(1, z))))\n"
                          "z0 = 1+0j\nm = 1\ncoeffs = 0+0j, 0+0j\n")
    assert main(["taylor", "--config", cfg]) == EXIT_ACCEPTANCE


# ------------------------------------------------------ sharpness battery


@pytest.fixture(scope="module")
def battery():
    return sharpness_battery()


def test_battery_covers_six_items(battery):
    assert len(battery) == 6
    assert sorted(i["power"] for i in battery) == [2, 2, 2, 3, 3, 4]
    assert {i["claimed"] for i in battery} == {"C0", "C1", "A0", "A1", "Dbar1"}


def test_battery_passes_at_power_fails_below(battery):
    for item in battery:
        assert item["verdict_at_power"] == PASS, item["item"]
        assert item["verdict_below"] == FAIL, item["item"]


def test_battery_measured_magnitudes(battery):
    by_name = {i["item"]: i for i in battery}
    # boundary-value spread is 1 by construction one power below
    assert by_name["boundary values"]["measured_below"] == pytest.approx(
        1.0, abs=1e-6)
    # the chain tails differ by |2i - 2| = 2 sqrt(2)
    chain = by_name["holomorphic derivatives, chain"]
    assert chain["measured_below"] == pytest.approx(2 * np.sqrt(2), abs=1e-3)


def test_sharpness_subcommand(tmp_path):
    assert main(["sharpness", "--out", str(tmp_path)]) == EXIT_OK
    rows = body(tmp_path / "sharpness.csv")[1:]
    assert len(rows) == 6


# ------------------------------------------------------ refinement study


def test_refinement_study_needs_three_levels():
    cfg = load_config("cauchy", levels=2)
    with pytest.raises(ConfigError, match="three levels"):
        refinement_study(cfg)


def test_refinement_study_rejects_metric_free_command():
    cfg = load_config("bezout", overrides={"f": "z, sub(1, z)"}, levels=3)
    with pytest.raises(ConfigError, match="no refinement metrics"):
        refinement_study(cfg)


def test_refinement_study_slopes():
    cfg = load_config("cauchy")
    cfg.h_list = (1 / 16, 1 / 32, 1 / 64)
    slopes = refinement_study(cfg)
    assert slopes["max_dev"]["slope"] >= 0.9
    assert not slopes["max_dev"]["exact"]


# -------------------------------------------------------- shipped configs


@pytest.mark.parametrize("cfg_path", sorted(CONFIG_DIR.glob("*.ini")),
                         ids=lambda p: p.stem)
def test_shipped_configs_exit_clean(cfg_path, tmp_path):
    command = None
    for line in cfg_path.read_text().splitlines():
        if line.strip().startswith("command"):
            command = line.split("=")[1].strip()
    assert command is not None
    assert main([command, "--config", str(cfg_path),
                 "--out", str(tmp_path)]) == EXIT_OK
