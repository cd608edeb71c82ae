import json
import textwrap

import pytest

from sofof.cli import main
from sofof.config import ConfigError, load_config


def route_toml(points) -> str:
    return "[" + ", ".join(f"[{x}, {y}]" for x, y in points) + "]"


SMALL_LOOP = [(0, 0), (100, 0), (100, 40), (0, 40)] + [(0, 0)]
IN_AREA_ROUTE = [(10 * i, 50) for i in range(1, 10)]
LINE_PATH = [(10 * i, 0) for i in range(1, 11)]


def base_config_text(duration=20_000, area=((-10, -10), (110, -10), (110, 50), (-10, 50))) -> str:
    return textwrap.dedent(
        f"""
        seed = 7
        duration = {duration}
        tick = 10

        [provider]
        station = 0
        connection_point = [50.0, 20.0]
        offloading_area = {route_toml(area)}
        known_map_ids = ["m"]
        t_min = 2.0

        [[provider.services]]
        id = "tpl"
        period = 50
        cpu_cost_active = 19.5
        cpu_cost_deactivated = 8.5

        [latency]
        base_mean = 1.0
        base_std = 0.0
        per_session_mean = 0.0
        per_session_std = 0.0

        [cpu_table]
        TPLa = 19.5
        TPLd = 8.5
        SOFOF_SR = 0.96

        [[vehicles]]
        station = 1
        route = {route_toml(SMALL_LOOP)}
        spawn_offset_m = 0.0
        speed_mps = 10.0
        r_off = 300.0
        d_min = 20.0
        map_id = "m"
        request_timeout = 100

        [vehicles.qos.tpl]
        l_max = 100
        dt_max = 100

        [[vehicles.services]]
        id = "tpl"
        period = 50
        cpu_cost_active = 19.5
        cpu_cost_deactivated = 8.5
        """
    )


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text(base_config_text())
    return path


# --- config loading ------------------------------------------------------------

def test_valid_config_parses(config_file):
    cfg = load_config(config_file)
    assert cfg.seed == 7
    assert cfg.duration == 20_000
    assert cfg.provider.station == 0
    assert cfg.vehicles[0].requester.qos["tpl"].l_max == 100
    assert cfg.vehicles[0].requester.request_timeout == 100
    assert cfg.latency.base_mean == 1.0
    assert cfg.cpu_table.sofof_sr == 0.96
    assert cfg.fifo is False


def test_optional_keys_and_defaults(tmp_path):
    text = base_config_text().replace("tick = 10", "tick = 10\nfifo = true")
    text = text.replace("duration = 20000\n", "")
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.fifo is True
    assert cfg.duration == 300_000  # five simulated minutes by default


def test_missing_required_key_names_it(tmp_path):
    text = base_config_text().replace('known_map_ids = ["m"]\n', "")
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(ConfigError, match="provider.known_map_ids"):
        load_config(path)


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text(base_config_text() + "\n[provider.extras]\nfoo = 1\n")
    with pytest.raises(ConfigError, match="extras"):
        load_config(path)


def test_unknown_top_level_key_rejected(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("typo_key = 1\n" + base_config_text())
    with pytest.raises(ConfigError, match="typo_key"):
        load_config(path)


def test_malformed_toml_reports_line(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("seed = [unclosed\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(path)


def test_wrong_type_rejected(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text(base_config_text().replace("seed = 7", 'seed = "seven"'))
    with pytest.raises(ConfigError, match="seed"):
        load_config(path)


def test_duplicate_station_rejected(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text(base_config_text().replace("station = 1", "station = 0"))
    with pytest.raises(ConfigError, match="unique"):
        load_config(path)


# --- run command -----------------------------------------------------------------

def test_run_writes_artifacts(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(config_file), "-o", str(out)]) == 0
    assert (out / "report.json").exists()
    assert (out / "episodes.csv").exists()
    assert (out / "latency.csv").exists()


def test_run_missing_config_key_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(base_config_text().replace("[provider]\nstation = 0\n", "[provider]\n"))
    assert main(["run", str(path), "-o", str(tmp_path / "out")]) == 2
    assert "provider.station" in capsys.readouterr().err


def test_run_nonexistent_config_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml"), "-o", str(tmp_path / "out")]) == 2


def test_run_unwritable_output_exits_3(config_file, tmp_path, capsys):
    blocker = tmp_path / "blocked"
    blocker.write_text("file, not a directory")
    assert main(["run", str(config_file), "-o", str(blocker / "out")]) == 3


def test_run_seed_override_is_deterministic(config_file, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(config_file), "-o", str(out_a), "--seed", "99"]) == 0
    assert main(["run", str(config_file), "-o", str(out_b), "--seed", "99"]) == 0
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
    assert json.loads((out_a / "report.json").read_text())["seed"] == 99


def test_env_seed_fallback(config_file, tmp_path, monkeypatch):
    out = tmp_path / "out"
    monkeypatch.setenv("SOFOF_SEED", "123")
    assert main(["run", str(config_file), "-o", str(out)]) == 0
    assert json.loads((out / "report.json").read_text())["seed"] == 123


# --- sweep command ----------------------------------------------------------------

def test_sweep_writes_cross_product(config_file, tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", str(config_file), "-o", str(out), "--dt-max", "10,50,100,150", "--n", "1,2"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "n,dt_max_ms,mean_t_off_s"
    assert len(lines) == 1 + 8


def test_sweep_empty_list_exits_2(config_file, tmp_path, capsys):
    assert main(["sweep", str(config_file), "-o", str(tmp_path / "o"), "--dt-max", "", "--n", "1"]) == 2


def test_sweep_single_cell_matches_run_metrics(config_file, tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", str(config_file), "-o", str(out), "--dt-max", "100", "--n", "1"]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("1,100,")


# --- decide command ----------------------------------------------------------------

@pytest.fixture()
def codm_setup(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(base_config_text(area=((0, 0), (100, 0), (100, 100), (0, 100))))
    route = tmp_path / "route.csv"
    route.write_text("\n".join(f"{x},{y}" for x, y in IN_AREA_ROUTE) + "\n")
    return cfg, route


def test_decide_codm_accepts(codm_setup, capsys):
    cfg, route = codm_setup
    assert main(["decide", str(cfg), "--route", str(route), "--codm", "--v", "10", "--t-min", "5"]) == 0
    assert capsys.readouterr().out.strip() == "accept time_in_area=8.000"


def test_decide_codm_declines_high_threshold(codm_setup, capsys):
    cfg, route = codm_setup
    assert main(["decide", str(cfg), "--route", str(route), "--codm", "--v", "10", "--t-min", "10"]) == 0
    assert capsys.readouterr().out.strip() == "decline time_in_area=8.000"


def test_decide_codm_unknown_map(codm_setup, capsys):
    cfg, route = codm_setup
    assert main(["decide", str(cfg), "--route", str(route), "--codm", "--t-min", "5", "--map-unknown"]) == 0
    assert capsys.readouterr().out.startswith("decline")


def test_decide_lodm_declines_long_d_min(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(base_config_text())
    route = tmp_path / "route.csv"
    route.write_text("\n".join(f"{x},{y}" for x, y in LINE_PATH) + "\n")
    code = main(
        ["decide", str(cfg), "--route", str(route), "--lodm",
         "--r-off", "300", "--d-min", "200", "--sr-pos", "0,0", "--sp-pos", "0,0"]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "decline d_passed=100.000"


def test_decide_lodm_accepts(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(base_config_text())
    route = tmp_path / "route.csv"
    route.write_text("\n".join(f"{x},{y}" for x, y in LINE_PATH) + "\n")
    code = main(
        ["decide", str(cfg), "--route", str(route), "--lodm",
         "--r-off", "300", "--d-min", "50", "--sr-pos", "0,0", "--sp-pos", "0,0"]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "accept d_passed=60.000"


def test_decide_malformed_route_exits_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(base_config_text())
    route = tmp_path / "route.csv"
    route.write_text("10,0\nbogus line\n")
    assert main(["decide", str(cfg), "--route", str(route), "--codm"]) == 2


# --- report command -----------------------------------------------------------------

def test_report_summarizes_run(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", str(config_file), "-o", str(out)])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "break-even ratio" in text
    assert "verdict" in text
    assert "vehicle 1" in text


def test_report_empty_directory_exits_2(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 2


def test_report_zero_episode_run_shows_zero_t_off(config_file, tmp_path, capsys):
    # area far away: no episodes at all
    path = tmp_path / "cfg.toml"
    path.write_text(base_config_text(area=((5000, 0), (5100, 0), (5100, 50), (5000, 50))))
    out = tmp_path / "out"
    main(["run", str(path), "-o", str(out)])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "t_off=0.00s" in capsys.readouterr().out
