import csv
import io
import json

import numpy as np
import pytest

from coupled_cfmm import coupled_market as cm
from coupled_cfmm import scenario_cli as cli
from coupled_cfmm.cfmm_core import input_for_drift, quote_drift, swap_exact_in

BASE = {
    "reserves": {"x": 1e7, "y1": 4.5e8, "y2": 7.2e7, "z": 1e9},
    "fees": {"fee1": 0.03, "fee2": 0.03},
    "sweep": {"mu_min": 0.0, "mu_max": 2.0, "points": 5, "spacing": "linear"},
    "surface": {"d_mu_min": 0.01, "d_mu_max": 0.02, "d_mu_points": 2},
}


def read_csv(text):
    lines = text.splitlines()
    assert lines[0] == cli.VERSION_LINE
    rows = list(csv.reader(lines[1:]))
    return rows[0], [[float(v) if v else None for v in r] for r in rows[1:]]


def write_config(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data, indent=2))
    return str(p)


# --- config -------------------------------------------------------------------


def test_preset_is_case_study():
    cfg = cli.load_preset("paper-case-study")
    assert cfg.state == cm.CASE_STUDY
    assert len(cfg.sweep.grid()) == 100
    assert cfg.sweep.grid()[0] == 0.0 and cfg.sweep.grid()[-1] == 2.0
    assert cfg.surface.grid()[-1] == pytest.approx(0.1)


def test_unknown_key_reports_line_and_field():
    text = json.dumps({**BASE, "sweep": {**BASE["sweep"], "pionts": 3}}, indent=2)
    with pytest.raises(cli.ConfigError, match=r"line \d+, field 'sweep.pionts': unknown key"):
        cli.loads_config(text)
    line = int(str(pytest.raises(cli.ConfigError, cli.loads_config, text).value).split(",")[0].split()[1])
    assert '"pionts"' in text.splitlines()[line - 1]


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"fees": {"fee1": 1.0, "fee2": 0.0}}, "fees.fee1"),
        ({"reserves": {"x": -1, "y1": 1, "y2": 1, "z": 1}}, "reserves.x"),
        ({"sweep": {"mu_min": 1.0, "mu_max": 0.5, "points": 3}}, "sweep.mu_max"),
        ({"sweep": {"mu_min": 0.0, "mu_max": 1.0, "points": 1}}, "sweep.points"),
        ({"sweep": {"mu_min": 0.0, "mu_max": 1.0, "points": 3, "spacing": "log"}}, "sweep.mu_min"),
        ({"sweep": {"mu_min": 0.0, "mu_max": 1.0, "points": 2.5}}, "sweep.points"),
        ({"surface": {"d_mu_min": 0.01, "d_mu_max": 0.5, "d_mu_points": 3}}, "surface.d_mu_max"),
        ({"reserves": {"x": "1", "y1": 1, "y2": 1, "z": 1}}, "reserves.x"),
        ({"extra": 1}, "extra"),
    ],
)
def test_invalid_configs(patch, field):
    with pytest.raises(cli.ConfigError, match=f"field '{field}'"):
        cli.parse_config({**BASE, **patch})


def test_missing_block_and_bad_json():
    data = dict(BASE)
    del data["fees"]
    with pytest.raises(cli.ConfigError, match="fees"):
        cli.parse_config(data)
    with pytest.raises(cli.ConfigError, match="line 2"):
        cli.loads_config('{\n  "reserves": ,\n}')


def test_log_spacing():
    cfg = cli.parse_config({**BASE, "sweep": {"mu_min": 1e-3, "mu_max": 1.0, "points": 4, "spacing": "log"}})
    assert np.allclose(cfg.sweep.grid(), [1e-3, 1e-2, 1e-1, 1.0])


# --- commands -------------------------------------------------------------------


def test_purchase_sweep_rows(tmp_path, capsys):
    assert cli.main(["purchase-sweep", "--config", write_config(tmp_path, BASE)]) == 0
    header, rows = read_csv(capsys.readouterr().out)
    assert tuple(header) == cli.PURCHASE_COLUMNS
    assert rows[0][0] == 0.0 and rows[0][2] == 0.0
    assert all(r[2] > 0 for r in rows[1:])
    mu_z = [r[4] for r in rows]
    assert all(a < b for a, b in zip(mu_z, mu_z[1:]))


def test_liquidation_sweep_rows(tmp_path):
    out = tmp_path / "liq.csv"
    assert cli.main(["liquidation-sweep", "--config", write_config(tmp_path, BASE), "--out", str(out)]) == 0
    header, rows = read_csv(out.read_text())
    assert tuple(header) == cli.LIQUIDATION_COLUMNS
    assert all(v == 0 for v in rows[0][1:4])
    assert all(r[2] <= 0 for r in rows)
    state = cm.CASE_STUDY
    sell_z, sell_y = state.pool2.flipped(), state.pool1.flipped()
    for r in rows:
        y = swap_exact_in(sell_z, input_for_drift(sell_z, r[0])).amount_out
        assert r[3] == pytest.approx(quote_drift(sell_y, y), rel=1e-9, abs=1e-300)


def test_surface_rows(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["surface", "--event", "purchase", "--config", write_config(tmp_path, BASE), "--out", str(out)]) == 0
    header, rows = read_csv(out.read_text())
    assert tuple(header) == cli.SURFACE_COLUMNS
    assert len(rows) == 5 * 2
    # first-order limit: marginal output / (|order1| d_mu) -> 1
    r = cm.marginal_output_purchase(cm.CASE_STUDY, 0.5, 1e-6)
    assert r.marginal_output / (abs(r.order1) * 1e-6) == pytest.approx(1.0, abs=1e-5)


def test_surface_requires_block(tmp_path, capsys):
    data = {k: v for k, v in BASE.items() if k != "surface"}
    assert cli.main(["surface", "--config", write_config(tmp_path, data)]) == cli.EXIT_CONFIG
    assert "surface" in capsys.readouterr().err


def test_transmission_rows(tmp_path, capsys):
    assert cli.main(["transmission", "--config", write_config(tmp_path, BASE)]) == 0
    header, rows = read_csv(capsys.readouterr().out)
    assert tuple(header) == cli.TRANSMISSION_COLUMNS
    assert rows[0] == [0.0, 0.0, 0.0]


def test_output_path_from_config(tmp_path):
    target = tmp_path / "from_cfg.csv"
    cfg = write_config(tmp_path, {**BASE, "output_path": str(target)})
    assert cli.main(["transmission", "--config", cfg]) == 0
    assert target.read_text().startswith(cli.VERSION_LINE)


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["transmission", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text('{"reserves": {"x": 1}}')
    assert cli.main(["transmission", "--config", str(bad)]) == cli.EXIT_CONFIG
    out = tmp_path / "no_such_dir" / "x.csv"
    assert cli.main(["transmission", "--config", write_config(tmp_path, BASE), "--out", str(out)]) == cli.EXIT_IO
    with pytest.raises(SystemExit):
        cli.main(["transmission", "--preset", "nope"])


def test_verify_default_and_repeatable(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["verify", "--out", str(a)]) == 0
    assert cli.main(["verify", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["passed"] and report["checks"]
    assert "all checks passed" in capsys.readouterr().out


def test_verify_flags_corrupted_closed_form(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(cm, "cpmm_value_discrepancy_liquidation", lambda s, m: 0.0)
    code = cli.main(["verify", "--config", write_config(tmp_path, BASE), "--out", str(tmp_path / "r.json")])
    assert code == cli.EXIT_VERIFY
    assert "FAILED: value_liquidation_closed_form" in capsys.readouterr().out


def test_render_csv_formatting():
    text = cli.render_csv(("a", "b"), [(0.1, None), (1e-300, 2)])
    assert text == f"{cli.VERSION_LINE}\na,b\n0.1,\n1e-300,2.0\n"
    # shortest round-trip: reload is lossless
    assert float(next(csv.reader(io.StringIO(text.splitlines()[3])))[0]) == 1e-300
