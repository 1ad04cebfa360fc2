import pytest

from cqedsim.config import load_device, table1_device_path, validate_config
from cqedsim.errors import ConfigError

TABLE1_TEXT = """\
f01_ghz = 7.203
alpha_q_mhz = -225.0
asym = 0.324
omega_c_ghz = 6.002
kappa_mhz = 1.38
g_mhz = 87.0
t1_us = 2.11
"""


def write(tmp_path, text, name="dev.device"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_shipped_table1_valid_no_warnings():
    report = validate_config(table1_device_path())
    assert report.ok
    assert report.warnings == []
    assert report.errors == []


def test_observable_route_derives_ej_ec(tmp_path):
    report = validate_config(write(tmp_path, TABLE1_TEXT))
    assert report.ok
    # E_C from the transmon identification, E_J consistent with the
    # quoted maximum Josephson energy
    assert report.resolved["ec_ghz"] == pytest.approx(0.225, rel=1e-6)
    assert report.resolved["ej_max_ghz"] == pytest.approx(30.65, rel=0.01)


def test_asym_out_of_bounds_names_field(tmp_path):
    report = validate_config(write(tmp_path, TABLE1_TEXT.replace(
        "asym = 0.324", "asym = 1.3")))
    assert not report.ok
    assert any("asym" in e and "[0, 1]" in e for e in report.errors)


def test_unknown_key_is_error(tmp_path):
    report = validate_config(write(tmp_path, TABLE1_TEXT + "bogus_key = 1\n"))
    assert not report.ok
    assert any("bogus_key" in e for e in report.errors)


def test_over_determined_transmon(tmp_path):
    report = validate_config(write(tmp_path, TABLE1_TEXT + "ej_max_ghz = 30.65\n"))
    assert not report.ok
    assert any("over-determined" in e for e in report.errors)


def test_direct_route(tmp_path):
    text = TABLE1_TEXT.replace("f01_ghz = 7.203\nalpha_q_mhz = -225.0\n",
                               "ej_max_ghz = 30.65\nec_ghz = 0.225\n")
    loaded = load_device(write(tmp_path, text))
    assert loaded.device.transmon.ej_max == 30.65
    assert loaded.device.transmon.ec == 0.225


def test_parse_error_reports_line_and_col(tmp_path):
    report = validate_config(write(tmp_path, "f01_ghz = abc\nnonsense line\n"))
    assert not report.ok
    assert any("line 1" in e and "col" in e for e in report.errors)
    assert any("line 2" in e for e in report.errors)


def test_no_fail_fast_lists_everything(tmp_path):
    report = validate_config(write(tmp_path, "asym = 1.5\nkappa_mhz = -2\n"))
    # parse succeeded, so we get: missing transmon route, missing required
    # keys, and both bound violations, all in one report
    assert not report.ok
    assert len(report.errors) >= 4


def test_duplicate_key(tmp_path):
    report = validate_config(write(tmp_path, TABLE1_TEXT + "g_mhz = 12\n"))
    assert not report.ok
    assert any("duplicate" in e for e in report.errors)


def test_missing_file():
    report = validate_config("/nonexistent/file.device")
    assert not report.ok


def test_load_device_applies_defaults(tmp_path):
    loaded = load_device(write(tmp_path, TABLE1_TEXT))
    assert loaded.device.transmon.ng == 0.0
    assert loaded.device.transmon.n_cut == 30
    assert loaded.device.dissipation.gamma_phi == 0.0
    assert loaded.n_q == 5
    assert loaded.n_c == 6


def test_load_device_raises_on_invalid(tmp_path):
    with pytest.raises(ConfigError):
        load_device(write(tmp_path, "asym = 2.0\n"))


def test_truncation_overrides(tmp_path):
    loaded = load_device(write(tmp_path, TABLE1_TEXT + "n_cut = 35\nn_q = 4\nn_c = 7\n"))
    assert loaded.device.transmon.n_cut == 35
    assert loaded.n_q == 4
    assert loaded.n_c == 7
