import math

import numpy as np
import pytest

from cfarfp import config, scenario
from cfarfp.detectors import Kind
from cfarfp.errors import ConfigError, FileFormatError, InvalidParameter
from cfarfp.fileio import write_matrix


def test_defaults():
    cfg = config.load()
    assert cfg.scenario.n == 16 and cfg.scenario.k == 32
    assert cfg.pfa == 1e-3 and cfg.seed == 0
    assert len(cfg.detectors) == len(config.DEFAULT_DETECTORS)
    assert cfg.cloud_cos2theta is None
    assert cfg.conditions == config.CONDITIONS


def test_file_and_overrides(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('pfa = 0.01\ndetectors = ["KELLY", "ACE"]\n[scenario]\nn = 8\nk = 20\nseed = 5\n')
    cfg = config.load(p, ["scenario.seed=9", "gamma_grid_db=[0, 5, 10]"])
    assert (cfg.scenario.n, cfg.scenario.k, cfg.seed) == (8, 20, 9)
    assert cfg.pfa == 0.01
    assert [d.kind for d in cfg.detectors] == [Kind.KELLY, Kind.ACE]
    assert cfg.gamma_grid_db == (0.0, 5.0, 10.0)


def test_parse_value():
    assert config.parse_value("3") == 3
    assert config.parse_value("1e-3") == 1e-3
    assert config.parse_value("[1, 2]") == [1, 2]
    assert config.parse_value("gaussian") == "gaussian"
    assert config.parse_value('"x y"') == "x y"


@pytest.mark.parametrize("items", [["pfa"], ["=3"]])
def test_malformed_override(items):
    with pytest.raises(ConfigError):
        config.parse_overrides(items)


@pytest.mark.parametrize("override", [
    "bogus=1", "pfa=0.7", "pfa=0", "trials_calib=100", "trials_pd=0", "cloud_count=-1",
    "cos2theta_list=[1.2]", "conditions=['H2']", "detectors=['NOPE']", "scenario.n=1.5",
    "detectors=['KALSON:2']", "beta_points=1", "t_max=0", "scenario.clutter=3",
    "cloud_cos2theta=2.0", "gamma_grid_db=[nan]", "detectors=5",
])
def test_validation_errors(override):
    with pytest.raises(ConfigError):
        config.load(None, [override])


def test_scenario_validation_is_value_error():
    with pytest.raises(ValueError):
        config.load(None, ["scenario.n=40"])


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(FileFormatError):
        config.load(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("pfa = = 3\n")
    with pytest.raises(ConfigError):
        config.load(bad)


def test_hash_stability_and_output_dir_exclusion():
    a = config.load(None, ["pfa=0.01"])
    b = config.load(None, ["pfa=0.01", "output_dir='elsewhere'"])
    c = config.load(None, ["pfa=0.02"])
    assert a.sha256 == b.sha256 != c.sha256
    assert len(a.sha256) == 64


def test_custom_covariance(tmp_path):
    c = scenario.clutter_covariance(scenario.ScenarioConfig(n=4, k=10))
    path = tmp_path / "c.txt"
    write_matrix(path, c)
    cfg = config.load(None, ["scenario.n=4", "scenario.k=10", "scenario.clutter='custom'",
                             f"scenario.covariance_path='{path}'"])
    assert "covariance_sha256" in cfg.resolved
    np.testing.assert_allclose(scenario.clutter_covariance(cfg.scenario), c, rtol=1e-12)
    with pytest.raises(FileFormatError):
        config.load(None, ["scenario.clutter='custom'", f"scenario.covariance_path='{tmp_path / 'none.txt'}'"])


def test_custom_covariance_wrong_size(tmp_path):
    path = tmp_path / "c.txt"
    write_matrix(path, np.eye(3))
    with pytest.raises(FileFormatError):
        config.load(None, ["scenario.clutter='custom'", f"scenario.covariance_path='{path}'"])


def test_output_dir_precedence(monkeypatch):
    monkeypatch.delenv(config.OUTPUT_ENV, raising=False)
    assert config.resolve_output_dir("", None) == "cfarfp-out"
    monkeypatch.setenv(config.OUTPUT_ENV, "env-dir")
    assert config.resolve_output_dir("", None) == "env-dir"
    assert config.resolve_output_dir("cfg-dir", None) == "cfg-dir"
    assert config.resolve_output_dir("cfg-dir", "flag-dir") == "flag-dir"


@pytest.mark.parametrize("entry,kind,eps", [
    ("KELLY", Kind.KELLY, 0.0),
    ("kalson:0.3", Kind.KALSON, 0.3),
    (["ROB", 0.2], Kind.ROB, 0.2),
    ({"kind": "CAD", "eps": 0.5}, Kind.CAD, 0.5),
    ("NAT:20dB", Kind.NAT, 100.0),
])
def test_detector_entry_forms(entry, kind, eps):
    spec = config.parse_detector(entry, 16, 32)
    assert spec.kind is kind
    assert spec.eps == pytest.approx(eps)


def test_nat_db_label():
    assert config.parse_detector("NAT:10dB", 16, 32).name == "NAT(10dB)"


def test_iso_snr_entries_are_lin():
    along = config.parse_detector("ISO-SNR:10", 16, 32)
    across = config.parse_detector("PERP-ISO-SNR:10dB", 16, 32)
    assert along.kind is Kind.LIN and across.kind is Kind.LIN
    assert along.eps != across.eps


def test_bad_entry_type():
    with pytest.raises(ConfigError):
        config.parse_detector(3.5, 16, 32)
    with pytest.raises(ConfigError):
        config.parse_detector({"eps": 1}, 16, 32)


def test_resolved_is_json_friendly():
    cfg = config.load()
    assert all(isinstance(d, list) for d in cfg.resolved["detectors"])
    assert not math.isnan(cfg.resolved["cloud_cos2theta"])
    assert isinstance(InvalidParameter("x"), ValueError)
